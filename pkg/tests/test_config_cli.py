import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from boltzsde.cli import main
from boltzsde.config import ConfigValidationError, load_config, preset


def small_doc(**kw):
    doc = preset(mesh={"ds": 0.04, "da": 0.1}, particles={"forward_per_cell": 2, "adjoint_per_cell": 3},
                 oracle={"n_cells": 100, "n_ordinates": 16}).model_dump(mode="json")
    doc.update(kw)
    return doc


def write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def test_preset_values():
    c = preset()
    assert c.domain.x == (-1.0, 1.0) and c.domain.omega == (-1.0, 1.0)
    assert (c.cross_sections.sigma_a, c.cross_sections.sigma_s) == (5.0, 2.5)
    assert c.source.x == (0.29, 0.69) and c.detector.x == (-0.22, -0.06)
    assert (c.mesh.ds, c.mesh.da, c.dt, c.v) == (0.01, 0.01, 0.01, 1.0)
    assert (c.particles.forward_per_cell, c.particles.adjoint_per_cell) == (61, 147)
    assert c.kernel.kind == "uniform-isotropic"
    f = c.build_source()
    assert f.value == pytest.approx(1 / (0.4 * 2.0))


def test_every_error_is_reported():
    doc = small_doc()
    doc.pop("seed")
    doc["dt"] = -0.1
    doc["colour"] = "blue"
    with pytest.raises(ConfigValidationError) as info:
        load_config(doc)
    text = "\n".join(info.value.errors)
    assert "seed" in text and "dt" in text and "colour" in text
    assert len(info.value.errors) >= 3


@pytest.mark.parametrize("patch", [
    {"cross_sections": {"sigma_a": -1.0, "sigma_s": 0.0}},
    {"source": {"x": [0.5, 0.1]}},
    {"domain": {"x": [-1.0, 1.0], "omega": [-2.0, 1.0]}},
    {"kernel": {"kind": "tabulated-discrete"}},
    {"kernel": {"kind": "tabulated-discrete", "omega_edges": [-1, 0, 1], "table": [[1, 0], [0, 0]]}},
    {"mesh": {"ds": 0.0, "da": 0.01}},
])
def test_invalid_values_are_rejected(patch):
    with pytest.raises(ConfigValidationError):
        load_config(small_doc(**patch))


def test_config_hash_ignores_key_order():
    doc = small_doc()
    again = dict(reversed(list(doc.items())))
    assert load_config(doc).config_hash() == load_config(again).config_hash()


def test_cli_exit_codes(tmp_path, capsys):
    good = write(tmp_path / "good.json", small_doc(output_dir=str(tmp_path / "out")))
    assert main(["run", good]) == 0
    out = capsys.readouterr().out
    assert "response_forward" in out and "duality_gap_z" in out
    bad = write(tmp_path / "bad.json", {"dt": 0})
    assert main(["run", bad]) == 2
    assert main(["run", str(tmp_path / "missing.json")]) == 2
    # a runtime failure: outputs cannot be written
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", good, "--out", str(blocker / "sub")]) == 3


def test_cli_preset_dump_and_overrides(capsys):
    assert main(["preset", "slab-fluence", "--seed", "5", "--mesh-convention", "x-nodes",
                 "--particles-per-cell-forward", "3", "--dump-config"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["seed"] == 5 and doc["mesh"]["convention"] == "x-nodes"
    assert doc["particles"]["forward_per_cell"] == 3


def test_cli_oracle_and_diff(tmp_path, capsys):
    cfg = write(tmp_path / "c.json", small_doc())
    assert main(["oracle", cfg, "--out", str(tmp_path / "o")]) == 0
    assert "sn_duality_rel_gap" in capsys.readouterr().out
    assert main(["run", cfg, "--out", str(tmp_path / "r")]) == 0
    capsys.readouterr()
    a = str(tmp_path / "r" / "flux_from_adjoint.csv")
    b = str(tmp_path / "r" / "forward_flux_tally.csv")
    assert main(["diff", a, b, "--norm", "linf"]) == 0
    val = float(capsys.readouterr().out)
    assert val >= 0
    assert main(["diff", a, a]) == 0
    assert float(capsys.readouterr().out) == 0.0
    assert main(["diff", a, str(tmp_path / "o" / "sn_adjoint_flux.csv")]) == 2


def test_manifest_reproduces_outputs(tmp_path, capsys):
    cfg = write(tmp_path / "c.json", small_doc())
    assert main(["run", cfg, "--out", str(tmp_path / "a")]) == 0
    manifest = tmp_path / "a" / "manifest.json"
    assert main(["run", str(manifest), "--out", str(tmp_path / "b")]) == 0
    assert "outputs match the manifest" in capsys.readouterr().out
    # tampering with a recorded hash is detected
    doc = json.loads(manifest.read_text())
    doc["outputs"]["summary.txt"] = "0" * 64
    tampered = write(tmp_path / "m.json", doc)
    assert main(["run", tampered, "--out", str(tmp_path / "c")]) == 3


def _outputs(d):
    return {p.name: p.read_bytes() for p in Path(d).iterdir() if p.name != "run_info.json"}


def test_outputs_do_not_depend_on_worker_count(tmp_path):
    cfg = write(tmp_path / "c.json", small_doc(
        particles={"forward_per_cell": 20, "adjoint_per_cell": 20}))
    env = dict(os.environ, NUMBA_NUM_THREADS="4")
    for w in ("1", "4"):
        subprocess.run([sys.executable, "-m", "boltzsde.cli", "run", cfg, "--out", str(tmp_path / w),
                        "--workers", w], env=env, check=True, capture_output=True)
    a, b = _outputs(tmp_path / "1"), _outputs(tmp_path / "4")
    assert a.keys() == b.keys() and len(a) > 5
    assert a == b
    info = json.loads((tmp_path / "4" / "run_info.json").read_text())
    assert info["workers"] == 4


def test_preset_alias_names_the_same_experiment():
    assert preset("paper-sec-3-1") == preset("slab-fluence")
    with pytest.raises(ConfigValidationError):
        preset("nope")
