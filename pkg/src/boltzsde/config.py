"""Experiment configuration documents (JSON).

Units: positions in cm, cross sections in 1/cm, ``v`` in cm per unit time,
``dt`` in time units.  Unknown keys are rejected and every invalid field is
reported at once.
"""

from __future__ import annotations

import hashlib
import json
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .phase_domain import (
    MESH_CONVENTIONS,
    ConfigurationError,
    CrossSectionField,
    CrossSectionOverride,
    Domain,
    Rect,
    RegionDensity,
    ScatterKernel,
)

PRESETS = ("slab-fluence", "paper-sec-3-1")
_ALIASES = {"paper-sec-3-1": "slab-fluence"}
Pair = Tuple[float, float]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _ordered(v, name):
    if v is not None and not v[0] <= v[1]:
        raise ValueError(f"{name} must satisfy lo <= hi")
    return v


class DomainSpec(_Strict):
    x: Pair
    omega: Pair = (-1.0, 1.0)
    energy: Optional[Pair] = None

    @field_validator("x", "omega", "energy")
    @classmethod
    def _order(cls, v, info):
        return _ordered(v, info.field_name)

    @field_validator("omega")
    @classmethod
    def _cosine(cls, v):
        if v[0] < -1 or v[1] > 1:
            raise ValueError("omega bounds must lie in [-1, 1]")
        return v


class OverrideSpec(_Strict):
    x: Pair
    omega: Pair = (-1.0, 1.0)
    energy: Optional[Pair] = None
    sigma_a: float = Field(ge=0)
    sigma_s: float = Field(ge=0)


class CrossSectionSpec(_Strict):
    sigma_a: float = Field(ge=0)
    sigma_s: float = Field(ge=0)
    overrides: List[OverrideSpec] = []


class RegionSpec(_Strict):
    x: Pair
    omega: Pair = (-1.0, 1.0)
    energy: Optional[Pair] = None
    normalized: bool = True
    value: float = Field(1.0, gt=0)

    @field_validator("x", "omega", "energy")
    @classmethod
    def _order(cls, v, info):
        return _ordered(v, info.field_name)


class KernelSpec(_Strict):
    kind: Literal["uniform-isotropic", "tabulated-discrete"] = "uniform-isotropic"
    omega_edges: Optional[List[float]] = None
    energy_edges: Optional[List[float]] = None
    table: Optional[List[List[float]]] = None

    @model_validator(mode="after")
    def _tabulated_fields(self):
        if self.kind == "tabulated-discrete" and (self.omega_edges is None or self.table is None):
            raise ValueError("tabulated-discrete kernels need omega_edges and table")
        return self


class MeshSpec(_Strict):
    ds: float = Field(gt=0)
    da: float = Field(gt=0)
    convention: Literal[MESH_CONVENTIONS] = "centers"


class ParticleSpec(_Strict):
    forward_per_cell: Optional[int] = Field(None, ge=1)
    adjoint_per_cell: Optional[int] = Field(None, ge=1)
    forward_total: Optional[int] = Field(None, ge=1)
    adjoint_total: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _one_each(self):
        for side in ("forward", "adjoint"):
            a, b = getattr(self, f"{side}_per_cell"), getattr(self, f"{side}_total")
            if a is not None and b is not None:
                raise ValueError(f"give {side}_per_cell or {side}_total, not both")
        return self


class EstimatorSpec(_Strict):
    absorption_mode: Literal["weighted", "analog"] = "weighted"
    exact_events: bool = False
    boundary_forward: float = 0.0
    boundary_adjoint: float = 0.0
    record_trajectories: bool = False


class OracleSpec(_Strict):
    n_cells: int = Field(2000, ge=1)
    n_ordinates: int = Field(200, ge=2)
    quadrature: Literal["gauss-legendre", "equal-weight"] = "equal-weight"
    tol: float = Field(1e-8, gt=0)
    max_iter: int = Field(10_000, ge=1)


class ExperimentConfig(_Strict):
    domain: DomainSpec
    cross_sections: CrossSectionSpec
    source: RegionSpec
    detector: RegionSpec
    kernel: KernelSpec = KernelSpec()
    mesh: MeshSpec
    dt: float = Field(gt=0)
    v: float = Field(1.0, gt=0)
    max_steps: int = Field(10 ** 6, ge=1)
    particles: ParticleSpec
    seed: int = Field(ge=0, lt=2 ** 63)
    mode: Literal["forward", "adjoint", "both", "oracle"] = "both"
    estimators: EstimatorSpec = EstimatorSpec()
    oracle: OracleSpec = OracleSpec()
    output_dir: str = "out"

    @model_validator(mode="after")
    def _counts_for_mode(self):
        need = {"forward": ("forward",), "adjoint": ("adjoint",), "both": ("forward", "adjoint"),
                "oracle": ()}[self.mode]
        missing = [s for s in need
                   if getattr(self.particles, f"{s}_per_cell") is None
                   and getattr(self.particles, f"{s}_total") is None]
        if missing:
            raise ValueError(f"mode {self.mode!r} needs particle counts for: {', '.join(missing)}")
        return self

    # -- builders

    def build_domain(self) -> Domain:
        d = self.domain
        return Domain(d.x, d.omega, d.energy)

    def build_cross_sections(self) -> CrossSectionField:
        c = self.cross_sections
        ov = [CrossSectionOverride(Rect(o.x, o.omega, o.energy), o.sigma_a, o.sigma_s) for o in c.overrides]
        return CrossSectionField(c.sigma_a, c.sigma_s, ov)

    def build_kernel(self) -> ScatterKernel:
        k = self.kernel
        if k.kind == "uniform-isotropic":
            return ScatterKernel.uniform(self.domain.omega, self.domain.energy)
        return ScatterKernel.tabulated(k.omega_edges, k.table, k.energy_edges)

    @staticmethod
    def _region(r: RegionSpec) -> RegionDensity:
        return RegionDensity.indicator(Rect(r.x, r.omega, r.energy), normalized=r.normalized, value=r.value)

    def build_source(self) -> RegionDensity:
        return self._region(self.source)

    def build_detector(self) -> RegionDensity:
        return self._region(self.detector)

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def _format_errors(err: ValidationError):
    out = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        out.append(f"{loc}: {e['msg']}")
    return out


class ConfigValidationError(ConfigurationError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


def load_config(document) -> ExperimentConfig:
    """Validate a config given as a dict, a JSON string, a path, or a preset name.

    A manifest document (one that embeds a ``config``) is accepted as well.
    """
    if isinstance(document, ExperimentConfig):
        return document
    if isinstance(document, str) and document in PRESETS:
        return preset(document)
    if isinstance(document, (str, bytes)) or hasattr(document, "__fspath__"):
        text = str(document)
        if not text.lstrip().startswith("{"):
            try:
                with open(text) as fh:
                    text = fh.read()
            except OSError as exc:
                raise ConfigValidationError([f"cannot read config: {exc}"]) from None
        try:
            document = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigValidationError([f"not valid JSON: {exc}"]) from None
    if not isinstance(document, dict):
        raise ConfigValidationError(["config document must be a JSON object"])
    if "config" in document and "outputs" in document:
        document = document["config"]
    try:
        cfg = ExperimentConfig.model_validate(document)
    except ValidationError as exc:
        raise ConfigValidationError(_format_errors(exc)) from None
    try:
        cfg.build_domain()
        cfg.build_cross_sections()
        cfg.build_kernel()
        cfg.build_source()
        cfg.build_detector()
    except (ConfigurationError, ValueError) as exc:
        raise ConfigValidationError([str(exc)]) from None
    return cfg


def preset(name="slab-fluence", **overrides) -> ExperimentConfig:
    """Built-in experiment; keyword overrides replace top-level or nested fields."""
    if name not in PRESETS:
        raise ConfigValidationError([f"unknown preset {name!r}; available: {', '.join(PRESETS)}"])
    name = _ALIASES.get(name, name)
    doc = {
        "domain": {"x": [-1.0, 1.0], "omega": [-1.0, 1.0]},
        "cross_sections": {"sigma_a": 5.0, "sigma_s": 2.5},
        "source": {"x": [0.29, 0.69], "omega": [-1.0, 1.0]},
        "detector": {"x": [-0.22, -0.06], "omega": [-1.0, 1.0]},
        "kernel": {"kind": "uniform-isotropic"},
        "mesh": {"ds": 0.01, "da": 0.01, "convention": "centers"},
        "dt": 0.01,
        "v": 1.0,
        "max_steps": 10 ** 6,
        "particles": {"forward_per_cell": 61, "adjoint_per_cell": 147},
        "seed": 20240101,
        "mode": "both",
        "output_dir": "out",
    }
    for key, val in overrides.items():
        if val is None:
            continue
        if isinstance(val, dict) and isinstance(doc.get(key), dict):
            doc[key] = {**doc[key], **val}
        else:
            doc[key] = val
    return load_config(doc)
