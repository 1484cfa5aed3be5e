import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from boltzsde.rng import ParticleStream, stream_key_py, stream_keys, uniform, uniform_np, uniform_py

seeds = st.integers(0, 2 ** 63 - 1)
indices = st.integers(0, 2 ** 40)


@given(seeds, indices, st.sampled_from([1, -1]), st.integers(0, 10 ** 6))
def test_three_implementations_agree_bitwise(seed, index, sense, counter):
    key_py = stream_key_py(seed, sense, index)
    key_np = stream_keys(seed, sense, np.array([index]))[0]
    assert int(key_np) == key_py
    a = uniform_py(key_py, counter)
    b = uniform(np.uint64(key_py), counter)
    c = uniform_np(np.array([key_py], dtype=np.uint64), np.array([counter]))[0]
    assert a == b == c
    assert 0.0 <= a < 1.0


def test_stream_draws_advance_the_counter():
    s = ParticleStream(9, index=4)
    first = [s.uniform() for _ in range(5)]
    assert s.counter == 5
    again = ParticleStream(9, index=4).uniforms(5)
    assert np.array_equal(first, again)


def test_senses_and_particles_get_distinct_streams():
    keys = {stream_key_py(1, s, i) for s in (1, -1) for i in range(1000)}
    assert len(keys) == 2000


def test_uniforms_look_uniform():
    from scipy import stats

    keys = stream_keys(5, 1, np.arange(200_000))
    u = uniform_np(keys, np.zeros(keys.size, dtype=np.int64))
    assert stats.kstest(u, "uniform").pvalue > 0.01
    v = uniform_np(keys, np.ones(keys.size, dtype=np.int64))
    assert abs(np.corrcoef(u, v)[0, 1]) < 0.01
