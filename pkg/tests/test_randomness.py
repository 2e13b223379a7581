import math

import numpy as np
import scipy.stats

from dprelease.randomness import laplace, secure_source, seeded_source


def test_uniforms_open_interval_and_shape():
    rng = secure_source()
    u = rng.uniforms(100_000)
    assert u.shape == (100_000,)
    assert np.all(u > 0.0) and np.all(u < 1.0)
    assert abs(u.mean() - 0.5) < 0.01


def test_seeded_source_reproducible():
    a = seeded_source(99).uniforms(1000)
    b = seeded_source(99).uniforms(1000)
    c = seeded_source(100).uniforms(1000)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert seeded_source(5).bits(64) == seeded_source(5).bits(64)


def test_bits_in_range():
    rng = secure_source()
    for k in (1, 8, 52, 64, 128):
        for _ in range(50):
            assert 0 <= rng.bits(k) < (1 << k)


def test_integer_uniform():
    rng = seeded_source(1)
    draws = [rng.integer(7) for _ in range(2000)]
    assert set(draws) == set(range(7))


def test_laplace_rejects_bad_scale():
    rng = seeded_source(0)
    for bad in (0.0, -1.0, float("nan"), float("inf")):
        try:
            laplace(bad, rng)
        except Exception:
            continue
        raise AssertionError(f"scale {bad} accepted")


def test_laplace_empirical_mean():
    # E X = 0; mean of 1e6 draws concentrates within 5 * scale * 1e-3
    rng = seeded_source(2024)
    scale = 3.7
    draws = laplace(scale, rng, size=1_000_000)
    assert abs(float(draws.mean())) < 5e-3 * scale


def test_laplace_tail_probability():
    # P(|X| > scale ln 20) = 1/20
    rng = seeded_source(7)
    scale = 0.8
    draws = laplace(scale, rng, size=1_000_000)
    frac = float(np.mean(np.abs(draws) > scale * math.log(20.0)))
    assert abs(frac - 0.05) < 0.01


def test_laplace_kolmogorov_smirnov():
    rng = seeded_source(11)
    scale = 2.5
    draws = laplace(scale, rng, size=1_000_000)
    stat, _ = scipy.stats.kstest(draws, scipy.stats.laplace(scale=scale).cdf)
    assert stat < 0.002
