import numpy as np
import pytest
from scipy.stats import wasserstein_distance

from artifact import analysis as A
from artifact.codec import SymbolStream


def direct_dft(x):
    h, w = x.shape
    fy = np.exp(-2j * np.pi * np.outer(np.arange(h), np.arange(h)) / h)
    fx = np.exp(-2j * np.pi * np.outer(np.arange(w), np.arange(w)) / w)
    return fy @ x @ fx.T / np.sqrt(h * w)


def test_bit_accuracy_basic():
    a = SymbolStream(np.array([0, 1, 1, 0]), 4)
    assert A.bit_accuracy(a, a, 1) == 1.0
    assert A.bit_accuracy(a, SymbolStream(1 - a.symbols, 4), 1) == 0.0


def test_bit_accuracy_excludes_padding():
    a = SymbolStream(np.array([3, 0]), 2)
    b = SymbolStream(np.array([3, 3]), 2)
    assert A.bit_accuracy(a, b, 2) == 1.0


def test_bit_accuracy_random_streams(rng):
    a = SymbolStream(rng.integers(0, 2, 100_000), 100_000)
    b = SymbolStream(rng.integers(0, 2, 100_000), 100_000)
    assert abs(A.bit_accuracy(a, b, 1) - 0.5) < 0.005


def test_bit_accuracy_length_mismatch():
    with pytest.raises(ValueError):
        A.bit_accuracy(SymbolStream(np.zeros(3, int), 3), SymbolStream(np.zeros(4, int), 4), 1)


def test_residuals_zero_when_identical(rng):
    x = rng.standard_normal((5, 3, 4, 4))
    s, c = A.residual_stats(x, x, x)
    assert np.all(s.mean_abs == 0) and s.histogram[0] == 1.0
    assert s.histogram.sum() == pytest.approx(1.0, abs=1e-12)


def test_residual_histograms_share_grid(rng):
    b = rng.standard_normal((8, 10))
    s, c = A.residual_stats(b + 0.1 * rng.standard_normal((8, 10)), b, b + rng.standard_normal((8, 10)))
    assert np.array_equal(s.edges, c.edges)
    assert len(s.edges) == A.HIST_BINS + 1
    assert abs(s.histogram.sum() - 1) < 1e-12 and abs(c.histogram.sum() - 1) < 1e-12
    assert s.mean_abs.shape == (10,) and np.all(s.mean_abs >= 0)


def test_residual_shape_mismatch(rng):
    with pytest.raises(ValueError):
        A.residual_stats(np.zeros((2, 3)), np.zeros((3, 3)), np.zeros((2, 3)))


def test_wasserstein_matches_scipy_on_bin_centres(rng):
    edges = np.linspace(0, 1, 65)
    ha, hb = rng.random(64), rng.random(64)
    centres = 0.5 * (edges[1:] + edges[:-1])
    ref = wasserstein_distance(centres, centres, ha, hb)
    assert A.wasserstein(ha, hb, edges) == pytest.approx(ref, rel=1e-12)


def test_power_spectrum_matches_direct_dft(rng):
    x = rng.standard_normal((12, 10))
    ref = np.fft.fftshift(np.abs(direct_dft(x)) ** 2)
    assert np.allclose(A.power_spectrum(x), ref, rtol=0, atol=1e-12)


def test_parseval(rng):
    for shape in [(16, 16), (7, 9), (64, 64)]:
        x = rng.standard_normal(shape)
        sp = A.power_spectrum(x)
        assert abs(sp.sum() / np.sum(x**2) - 1) < 1e-9


def test_impulse_is_flat():
    x = np.zeros((16, 16))
    x[8, 8] = 1.0
    r = A.radial_power_spectrum(x)
    assert np.allclose(r.power, 1 / 256, rtol=0, atol=1e-15)
    assert r.dc == pytest.approx(1 / 256)


def test_constant_plane_all_dc():
    r = A.radial_power_spectrum(np.full((16, 16), 0.7))
    assert r.dc == pytest.approx(0.49 * 256)
    assert np.max(r.power) < 1e-12


def test_white_noise_flat_on_average():
    rng = np.random.default_rng(7)
    spec = A.mean_radial_spectrum(rng.standard_normal((512, 16, 16)))
    assert np.all(np.abs(spec.power / spec.power.mean() - 1) < 0.10)
    assert np.all(np.diff(spec.radii) > 0)


def test_spectrum_size_and_rank_guards():
    with pytest.raises(ValueError):
        A.radial_power_spectrum(np.zeros((65, 8)))
    with pytest.raises(ValueError):
        A.radial_power_spectrum(np.zeros(8))
