"""Accuracy metrics, residual statistics and radially averaged power spectra."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import SymbolStream, symbols_to_bits

MAX_SPECTRUM_SIDE = 64
HIST_BINS = 128


def symbol_accuracy(m_orig, m_hat) -> float:
    a = np.asarray(getattr(m_orig, "symbols", m_orig)).ravel()
    b = np.asarray(getattr(m_hat, "symbols", m_hat)).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    return float(np.mean(a == b)) if a.size else 1.0


def bit_accuracy(m_orig: SymbolStream, m_hat: SymbolStream, Q: int) -> float:
    """Fraction of equal payload bits; padding bits are excluded."""
    if len(m_orig) != len(m_hat):
        raise ValueError(f"length mismatch: {len(m_orig)} vs {len(m_hat)} symbols")
    n = m_orig.payload_len_bits
    a = symbols_to_bits(np.asarray(m_orig.symbols).ravel(), Q)[:n]
    b = symbols_to_bits(np.asarray(m_hat.symbols).ravel(), Q)[:n]
    return bit_agreement(a, b)


def bit_agreement(a, b) -> float:
    a, b = np.asarray(a).ravel(), np.asarray(b).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size} bits")
    return float(np.mean(a == b)) if a.size else 1.0


# --------------------------------------------------------------------------
# residuals


@dataclass(frozen=True)
class ResidualStats:
    mean_abs: np.ndarray
    histogram: np.ndarray
    edges: np.ndarray
    batch: int
    energy: float = 0.0  # mean squared residual per component

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])


def _stats(res: np.ndarray, edges: np.ndarray) -> ResidualStats:
    counts, _ = np.histogram(res, bins=edges)
    hist = counts / counts.sum()
    return ResidualStats(mean_abs=res.mean(axis=0), histogram=hist, edges=edges, batch=res.shape[0],
                         energy=float(np.mean(res * res)))


def residual_stats(stego_batch, baseline_batch, control_batch,
                   bins: int = HIST_BINS) -> tuple[ResidualStats, ResidualStats]:
    """|stego - baseline| and |control - baseline| on one shared histogram grid."""
    s, b, c = (np.asarray(a, dtype=np.float64) for a in (stego_batch, baseline_batch, control_batch))
    if not s.shape == b.shape == c.shape:
        raise ValueError(f"shape mismatch: {s.shape}, {b.shape}, {c.shape}")
    if s.ndim < 1 or s.shape[0] == 0:
        raise ValueError("need a non-empty batch along axis 0")
    rs, rc = np.abs(s - b), np.abs(c - b)
    top = max(float(rs.max()), float(rc.max()))
    if top == 0.0:
        top = 1.0
    edges = np.linspace(0.0, top, bins + 1)
    return _stats(rs, edges), _stats(rc, edges)


def wasserstein(hist_a: np.ndarray, hist_b: np.ndarray, edges: np.ndarray) -> float:
    """W1 between two histograms on the same grid, mass placed at bin centres."""
    hist_a, hist_b = np.asarray(hist_a, float), np.asarray(hist_b, float)
    if hist_a.shape != hist_b.shape or len(edges) != len(hist_a) + 1:
        raise ValueError("histograms and edges disagree")
    cdf_gap = np.cumsum(hist_a / hist_a.sum() - hist_b / hist_b.sum())[:-1]
    centers = 0.5 * (edges[1:] + edges[:-1])
    return float(np.sum(np.abs(cdf_gap) * np.diff(centers)))


def residual_shift(stego: ResidualStats, control: ResidualStats) -> float:
    return wasserstein(stego.histogram, control.histogram, stego.edges)


# --------------------------------------------------------------------------
# spectra


@dataclass(frozen=True)
class RadialSpectrum:
    radii: np.ndarray
    power: np.ndarray
    dc: float


def power_spectrum(plane: np.ndarray) -> np.ndarray:
    """|F|^2 of the orthonormal 2-D DFT, zero frequency shifted to the centre."""
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2:
        raise ValueError(f"expected a 2-D plane, got shape {plane.shape}")
    h, w = plane.shape
    if h > MAX_SPECTRUM_SIDE or w > MAX_SPECTRUM_SIDE:
        raise ValueError(f"plane {h}x{w} exceeds {MAX_SPECTRUM_SIDE}x{MAX_SPECTRUM_SIDE}")
    f = np.fft.fftshift(np.fft.fft2(plane, norm="ortho"))
    return f.real**2 + f.imag**2


def radial_power_spectrum(plane: np.ndarray) -> RadialSpectrum:
    p = power_spectrum(plane)
    h, w = p.shape
    cy, cx = h // 2, w // 2
    yy, xx = np.indices(p.shape)
    r = np.rint(np.hypot(yy - cy, xx - cx)).astype(np.int64)
    dc = float(p[cy, cx])
    ring = r > 0
    sums = np.bincount(r[ring], weights=p[ring])
    counts = np.bincount(r[ring])
    keep = counts > 0
    keep[0] = False
    radii = np.nonzero(keep)[0].astype(np.float64)
    return RadialSpectrum(radii=radii, power=sums[keep] / counts[keep], dc=dc)


def mean_radial_spectrum(planes) -> RadialSpectrum:
    """Average of ``radial_power_spectrum`` over a stack of planes (..., H, W)."""
    planes = np.asarray(planes, dtype=np.float64)
    flat = planes.reshape(-1, *planes.shape[-2:])
    specs = [radial_power_spectrum(pl) for pl in flat]
    return RadialSpectrum(radii=specs[0].radii,
                          power=np.mean([s.power for s in specs], axis=0),
                          dc=float(np.mean([s.dc for s in specs])))
