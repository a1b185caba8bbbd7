"""Desk-scale experiments: KL tables, attack sweeps, residual and manifold diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import analysis, channels, codec, diffusion, gaussianity, prng
from .channels import ChannelSpec
from .pipeline import PipelineConfig, baseline_noise, control_noise, recover, render

# (Q, S, printed D_KL) anchors of the optimized-scale table, pixel rows with Q <= 4
OPTIMIZED_ANCHORS = (
    (1, 0.0938, 1.93e-12), (2, 0.2111, 5.52e-11), (4, 0.5768, 2.63e-08),
    (1, 0.0992, 3.02e-12), (2, 0.1966, 3.13e-11), (4, 0.5413, 1.60e-08),
)
# Q = 4 scale sweep
SWEEP_ANCHORS = (
    (4, 0.20, 6.11e-12), (4, 0.40, 1.50e-09), (4, 0.5768, 2.63e-08), (4, 0.60, 3.57e-08),
    (4, 0.80, 3.23e-07), (4, 1.00, 1.73e-06), (4, 1.50, 2.98e-05),
)

KL_COLUMNS = ("Q", "S", "dkl", "kappa4", "kappa6", "kappa8", "kappa10", "kappa4_share",
              "outside_validity")


def kl_row(Q: int, S: float) -> dict:
    c = gaussianity.cumulants(S, Q)
    return {
        "Q": Q, "S": S, "dkl": gaussianity.analytic_kl(S, Q),
        "kappa4": c.kappa4, "kappa6": c.kappa6, "kappa8": c.kappa8, "kappa10": c.kappa10,
        "kappa4_share": gaussianity.kappa4_share(S, Q),
        "outside_validity": int(gaussianity.outside_validity(S, Q)),
    }


def kl_table(points) -> list[dict]:
    return [kl_row(Q, S) for Q, S in points]


# --------------------------------------------------------------------------
# hide / attack / extract over many seeds


def _seed_payloads(pc: PipelineConfig, seeds) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Full-capacity symbols and the keyed noise per seed; each seed has its own key."""
    syms, noises = [], []
    for s in seeds:
        rng = np.random.default_rng([0x5EED, int(s)])
        key = prng.random_key(rng)
        syms.append(rng.integers(0, pc.codec.levels, size=pc.codec.dims))
        noises.append(codec.aux_noise(pc.with_key(key).codec))
    syms, noises = np.stack(syms), np.stack(noises)
    x_T = codec.map_symbols(syms, pc.codec, noise=noises)
    return syms, noises, x_T


def attacked_bar(pc: PipelineConfig, spec: ChannelSpec | None, seeds) -> float:
    """Mean bit accuracy over seeds; each seed draws its own payload, key and channel noise."""
    seeds = list(seeds)
    syms, noises, x_T = _seed_payloads(pc, seeds)
    samples = render(x_T, pc)
    shape = pc.shape or (pc.pixel_dims,)
    if spec is not None:
        samples = np.stack([
            channels.apply_channel(spec, samples[i].reshape(shape), rng_seed=s,
                                   ae=pc.autoencoder).ravel()
            for i, s in enumerate(seeds)
        ])
    x_hat = recover(samples, pc)
    m_hat = codec.quantize_estimate(codec.continuous_estimate(x_hat, pc.codec, noise=noises), pc.codec.Q)
    bits = codec.symbols_to_bits(syms, pc.codec.Q)
    bits_hat = codec.symbols_to_bits(m_hat, pc.codec.Q)
    return analysis.bit_agreement(bits, bits_hat)


def robustness_rows(pcs: dict[str, PipelineConfig], specs, seeds) -> list[dict]:
    rows = []
    for name, pc in pcs.items():
        rows.append({"pipeline": name, "Q": pc.codec.Q, "S": pc.codec.S, "attack": "none",
                     "BAR": attacked_bar(pc, None, seeds)})
        for text in specs:
            spec = channels.parse_spec(text)
            rows.append({"pipeline": name, "Q": pc.codec.Q, "S": pc.codec.S, "attack": spec.label(),
                         "BAR": attacked_bar(pc, spec, seeds)})
    return rows


# --------------------------------------------------------------------------
# residual statistics


@dataclass(frozen=True)
class ResidualReport:
    stego: analysis.ResidualStats
    control: analysis.ResidualStats
    shift: float


def residual_report(pc: PipelineConfig, batch: int = 64, seed: int = 0) -> ResidualReport:
    """Stego and energy-matched control residuals against the keyed-noise baseline."""
    rng = np.random.default_rng([0xD1FF, seed])
    syms = rng.integers(0, pc.codec.levels, size=(batch, pc.codec.dims))
    x_s = codec.map_symbols(syms, pc.codec)
    out = [render(x, pc) for x in (x_s, baseline_noise(pc, batch), control_noise(pc, batch))]
    stego, control = analysis.residual_stats(*out)
    return ResidualReport(stego, control, analysis.residual_shift(stego, control))


# --------------------------------------------------------------------------
# encoder regularization


def manifold_reduction(pc: PipelineConfig, sigma: float, batch: int = 512, seed: int = 0) -> float:
    """Fraction of samples whose re-encoded latent after AWGN is closer to the prior centre
    than the clean generated latent."""
    if pc.mode != "latent":
        raise ValueError("manifold diagnostic needs the latent pipeline")
    rng = np.random.default_rng([0x3A7F, seed])
    syms = rng.integers(0, pc.codec.levels, size=(batch, pc.codec.dims))
    x_T = codec.map_symbols(syms, pc.codec)
    z0 = diffusion.generate(pc.model, pc.schedule, x_T, pc.solver("generate"))
    x = render(x_T, pc)
    attacked = channels.apply_channel(ChannelSpec("awgn", sigma=sigma), x, rng_seed=seed)
    z = channels.ae_encode(pc.autoencoder, attacked).reshape(batch, -1)
    return float(np.mean(channels.manifold_distances(z) < channels.manifold_distances(z0)))
