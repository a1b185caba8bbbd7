"""Adaptive search for the scale factor S at fixed Q.

The loss is L_retr(S) + beta_eff * L_sec(D_KL(S)). L_retr is the mean absolute
error of the continuous (pre-rounding) symbol estimate; beta_eff switches
between three stages depending on how the current accuracy compares with the
target. S is updated in log space from a central finite difference evaluated
with common random numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import channels, codec, gaussianity, prng
from .analysis import symbol_accuracy
from .channels import ChannelSpec
from .pipeline import PipelineConfig, recover, render

S_MAX = 64.0
KL_FLOOR = 1e-300
KL_CEIL = 1.0 - 1e-12

# default Acc_target per Q
PIXEL_TARGETS = {1: 0.9999, 2: 0.99, 4: 0.97, 8: 0.95}
LATENT_TARGETS = {1: 0.9999, 2: 0.98, 4: 0.96, 8: 0.90}


class Infeasible(RuntimeError):
    """No scale up to the cap met the accuracy target on validation."""


class Gamma(NamedTuple):
    deficit: float = 0.01
    approaching: float = 1.0
    achieved: float = 100.0


@dataclass(frozen=True)
class OptConfig:
    pipeline: PipelineConfig
    Acc_target: float = 0.9999
    beta_base: float = 1.0
    gamma: Gamma = Gamma()
    delta1: float = 0.01
    eta: float = 0.05
    batch: int = 64
    max_iters: int = 300
    converge_window: int = 20
    S0: float = 1.0
    S_max: float = S_MAX
    fd_step: float = 1e-2
    max_log_step: float = 0.5
    validation_batch: int | None = None
    channel: ChannelSpec | None = None
    seed: int = 0
    beta_override: float | None = None

    def __post_init__(self):
        g = Gamma(*self.gamma)
        object.__setattr__(self, "gamma", g)
        if not g.deficit < g.approaching < g.achieved:
            raise ValueError("gamma must be strictly increasing: deficit < approaching < achieved")
        if not 0 < self.Acc_target <= 1:
            raise ValueError("Acc_target must lie in (0, 1]")
        if not 0 < self.delta1 < self.Acc_target:
            raise ValueError("delta1 must lie in (0, Acc_target)")
        if self.beta_base <= 0 or self.eta <= 0:
            raise ValueError("beta_base and eta must be positive")
        if self.batch < 1 or self.max_iters < 1 or self.converge_window < 1:
            raise ValueError("batch, max_iters and converge_window must be >= 1")
        if not 0 < self.S0 <= self.S_max:
            raise ValueError("S0 must lie in (0, S_max]")

    @property
    def Q(self) -> int:
        return self.pipeline.codec.Q


@dataclass(frozen=True)
class OptState:
    S: float
    Acc_curr: float
    L_retr: float
    D_KL: float
    beta_eff: float
    iter: int
    grad: float = 0.0


@dataclass
class OptResult:
    S_star: float | None
    feasible: bool
    trace: list[OptState]
    validation_acc: float | None
    converged: bool
    diagnostic: str = ""
    history: list[float] = field(default_factory=list)

    def raise_if_infeasible(self) -> float:
        if not self.feasible:
            raise Infeasible(self.diagnostic)
        return self.S_star


class RoundTrip(NamedTuple):
    acc: float
    l_retr: float
    cont_mean_abs_err: float
    cont_max_abs_err: float


def retrieval_loss(m_orig, m_cont) -> float:
    a = np.asarray(getattr(m_orig, "symbols", m_orig), dtype=np.float64).ravel()
    b = np.asarray(m_cont, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} symbols vs {b.size} estimates")
    return float(np.mean(np.abs(b - a)))


def adapt_weight(Acc_curr: float, Acc_target: float, delta1: float, beta_base: float,
                 gamma=Gamma()) -> float:
    g = Gamma(*gamma)
    if Acc_curr >= Acc_target:
        return beta_base * g.achieved
    if Acc_curr >= Acc_target - delta1:
        return beta_base * g.approaching
    return beta_base * g.deficit


def clamp_kl(dkl: float) -> float:
    return min(max(dkl, KL_FLOOR), KL_CEIL)


def total_loss(L_retr: float, dkl: float, beta_eff: float) -> float:
    if beta_eff == 0:
        return L_retr
    return L_retr + beta_eff * gaussianity.security_loss(dkl)


def _security_term(S: float, Q: int) -> float:
    return gaussianity.security_loss(clamp_kl(gaussianity.analytic_kl(S, Q)))


class _Batch(NamedTuple):
    symbols: np.ndarray
    key: bytes
    channel_seed: int
    decoder_seed: int


def _draw_batch(cfg: OptConfig, seed: int, batch: int) -> _Batch:
    """Messages, key and channel draws for one seed; independent of S."""
    pc = cfg.pipeline
    rng = np.random.default_rng([cfg.seed, seed])
    symbols = rng.integers(0, pc.codec.levels, size=(batch, pc.codec.dims))
    key = prng.random_key(rng)
    ch_seed, dec_seed = (int(v) for v in rng.integers(0, 2**63 - 1, size=2))
    return _Batch(symbols, key, ch_seed, dec_seed)


def _estimates(scales, b: _Batch, cfg: OptConfig) -> list[np.ndarray]:
    """Continuous symbol estimates for several S values, stacked into one solver call."""
    pc = cfg.pipeline.with_key(b.key)
    noise = codec.aux_noise(pc.codec, b.symbols.size).reshape(b.symbols.shape)
    params = [pc.codec.with_scale(S) for S in scales]
    x_T = np.concatenate([codec.map_symbols(b.symbols, p, noise=noise) for p in params])
    samples = render(x_T, pc, decoder_seed=b.decoder_seed)
    if cfg.channel is not None:
        n = len(b.symbols)
        shaped = samples.reshape(len(samples), *(pc.shape or (pc.pixel_dims,)))
        # same channel draw for every S
        samples = np.concatenate([
            channels.apply_channel(cfg.channel, shaped[i * n:(i + 1) * n], b.channel_seed,
                                   ae=pc.autoencoder)
            for i in range(len(params))
        ]).reshape(len(samples), -1)
    x_hat = recover(samples, pc)
    n = len(b.symbols)
    return [codec.continuous_estimate(x_hat[i * n:(i + 1) * n], p, noise=noise)
            for i, p in enumerate(params)]


def _summarize(m_cont: np.ndarray, symbols: np.ndarray, Q: int) -> RoundTrip:
    m_hat = codec.quantize_estimate(m_cont, Q)
    err = np.abs(m_cont - symbols)
    return RoundTrip(acc=symbol_accuracy(symbols, m_hat), l_retr=float(err.mean()),
                     cont_mean_abs_err=float(err.mean()), cont_max_abs_err=float(err.max()))


def roundtrip_eval(S: float, cfg: OptConfig, seed: int, batch: int | None = None) -> RoundTrip:
    """Hide and extract a batch of uniform messages at scale S.

    The seed fixes messages, key, decoder noise and channel draws, so two
    calls with the same seed differ only through S.
    """
    b = _draw_batch(cfg, seed, cfg.batch if batch is None else batch)
    return _summarize(_estimates([S], b, cfg)[0], b.symbols, cfg.Q)


def fd_gradient(S: float, cfg: OptConfig, seed: int, beta_eff: float | None = None,
                common: bool = True) -> tuple[float, RoundTrip, float]:
    """Central difference of the total loss in log S.

    ``beta_eff=None`` picks the stage weight from the accuracy at S.
    ``common=False`` draws independent batches for the two probes.
    Returns (gradient, round trip at S, beta_eff used).
    """
    h = cfg.fd_step
    s_lo, s_hi = S * math.exp(-h), S * math.exp(h)
    b = _draw_batch(cfg, seed, cfg.batch)
    if common:
        centre, lo, hi = _estimates([S, s_lo, s_hi], b, cfg)
        l_lo, l_hi = retrieval_loss(b.symbols, lo), retrieval_loss(b.symbols, hi)
    else:
        centre = _estimates([S], b, cfg)[0]
        b_lo = _draw_batch(cfg, seed + 1_000_003, cfg.batch)
        b_hi = _draw_batch(cfg, seed + 2_000_003, cfg.batch)
        l_lo = retrieval_loss(b_lo.symbols, _estimates([s_lo], b_lo, cfg)[0])
        l_hi = retrieval_loss(b_hi.symbols, _estimates([s_hi], b_hi, cfg)[0])
    rt = _summarize(centre, b.symbols, cfg.Q)
    if beta_eff is None:
        beta_eff = adapt_weight(rt.acc, cfg.Acc_target, cfg.delta1, cfg.beta_base, cfg.gamma)
    if beta_eff:
        l_lo += beta_eff * _security_term(s_lo, cfg.Q)
        l_hi += beta_eff * _security_term(s_hi, cfg.Q)
    return (l_hi - l_lo) / (2.0 * h), rt, beta_eff


def _converged(history: list[float], window: int) -> bool:
    if len(history) <= window:
        return False
    old, new = history[-1 - window], history[-1]
    return abs(new - old) / old < 1e-3


def optimize_scale(cfg: OptConfig) -> OptResult:
    Q = cfg.Q
    log_s = math.log(cfg.S0)
    log_max = math.log(cfg.S_max)
    trace: list[OptState] = []
    history = [cfg.S0]
    converged = False
    for it in range(cfg.max_iters):
        S = math.exp(log_s)
        dkl = gaussianity.analytic_kl(S, Q)
        grad, rt, beta = fd_gradient(S, cfg, seed=it, beta_eff=cfg.beta_override)
        trace.append(OptState(S=S, Acc_curr=rt.acc, L_retr=rt.l_retr, D_KL=dkl,
                              beta_eff=beta, iter=it, grad=grad))
        step = max(-cfg.max_log_step, min(cfg.max_log_step, -cfg.eta * grad))
        log_s = min(log_s + step, log_max)
        history.append(math.exp(log_s))
        if _converged(history, cfg.converge_window):
            converged = True
            break
    return _select(cfg, trace, history, converged)


def _select(cfg: OptConfig, trace: list[OptState], history: list[float], converged: bool,
            max_candidates: int = 8) -> OptResult:
    """Smallest iterate that met the target, confirmed on a fresh batch."""
    floor = cfg.Acc_target - cfg.delta1
    vbatch = cfg.validation_batch or 4 * cfg.batch
    candidates = sorted({st.S for st in trace if st.Acc_curr >= cfg.Acc_target})
    tried = []
    for S in candidates[:max_candidates]:
        acc = roundtrip_eval(S, cfg, seed=10_000_000 + len(tried), batch=vbatch).acc
        tried.append((S, acc))
        if acc >= floor:
            return OptResult(S_star=S, feasible=True, trace=trace, validation_acc=acc,
                             converged=converged, history=history)
    if tried:
        why = "; ".join(f"S={S:.6g} validated at {a:.6f}" for S, a in tried)
        msg = f"no iterate passed validation at {floor:.6f} ({why})"
    else:
        best = max(trace, key=lambda st: st.Acc_curr)
        msg = (f"no iterate reached Acc_target={cfg.Acc_target}; best accuracy "
               f"{best.Acc_curr:.6f} at S={best.S:.6g} (cap S_max={cfg.S_max:g})")
    return OptResult(S_star=None, feasible=False, trace=trace, validation_acc=None,
                     converged=converged, diagnostic=msg, history=history)
