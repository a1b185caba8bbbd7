"""Pixel-space and latent-space hide/extract."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import channels, codec, diffusion, prng
from .channels import ToyAutoencoder
from .codec import CodecParams
from .diffusion import ScheduleParams, ScoreModel, SolverConfig

MODES = ("pixel", "latent")
CONTROL_TAG = "pipeline/control-signal"


class PipelineError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    """Everything both parties must agree on. ``codec`` carries the key and S."""

    mode: str
    codec: CodecParams
    schedule: ScheduleParams
    model: ScoreModel
    solver_order: int = 3
    shape: tuple[int, ...] | None = None
    autoencoder: ToyAutoencoder | None = None
    ae_quantize: int | None = 256
    export_quantize: int | None = None
    decoder_seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise PipelineError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.codec.dims != self.model.dims:
            raise PipelineError(f"codec dims {self.codec.dims} != model dims {self.model.dims}")
        if self.mode == "latent":
            if self.autoencoder is None:
                raise PipelineError("latent mode requires an autoencoder")
            if self.autoencoder.latent_dim != self.model.dims:
                raise PipelineError(
                    f"autoencoder latent_dim {self.autoencoder.latent_dim} != model dims {self.model.dims}"
                )
        elif self.autoencoder is not None:
            raise PipelineError("pixel mode takes no autoencoder")
        if self.shape is not None and int(np.prod(self.shape)) != self.pixel_dims:
            raise PipelineError(f"shape {self.shape} does not hold {self.pixel_dims} values")
        SolverConfig(order=self.solver_order, steps=self.schedule.T_steps)

    @property
    def pixel_dims(self) -> int:
        return self.autoencoder.pixel_dim if self.mode == "latent" else self.codec.dims

    def solver(self, direction: str) -> SolverConfig:
        return SolverConfig(order=self.solver_order, steps=self.schedule.T_steps, direction=direction)

    def with_scale(self, S: float) -> PipelineConfig:
        return _replace(self, codec=self.codec.with_scale(S))

    def with_key(self, key: bytes) -> PipelineConfig:
        c = self.codec
        return _replace(self, codec=CodecParams(Q=c.Q, S=c.S, key=key, dims=c.dims))


def _replace(cfg: PipelineConfig, **changes) -> PipelineConfig:
    fields = {f: getattr(cfg, f) for f in cfg.__dataclass_fields__}
    fields.update(changes)
    return PipelineConfig(**fields)


@dataclass(frozen=True)
class Manifest:
    mode: str
    Q: int
    dims: int
    pixel_dims: int
    schedule_kind: str
    T_steps: int
    schedule_fingerprint: str
    codec_fingerprint: str
    payload_len_bits: int
    shape: tuple[int, ...] = field(default=())

    def to_json(self) -> str:
        d = dict(self.__dict__)
        d["shape"] = list(self.shape)
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> Manifest:
        d = json.loads(text)
        d["shape"] = tuple(d.get("shape", ()))
        return cls(**d)


def make_manifest(cfg: PipelineConfig, payload_len_bits: int) -> Manifest:
    return Manifest(
        mode=cfg.mode, Q=cfg.codec.Q, dims=cfg.codec.dims, pixel_dims=cfg.pixel_dims,
        schedule_kind=cfg.schedule.kind, T_steps=cfg.schedule.T_steps,
        schedule_fingerprint=cfg.schedule.fingerprint, codec_fingerprint=cfg.codec.fingerprint(),
        payload_len_bits=int(payload_len_bits), shape=tuple(cfg.shape or ()),
    )


# --------------------------------------------------------------------------
# batched building blocks; the leading axis is the batch


def render(x_T: np.ndarray, cfg: PipelineConfig, decoder_seed: int | None = None) -> np.ndarray:
    """Initial noise (B, dims) -> emitted samples (B, pixel_dims)."""
    x_T = np.asarray(x_T, dtype=np.float64).reshape(-1, cfg.codec.dims)
    x0 = diffusion.generate(cfg.model, cfg.schedule, x_T, cfg.solver("generate"))
    if cfg.mode == "latent":
        seed = cfg.decoder_seed if decoder_seed is None else decoder_seed
        x0 = channels.ae_decode(cfg.autoencoder, x0, seed).reshape(x_T.shape[0], -1)
        if cfg.ae_quantize:
            x0 = channels.quantize(x0, cfg.ae_quantize)
    if cfg.export_quantize:
        x0 = channels.quantize(x0, cfg.export_quantize)
    return x0


def recover(samples: np.ndarray, cfg: PipelineConfig,
            expected_fingerprint: str | None = None) -> np.ndarray:
    """Emitted samples (B, pixel_dims) -> estimated initial noise (B, dims)."""
    samples = np.asarray(samples, dtype=np.float64).reshape(-1, cfg.pixel_dims)
    if cfg.mode == "latent":
        samples = channels.ae_encode(cfg.autoencoder, samples).reshape(samples.shape[0], -1)
    return diffusion.invert(cfg.model, cfg.schedule, samples, cfg.solver("invert"),
                            expected_fingerprint=expected_fingerprint)


def control_noise(cfg: PipelineConfig, batch: int, offset: int = 0) -> np.ndarray:
    """Initial noise with the message signal replaced by a keyed Gaussian of equal variance."""
    c = cfg.codec
    count = batch * c.dims
    signal = np.sqrt(codec_signal_variance(c)) * prng.keyed_normal(c.key, CONTROL_TAG, count, offset)
    noise = codec.aux_noise(c, count, offset)
    return ((signal + noise) / c.sigma).reshape(batch, c.dims)


def baseline_noise(cfg: PipelineConfig, batch: int, offset: int = 0) -> np.ndarray:
    """Pure keyed noise with no message signal."""
    return codec.aux_noise(cfg.codec, batch * cfg.codec.dims, offset).reshape(batch, cfg.codec.dims)


def codec_signal_variance(c: CodecParams) -> float:
    n = c.levels
    return c.S * c.S * (n + 1) / (12.0 * (n - 1))


# --------------------------------------------------------------------------
# single-payload API


def hide(payload, cfg: PipelineConfig) -> tuple[np.ndarray, Manifest]:
    stream = codec.pack_message(payload, cfg.codec.Q, cfg.codec.dims, cfg.codec.key)
    x_T = codec.map_message(stream, cfg.codec)
    sample = render(x_T[None, :], cfg)[0]
    if cfg.shape is not None:
        sample = sample.reshape(cfg.shape)
    return sample, make_manifest(cfg, stream.payload_len_bits)


def extract(stego: np.ndarray, cfg: PipelineConfig, manifest: Manifest | None = None,
            payload_len_bits: int | None = None) -> np.ndarray:
    expected = None
    if manifest is not None:
        expected = manifest.schedule_fingerprint
        if manifest.codec_fingerprint != cfg.codec.fingerprint():
            raise diffusion.ScheduleMismatch(
                f"codec fingerprint {cfg.codec.fingerprint()} does not match manifest "
                f"{manifest.codec_fingerprint}"
            )
        if payload_len_bits is None:
            payload_len_bits = manifest.payload_len_bits
    x_hat = recover(np.asarray(stego).reshape(1, -1), cfg, expected_fingerprint=expected)[0]
    stream = codec.demap_noise(x_hat, cfg.codec, payload_len_bits)
    return codec.unpack_message(stream, cfg.codec.Q)


def config_digest(cfg: PipelineConfig) -> str:
    """Public digest of a pipeline (no key, no S)."""
    h = hashlib.sha256()
    h.update(cfg.mode.encode())
    h.update(cfg.schedule.fingerprint.encode())
    h.update(cfg.codec.fingerprint().encode())
    return h.hexdigest()[:16]
