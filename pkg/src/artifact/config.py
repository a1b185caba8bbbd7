"""Experiment configuration: a TOML document validated against a strict schema.

Unknown keys are rejected and every error names its key path.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Literal, Optional

import tomli
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import channels, prng
from .channels import ToyAutoencoder
from .codec import Q_MAX, CodecParams
from .diffusion import SCHEDULE_KINDS, ScoreModel, make_schedule
from .optimizer import LATENT_TARGETS, PIXEL_TARGETS, Gamma, OptConfig
from .pipeline import PipelineConfig

DEFAULT_ATTACKS = (
    "awgn:0.001", "awgn:0.01", "awgn:0.1",
    "jpeg:90", "jpeg:70", "jpeg:50",
    "sp:0.01", "sp:0.03", "sp:0.05",
    "blur:3", "blur:5", "blur:7",
)


class ConfigError(ValueError):
    pass


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PipelineSection(_Section):
    mode: Literal["pixel", "latent"] = "pixel"
    shape: tuple[int, int, int] = (3, 16, 16)
    model: Literal["unit_gaussian", "gaussian", "mixture"] = "gaussian"
    model_mean: float = 0.0
    model_var: Optional[float] = Field(default=None, gt=0)
    mixture_means: list[float] = [-0.3, 0.3]
    mixture_weights: list[float] = [0.5, 0.5]
    solver_order: Literal[1, 2, 3] = 3
    export_quantize: int = Field(default=0, ge=0)
    decoder_seed: int = Field(default=0, ge=0)

    @field_validator("shape")
    @classmethod
    def _positive(cls, v):
        if min(v) < 1:
            raise ValueError("shape entries must be >= 1")
        return v

    @field_validator("export_quantize")
    @classmethod
    def _levels(cls, v):
        if v == 1:
            raise ValueError("export_quantize must be 0 (off) or >= 2")
        return v


class CodecSection(_Section):
    Q: int = Field(default=1, ge=1, le=Q_MAX)
    S: float = Field(default=1.0, gt=0)
    key_seed: int = Field(default=0, ge=0)
    key_hex: Optional[str] = None

    @field_validator("S")
    @classmethod
    def _finite(cls, v):
        if not math.isfinite(v):
            raise ValueError("S must be finite")
        return v

    @field_validator("key_hex")
    @classmethod
    def _hex(cls, v):
        if v is not None and (len(v) != 64 or any(c not in "0123456789abcdefABCDEF" for c in v)):
            raise ValueError("key_hex must be 64 hex digits")
        return v


class ScheduleSection(_Section):
    kind: Literal[SCHEDULE_KINDS] = "linear-beta"  # type: ignore[valid-type]
    steps: int = Field(default=50, ge=3)


class AutoencoderSection(_Section):
    latent_shape: tuple[int, int, int] = (3, 8, 8)
    rho: float = Field(default=0.02, ge=0)
    seed: int = Field(default=7, ge=0)
    prior_var: Optional[float] = Field(default=0.16, gt=0)
    clamp: bool = True
    quantize_levels: int = Field(default=256, ge=0)


class OptimizerSection(_Section):
    Acc_target: Optional[float] = Field(default=None, gt=0, le=1)
    beta_base: float = Field(default=1.0, gt=0)
    gamma: tuple[float, float, float] = (0.01, 1.0, 100.0)
    delta1: float = Field(default=0.01, gt=0)
    eta: float = Field(default=0.05, gt=0)
    batch: int = Field(default=64, ge=1)
    max_iters: int = Field(default=300, ge=1)
    converge_window: int = Field(default=20, ge=1)
    S0: float = Field(default=1.0, gt=0)
    S_max: float = Field(default=64.0, gt=0)
    fd_step: float = Field(default=1e-2, gt=0)
    validation_batch: Optional[int] = Field(default=None, ge=1)
    channel: Optional[str] = None
    seed: int = Field(default=0, ge=0)

    @field_validator("gamma")
    @classmethod
    def _increasing(cls, v):
        if not v[0] < v[1] < v[2]:
            raise ValueError("gamma must be strictly increasing")
        return v

    @field_validator("channel")
    @classmethod
    def _spec(cls, v):
        if v is not None:
            channels.parse_spec(v)
        return v


class AttacksSection(_Section):
    specs: list[str] = list(DEFAULT_ATTACKS)
    seeds: int = Field(default=32, ge=1)
    capacities: list[int] = [1, 2, 4]

    @field_validator("specs")
    @classmethod
    def _specs(cls, v):
        for s in v:
            channels.parse_spec(s)
        return v

    @field_validator("capacities")
    @classmethod
    def _caps(cls, v):
        if not v or any(not 1 <= q <= Q_MAX for q in v):
            raise ValueError(f"capacities must lie in [1, {Q_MAX}]")
        return v


class OutputSection(_Section):
    dir: str = "out"


class ExperimentConfig(_Section):
    prng_algorithm: Literal[prng.PRNG_ALGORITHM] = prng.PRNG_ALGORITHM  # type: ignore[valid-type]
    icdf_version: Literal[prng.ICDF_VERSION] = prng.ICDF_VERSION  # type: ignore[valid-type]
    seed: int = Field(default=0, ge=0)
    pipeline: PipelineSection = PipelineSection()
    codec: CodecSection = CodecSection()
    schedule: ScheduleSection = ScheduleSection()
    autoencoder: Optional[AutoencoderSection] = None
    optimizer: OptimizerSection = OptimizerSection()
    attacks: AttacksSection = AttacksSection()
    output: OutputSection = OutputSection()

    @model_validator(mode="after")
    def _cross(self):
        if self.pipeline.mode == "latent" and self.autoencoder is None:
            raise ValueError("autoencoder: section is required when pipeline.mode = 'latent'")
        if self.pipeline.mode == "pixel" and self.autoencoder is not None:
            raise ValueError("autoencoder: section is only valid when pipeline.mode = 'latent'")
        if self.autoencoder is not None:
            k = math.prod(self.autoencoder.latent_shape)
            d = math.prod(self.pipeline.shape)
            if k > d:
                raise ValueError(f"autoencoder.latent_shape: latent size {k} exceeds pixel size {d}")
        opt = self.optimizer
        if opt.Acc_target is not None and not opt.delta1 < opt.Acc_target:
            raise ValueError("optimizer.delta1: must be below optimizer.Acc_target")
        if opt.S0 > opt.S_max:
            raise ValueError("optimizer.S0: must not exceed optimizer.S_max")
        return self

    # ---- builders

    @property
    def latent(self) -> bool:
        return self.pipeline.mode == "latent"

    def key(self) -> bytes:
        c = self.codec
        return prng.key_from_seed(c.key_hex if c.key_hex is not None else c.key_seed)

    def build_autoencoder(self) -> ToyAutoencoder | None:
        a = self.autoencoder
        if a is None:
            return None
        return ToyAutoencoder.random(a.latent_shape, self.pipeline.shape, seed=a.seed, rho=a.rho,
                                     prior_var=a.prior_var, clamp=a.clamp)

    def model_dims(self) -> int:
        shape = self.autoencoder.latent_shape if self.latent else self.pipeline.shape
        return math.prod(shape)

    def build_model(self) -> ScoreModel:
        p, dims = self.pipeline, self.model_dims()
        if p.model == "unit_gaussian":
            return ScoreModel.unit_gaussian(dims)
        var = p.model_var if p.model_var is not None else (0.16 if self.latent else 0.25)
        if p.model == "gaussian":
            return ScoreModel.gaussian(dims, p.model_mean, var)
        if len(p.mixture_means) != len(p.mixture_weights):
            raise ConfigError("pipeline.mixture_means: length differs from pipeline.mixture_weights")
        means = [[m] * dims for m in p.mixture_means]
        return ScoreModel.mixture(p.mixture_weights, means, var)

    def build_pipeline(self, Q: int | None = None, S: float | None = None,
                       mode: str | None = None) -> PipelineConfig:
        cfg = self if mode is None or mode == self.pipeline.mode else self.with_mode(mode)
        ae = cfg.build_autoencoder()
        dims = cfg.model_dims()
        return PipelineConfig(
            mode=cfg.pipeline.mode,
            codec=CodecParams(Q=Q or cfg.codec.Q, S=S or cfg.codec.S, key=cfg.key(), dims=dims),
            schedule=make_schedule(cfg.schedule.kind, cfg.schedule.steps),
            model=cfg.build_model(),
            solver_order=cfg.pipeline.solver_order,
            shape=cfg.pipeline.shape,
            autoencoder=ae,
            ae_quantize=(cfg.autoencoder.quantize_levels or None) if ae is not None else None,
            export_quantize=cfg.pipeline.export_quantize or None,
            decoder_seed=cfg.pipeline.decoder_seed,
        )

    def with_mode(self, mode: str) -> ExperimentConfig:
        """Same experiment in the other pipeline; adds a default autoencoder section if needed."""
        data = self.model_dump()
        data["pipeline"]["mode"] = mode
        if mode == "latent" and data["autoencoder"] is None:
            data["autoencoder"] = AutoencoderSection().model_dump()
        if mode == "pixel":
            data["autoencoder"] = None
        return ExperimentConfig.model_validate(data)

    def build_optimizer(self, Q: int | None = None, mode: str | None = None) -> OptConfig:
        o = self.optimizer
        Q = Q or self.codec.Q
        mode = mode or self.pipeline.mode
        targets = LATENT_TARGETS if mode == "latent" else PIXEL_TARGETS
        target = o.Acc_target if o.Acc_target is not None else targets.get(Q, targets[8])
        return OptConfig(
            pipeline=self.build_pipeline(Q=Q, mode=mode),
            Acc_target=target, beta_base=o.beta_base, gamma=Gamma(*o.gamma), delta1=o.delta1,
            eta=o.eta, batch=o.batch, max_iters=o.max_iters, converge_window=o.converge_window,
            S0=o.S0, S_max=o.S_max, fd_step=o.fd_step, validation_batch=o.validation_batch,
            channel=channels.parse_spec(o.channel) if o.channel else None,
            seed=o.seed + self.seed,
        )


def _format_error(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        msg = err["msg"]
        if err["type"] == "extra_forbidden":
            msg = f"unknown key {err['loc'][-1]!r}"
        msg = msg.removeprefix("Value error, ")
        lines.append(msg if path == "<root>" else f"{path}: {msg}")
    return "; ".join(lines)


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_error(exc)) from None


def loads_config(text: str) -> ExperimentConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc}") from None
    return parse_config(data)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {str(path)!r} does not exist")
    return loads_config(path.read_text())
