"""Reference configurations shared by the tests, the CLI defaults and the report."""

from __future__ import annotations

from . import prng
from .channels import ToyAutoencoder
from .codec import CodecParams
from .diffusion import ScoreModel, make_schedule
from .pipeline import PipelineConfig

PIXEL_SHAPE = (3, 16, 16)
LATENT_SHAPE = (3, 8, 8)
PIXEL_VAR = 0.25
LATENT_VAR = 0.16
AE_RHO = 0.02
AE_SEED = 7


def reference_autoencoder(rho: float = AE_RHO, prior_var: float | None = LATENT_VAR) -> ToyAutoencoder:
    return ToyAutoencoder.random(LATENT_SHAPE, PIXEL_SHAPE, seed=AE_SEED, rho=rho, prior_var=prior_var)


def pixel_config(Q: int = 1, S: float = 1.0, key: bytes | None = None, steps: int = 50,
                 schedule: str = "linear-beta") -> PipelineConfig:
    dims = 3 * 16 * 16
    key = prng.key_from_seed(0) if key is None else key
    return PipelineConfig(
        mode="pixel",
        codec=CodecParams(Q=Q, S=S, key=key, dims=dims),
        schedule=make_schedule(schedule, steps),
        model=ScoreModel.gaussian(dims, 0.0, PIXEL_VAR),
        shape=PIXEL_SHAPE,
    )


def latent_config(Q: int = 1, S: float = 1.0, key: bytes | None = None, steps: int = 50,
                  schedule: str = "linear-beta", ae: ToyAutoencoder | None = None) -> PipelineConfig:
    ae = reference_autoencoder() if ae is None else ae
    key = prng.key_from_seed(0) if key is None else key
    return PipelineConfig(
        mode="latent",
        codec=CodecParams(Q=Q, S=S, key=key, dims=ae.latent_dim),
        schedule=make_schedule(schedule, steps),
        model=ScoreModel.gaussian(ae.latent_dim, 0.0, LATENT_VAR),
        shape=PIXEL_SHAPE,
        autoencoder=ae,
    )
