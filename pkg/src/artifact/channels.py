"""Channel distortions and the toy linear autoencoder.

Pixel tensors live in [-1, 1] and have shape (C, H, W) or (B, C, H, W).
Every stochastic channel takes an explicit seed.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

# IJG standard luminance quantization table
JPEG_LUMA = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)

PIXEL_UNIT = 2.0 / 255.0

KINDS = ("awgn", "salt_pepper", "gaussian_blur", "quantize", "dct_compress", "autoencoder_cycle")


class ChannelError(ValueError):
    pass


@dataclass(frozen=True)
class ChannelSpec:
    """One distortion. Only the parameters of ``kind`` are meaningful."""

    kind: str
    sigma: float = 0.0
    rate: float = 0.0
    kernel_size: int = 1
    kernel_sigma: float = 1.0
    levels: int = 256
    block: int = 8
    quality: int = 100
    unit: float = PIXEL_UNIT
    with_quantize: bool = False

    def __post_init__(self):
        k = self.kind
        if k not in KINDS:
            raise ChannelError(f"unknown channel kind {k!r}")
        if k == "awgn" and not self.sigma >= 0:
            raise ChannelError("awgn sigma must be >= 0")
        if k == "salt_pepper" and not 0 <= self.rate <= 1:
            raise ChannelError("salt_pepper rate must lie in [0, 1]")
        if k == "gaussian_blur":
            if self.kernel_size < 1 or self.kernel_size % 2 == 0:
                raise ChannelError("blur kernel_size must be odd and >= 1")
            if not self.kernel_sigma > 0:
                raise ChannelError("blur kernel_sigma must be > 0")
        if k == "quantize" and self.levels < 2:
            raise ChannelError("quantize levels must be >= 2")
        if k == "dct_compress":
            if self.block not in (4, 8):
                raise ChannelError("dct block must be 4 or 8")
            if not 1 <= self.quality <= 100:
                raise ChannelError("dct quality must lie in [1, 100]")
            if not self.unit > 0:
                raise ChannelError("dct unit must be > 0")

    def label(self) -> str:
        return {
            "awgn": f"awgn:{self.sigma:g}",
            "salt_pepper": f"salt_pepper:{self.rate:g}",
            "gaussian_blur": f"gaussian_blur:{self.kernel_size}",
            "quantize": f"quantize:{self.levels}",
            "dct_compress": f"dct_compress:{self.quality}",
            "autoencoder_cycle": f"autoencoder_cycle:{int(self.with_quantize)}",
        }[self.kind]


_ALIASES = {"awgn": "awgn", "sp": "salt_pepper", "salt_pepper": "salt_pepper",
            "blur": "gaussian_blur", "gaussian_blur": "gaussian_blur", "quantize": "quantize",
            "jpeg": "dct_compress", "dct_compress": "dct_compress",
            "ae": "autoencoder_cycle", "autoencoder_cycle": "autoencoder_cycle"}


def parse_spec(text: str) -> ChannelSpec:
    """Parse ``kind:value`` or ``kind:key=value,...`` (e.g. ``awgn:0.01``, ``blur:5``, ``jpeg:70``)."""
    kind, _, rest = text.strip().partition(":")
    if kind not in _ALIASES:
        raise ChannelError(f"unknown channel kind {kind!r}")
    kind = _ALIASES[kind]
    params: dict[str, object] = {}
    if rest:
        if "=" not in rest:
            primary = {"awgn": "sigma", "salt_pepper": "rate", "gaussian_blur": "kernel_size",
                       "quantize": "levels", "dct_compress": "quality",
                       "autoencoder_cycle": "with_quantize"}[kind]
            rest = f"{primary}={rest}"
        for item in rest.split(","):
            key, _, val = item.partition("=")
            key = key.strip()
            if key not in ChannelSpec.__dataclass_fields__ or key == "kind":
                raise ChannelError(f"unknown parameter {key!r} for {kind}")
            params[key] = _coerce(key, val.strip())
    if kind == "gaussian_blur" and "kernel_sigma" not in params:
        # OpenCV convention for an unspecified sigma
        ks = int(params.get("kernel_size", 1))
        params["kernel_sigma"] = 0.3 * ((ks - 1) * 0.5 - 1) + 0.8
    return ChannelSpec(kind=kind, **params)


def _coerce(key: str, val: str):
    if key in ("kernel_size", "levels", "block", "quality"):
        if not re.fullmatch(r"\d+", val):
            raise ChannelError(f"{key} must be an integer, got {val!r}")
        return int(val)
    if key == "with_quantize":
        return val.lower() in ("1", "true", "yes")
    try:
        return float(val)
    except ValueError as exc:
        raise ChannelError(f"{key} must be a number, got {val!r}") from exc


# --------------------------------------------------------------------------
# primitive distortions


def gaussian_kernel1d(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    k = np.exp(-0.5 * (r / sigma) ** 2)
    return k / k.sum()


def _planes(x: np.ndarray) -> np.ndarray:
    if x.ndim < 2:
        raise ChannelError("spatial channels need at least a 2-D plane")
    return x.reshape(-1, *x.shape[-2:])


def gaussian_blur(x: np.ndarray, kernel_size: int, kernel_sigma: float) -> np.ndarray:
    planes = _planes(x)
    r = kernel_size // 2
    if r == 0:
        return x.copy()
    if min(planes.shape[-2:]) <= r:
        raise ChannelError(f"plane {planes.shape[-2:]} too small for kernel {kernel_size}")
    k = gaussian_kernel1d(kernel_size, kernel_sigma)
    padded = np.pad(planes, ((0, 0), (r, r), (r, r)), mode="reflect")
    h, w = planes.shape[-2:]
    rows = sum(k[i] * padded[:, i:i + h, :] for i in range(kernel_size))
    out = sum(k[j] * rows[:, :, j:j + w] for j in range(kernel_size))
    return out.reshape(x.shape)


def quantize(x: np.ndarray, levels: int) -> np.ndarray:
    """Map [-1, 1] affinely onto ``levels`` uniform levels and back."""
    scale = (levels - 1) / 2.0
    return np.rint((np.clip(x, -1.0, 1.0) + 1.0) * scale) / scale - 1.0


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    m = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * i + 1) * k / (2 * n))
    m[0] /= np.sqrt(2.0)
    return m


def quality_table(quality: int, block: int = 8) -> np.ndarray:
    """Luminance table scaled by the IJG quality curve; 4x4 blocks subsample it."""
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    table = np.floor((JPEG_LUMA * scale + 50.0) / 100.0)
    table = np.clip(table, 1.0, 255.0)
    if block == 4:
        table = table[::2, ::2]
    return table


def dct_compress(x: np.ndarray, block: int, quality: int, unit: float = PIXEL_UNIT) -> np.ndarray:
    """Block-DCT quantization proxy for JPEG; one table unit equals ``unit`` in the [-1, 1] domain."""
    planes = _planes(x)
    n, h, w = planes.shape
    if h % block or w % block:
        raise ChannelError(f"plane {h}x{w} is not a multiple of block {block}")
    d = dct_matrix(block)
    table = quality_table(quality, block) * unit
    blocks = planes.reshape(n, h // block, block, w // block, block).transpose(0, 1, 3, 2, 4)
    coeffs = d @ blocks @ d.T
    coeffs = np.rint(coeffs / table) * table
    rec = d.T @ coeffs @ d
    return rec.transpose(0, 1, 3, 2, 4).reshape(x.shape)


def salt_pepper(x: np.ndarray, rate: float, rng: np.random.Generator,
                low: float = -1.0, high: float = 1.0) -> np.ndarray:
    hit = rng.random(x.shape) < rate
    salt = rng.random(x.shape) < 0.5
    out = x.copy()
    out[hit & salt] = high
    out[hit & ~salt] = low
    return out


# --------------------------------------------------------------------------
# toy autoencoder


@dataclass(frozen=True)
class ToyAutoencoder:
    """Linear encoder ``W`` (k x D, orthonormal rows), decoder ``W^T`` plus noise.

    ``prior_var`` turns the encoder into the posterior-mean estimator of a
    latent with prior N(0, prior_var I) observed through decoder noise of
    std ``rho``: z = c W x with c = prior_var / (prior_var + rho^2). It is the
    plain projection when ``prior_var`` is None or ``rho`` is 0.
    """

    W: np.ndarray
    rho: float = 0.0
    prior_var: float | None = None
    clamp: bool = True
    latent_shape: tuple[int, ...] | None = None
    pixel_shape: tuple[int, ...] | None = None

    def __post_init__(self):
        k, d = self.W.shape
        if k > d:
            raise ValueError("latent_dim must not exceed pixel dims")
        if self.rho < 0:
            raise ValueError("rho must be >= 0")
        if not np.allclose(self.W @ self.W.T, np.eye(k), rtol=0, atol=1e-10):
            raise ValueError("encoder rows are not orthonormal")

    @classmethod
    def random(cls, latent_shape: tuple[int, ...], pixel_shape: tuple[int, ...], seed: int,
               rho: float = 0.0, prior_var: float | None = None, clamp: bool = True) -> ToyAutoencoder:
        k, d = math.prod(latent_shape), math.prod(pixel_shape)
        rng = np.random.default_rng(seed)
        q, r = np.linalg.qr(rng.standard_normal((d, k)))
        q *= np.sign(np.diag(r))  # unique QR factor
        return cls(W=np.ascontiguousarray(q.T), rho=rho, prior_var=prior_var, clamp=clamp,
                   latent_shape=tuple(latent_shape), pixel_shape=tuple(pixel_shape))

    @property
    def latent_dim(self) -> int:
        return self.W.shape[0]

    @property
    def pixel_dim(self) -> int:
        return self.W.shape[1]

    @property
    def shrink(self) -> float:
        if self.prior_var is None or self.rho == 0.0:
            return 1.0
        return self.prior_var / (self.prior_var + self.rho**2)


def _batch_shape(x: np.ndarray, in_dims: int, out_dims: int,
                 target: tuple[int, ...] | None) -> tuple[int, ...]:
    if x.size % in_dims:
        raise ChannelError(f"tensor of size {x.size} does not hold {in_dims}-dim samples")
    n = x.size // in_dims
    tail = target if target is not None else (out_dims,)
    single = x.size == in_dims and x.ndim <= max(1, len(target or ()))
    return tail if single else (n, *tail)


def ae_encode(ae: ToyAutoencoder, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out_shape = _batch_shape(x, ae.pixel_dim, ae.latent_dim, ae.latent_shape)
    z = ae.shrink * (x.reshape(-1, ae.pixel_dim) @ ae.W.T)
    return z.reshape(out_shape)


def ae_decode(ae: ToyAutoencoder, z: np.ndarray, rng_seed: int | None = 0) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    out_shape = _batch_shape(z, ae.latent_dim, ae.pixel_dim, ae.pixel_shape)
    x = z.reshape(-1, ae.latent_dim) @ ae.W
    if ae.rho > 0:
        rng = np.random.default_rng(rng_seed)
        x = x + ae.rho * rng.standard_normal(x.shape)
    if ae.clamp:
        x = np.clip(x, -1.0, 1.0)
    return x.reshape(out_shape)


def manifold_distance(z: np.ndarray) -> np.ndarray:
    """Distance of one latent sample to the prior centre, divided by sqrt(k).

    ``manifold_distances`` is the per-sample version for a batch.
    """
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("latent has non-finite values")
    return float(np.linalg.norm(z.ravel()) / math.sqrt(z.size))


def manifold_distances(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    flat = z.reshape(z.shape[0], -1)
    return np.linalg.norm(flat, axis=1) / math.sqrt(flat.shape[1])


# --------------------------------------------------------------------------


def apply_channel(spec: ChannelSpec, x: np.ndarray, rng_seed: int = 0,
                  ae: ToyAutoencoder | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ChannelError("input has non-finite values")
    kind = spec.kind
    if kind == "awgn":
        if spec.sigma == 0:
            return x.copy()
        rng = np.random.default_rng(rng_seed)
        return x + spec.sigma * rng.standard_normal(x.shape)
    if kind == "salt_pepper":
        return salt_pepper(x, spec.rate, np.random.default_rng(rng_seed))
    if kind == "gaussian_blur":
        return gaussian_blur(x, spec.kernel_size, spec.kernel_sigma)
    if kind == "quantize":
        return quantize(x, spec.levels)
    if kind == "dct_compress":
        return dct_compress(x, spec.block, spec.quality, spec.unit)
    if ae is None:
        raise ChannelError("autoencoder_cycle needs an autoencoder")
    out = ae_decode(ae, ae_encode(ae, x), rng_seed)
    if spec.with_quantize:
        out = quantize(out, 256)
    return out.reshape(x.shape)
