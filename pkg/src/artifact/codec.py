"""Message <-> approximately Gaussian initial noise.

Payload bits are grouped into Q-bit symbols ``m``; each symbol becomes one
noise component ``x = (u + n) / sigma`` with ``u = S * (m / (2^Q - 1) - 0.5)``
and ``n`` drawn from the keyed Gaussian stream. The receiver regenerates
``n`` and inverts the map by rescaling and rounding.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from . import prng

Q_MAX = 16

NOISE_TAG = "codec/aux-noise"
PAD_TAG = "codec/padding"


class CodecError(ValueError):
    pass


class CapacityExceeded(CodecError):
    pass


class MalformedSymbols(CodecError):
    pass


class DimensionMismatch(CodecError):
    pass


def normalization_sigma(S: float, Q: int) -> float:
    n = 2**Q
    return math.sqrt(1.0 + S * S * (n + 1) / (12.0 * (n - 1)))


@dataclass(frozen=True)
class CodecParams:
    """Shared secret state of the codec: capacity, scale, key and size."""

    Q: int
    S: float
    key: bytes
    dims: int
    sigma: float = field(default=float("nan"))

    def __post_init__(self):
        if not isinstance(self.Q, (int, np.integer)) or not 1 <= self.Q <= Q_MAX:
            raise CodecError(f"Q must be an integer in [1, {Q_MAX}], got {self.Q!r}")
        if not (self.S > 0 and math.isfinite(self.S)):
            raise CodecError(f"S must be positive and finite, got {self.S!r}")
        if self.dims < 1:
            raise CodecError(f"dims must be >= 1, got {self.dims}")
        if len(self.key) != prng.KEY_BYTES:
            raise CodecError(f"key must be {prng.KEY_BYTES} bytes")
        expected = normalization_sigma(self.S, self.Q)
        if math.isnan(self.sigma):
            object.__setattr__(self, "sigma", expected)
        elif abs(self.sigma - expected) > math.ulp(expected):
            raise CodecError(
                f"stored sigma {self.sigma!r} disagrees with recomputed {expected!r}"
            )

    @property
    def levels(self) -> int:
        return 2**self.Q

    @property
    def margin(self) -> float:
        """Largest per-component error of the recovered noise that cannot flip a symbol."""
        return self.S / (2.0 * self.sigma * (self.levels - 1))

    def with_scale(self, S: float) -> CodecParams:
        return CodecParams(Q=self.Q, S=S, key=self.key, dims=self.dims)

    def fingerprint(self) -> str:
        """Hash of the public shape of the codec (Q, dims); never covers S or the key."""
        h = hashlib.sha256(f"codec:Q={self.Q}:dims={self.dims}".encode())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class SymbolStream:
    symbols: np.ndarray
    payload_len_bits: int

    def __len__(self) -> int:
        return len(self.symbols)


def _as_bits(bits) -> np.ndarray:
    arr = np.asarray(bits, dtype=np.int64).ravel()
    if arr.size and (arr.min() < 0 or arr.max() > 1):
        raise CodecError("bits must be 0 or 1")
    return arr.astype(np.uint8)


def pack_message(bits, Q: int, dims: int, key: bytes) -> SymbolStream:
    """Group bits MSB-first into ``dims`` Q-bit symbols, padding with keyed random bits."""
    bits = _as_bits(bits)
    capacity = dims * Q
    if bits.size > capacity:
        raise CapacityExceeded(f"payload of {bits.size} bits exceeds capacity {capacity}")
    n_pad = capacity - bits.size
    # padding index is the absolute bit position, so the pad for a given slot
    # does not depend on the payload length
    pad = prng.keyed_bits(key, PAD_TAG, n_pad, offset=bits.size)
    full = np.concatenate([bits, pad]).reshape(dims, Q).astype(np.int64)
    weights = 1 << np.arange(Q - 1, -1, -1, dtype=np.int64)
    return SymbolStream(symbols=full @ weights, payload_len_bits=int(bits.size))


def symbols_to_bits(symbols: np.ndarray, Q: int) -> np.ndarray:
    symbols = np.asarray(symbols, dtype=np.int64)
    shifts = np.arange(Q - 1, -1, -1, dtype=np.int64)
    return ((symbols[..., None] >> shifts) & 1).astype(np.uint8).reshape(*symbols.shape[:-1], -1)


def unpack_message(stream: SymbolStream, Q: int) -> np.ndarray:
    symbols = np.asarray(stream.symbols, dtype=np.int64).ravel()
    if symbols.size and (symbols.min() < 0 or symbols.max() >= 2**Q):
        raise MalformedSymbols(f"symbol out of range for Q={Q}")
    if stream.payload_len_bits > symbols.size * Q or stream.payload_len_bits < 0:
        raise MalformedSymbols("payload length inconsistent with symbol count")
    return symbols_to_bits(symbols, Q)[: stream.payload_len_bits]


def aux_noise(params: CodecParams, count: int | None = None, offset: int = 0) -> np.ndarray:
    """Keyed auxiliary noise ``n``; component ``i`` of the whole stream is index ``offset + i``."""
    count = params.dims if count is None else count
    return prng.keyed_normal(params.key, NOISE_TAG, count, offset)


def _signal_over_sigma(symbols: np.ndarray, params: CodecParams) -> np.ndarray:
    # u / sigma, written so that build_lut evaluates the identical expression
    return params.S * (symbols / (params.levels - 1) - 0.5) / params.sigma


def map_symbols(symbols: np.ndarray, params: CodecParams, noise: np.ndarray | None = None,
                offset: int = 0) -> np.ndarray:
    """Vectorized mapping of a symbol array of any shape whose last axes hold ``dims`` values.

    Components are consumed from the keyed stream in row-major order starting at ``offset``.
    """
    symbols = np.asarray(symbols)
    if symbols.size % params.dims:
        raise DimensionMismatch(f"symbol count {symbols.size} is not a multiple of dims {params.dims}")
    if noise is None:
        noise = aux_noise(params, symbols.size, offset).reshape(symbols.shape)
    return _signal_over_sigma(symbols, params) + noise / params.sigma


def map_message(stream: SymbolStream, params: CodecParams, shape: tuple[int, ...] | None = None,
                noise: np.ndarray | None = None) -> np.ndarray:
    if len(stream) != params.dims:
        raise DimensionMismatch(f"stream has {len(stream)} symbols, codec expects {params.dims}")
    x = map_symbols(np.asarray(stream.symbols), params, noise=noise)
    return x.reshape(shape) if shape is not None else x


def build_lut(params: CodecParams) -> np.ndarray:
    return _signal_over_sigma(np.arange(params.levels), params)


def map_with_lut(stream: SymbolStream, params: CodecParams, lut: np.ndarray | None = None,
                 noise: np.ndarray | None = None) -> np.ndarray:
    if len(stream) != params.dims:
        raise DimensionMismatch(f"stream has {len(stream)} symbols, codec expects {params.dims}")
    lut = build_lut(params) if lut is None else lut
    if noise is None:
        noise = aux_noise(params)
    return lut[np.asarray(stream.symbols)] + noise / params.sigma


def continuous_estimate(x_hat: np.ndarray, params: CodecParams, noise: np.ndarray | None = None,
                        offset: int = 0) -> np.ndarray:
    """Pre-rounding symbol estimate ``((x*sigma - n)/S + 0.5) * (2^Q - 1)``."""
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x_hat.size % params.dims:
        raise DimensionMismatch(f"noise estimate size {x_hat.size} is not a multiple of dims {params.dims}")
    if noise is None:
        noise = aux_noise(params, x_hat.size, offset).reshape(x_hat.shape)
    return ((x_hat * params.sigma - noise) / params.S + 0.5) * (params.levels - 1)


def quantize_estimate(m_cont: np.ndarray, Q: int) -> np.ndarray:
    return np.clip(np.rint(m_cont), 0, 2**Q - 1).astype(np.int64)


def demap_noise(noise_est: np.ndarray, params: CodecParams, payload_len_bits: int | None = None,
                noise: np.ndarray | None = None) -> SymbolStream:
    noise_est = np.asarray(noise_est, dtype=np.float64).ravel()
    if noise_est.size != params.dims:
        raise DimensionMismatch(f"noise estimate has {noise_est.size} values, codec expects {params.dims}")
    m_hat = quantize_estimate(continuous_estimate(noise_est, params, noise=noise), params.Q)
    n_bits = params.dims * params.Q if payload_len_bits is None else payload_len_bits
    return SymbolStream(symbols=m_hat, payload_len_bits=n_bits)
