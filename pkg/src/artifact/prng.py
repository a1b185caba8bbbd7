"""Counter-based keyed random streams.

Every value is a pure function of ``(key, domain tag, index)`` so that sender
and receiver regenerate identical auxiliary noise, and disjoint index ranges
can be produced independently.

Algorithm ``philox4x64-10`` (numpy's Philox bit generator) supplies 64-bit
words; word ``i`` lives in counter block ``i // 4``, lane ``i % 4``. The Philox
key is the first 16 bytes of ``SHA-256(key || 0x00 || tag)``. Uniforms use the
top 53 bits: ``u = ((w >> 11) + 0.5) / 2**53``, strictly inside (0, 1).
Normals are ``ndtri(u)`` with Wichura's AS241 (PPND16) rational approximation.
"""

from __future__ import annotations

import hashlib

import numpy as np

PRNG_ALGORITHM = "philox4x64-10"
ICDF_VERSION = "as241-ppnd16"

KEY_BYTES = 32

_TWO_M53 = 2.0**-53


def key_from_seed(seed: int | str | bytes) -> bytes:
    """Derive a 256-bit key from an integer, hex string or raw bytes."""
    if isinstance(seed, bytes):
        if len(seed) != KEY_BYTES:
            raise ValueError(f"raw key must be {KEY_BYTES} bytes, got {len(seed)}")
        return seed
    if isinstance(seed, str):
        raw = bytes.fromhex(seed)
        if len(raw) != KEY_BYTES:
            raise ValueError(f"hex key must encode {KEY_BYTES} bytes, got {len(raw)}")
        return raw
    if isinstance(seed, (int, np.integer)):
        if seed < 0:
            raise ValueError("integer seed must be non-negative")
        return hashlib.sha256(b"artifact-key-v1" + int(seed).to_bytes(16, "little")).digest()
    raise TypeError(f"unsupported key material: {type(seed).__name__}")


def _philox_key(key: bytes, tag: str) -> np.ndarray:
    digest = hashlib.sha256(key + b"\x00" + tag.encode("utf-8")).digest()
    return np.frombuffer(digest[:16], dtype="<u8").astype(np.uint64)


def keyed_words(key: bytes, tag: str, count: int, offset: int = 0) -> np.ndarray:
    """Return 64-bit words ``offset .. offset+count-1`` of the keyed stream."""
    if count < 0 or offset < 0:
        raise ValueError("count and offset must be non-negative")
    if count == 0:
        return np.empty(0, dtype=np.uint64)
    block, lane = divmod(offset, 4)
    gen = np.random.Philox(counter=block, key=_philox_key(key, tag))
    return gen.random_raw(lane + count)[lane:]


def keyed_uniform(key: bytes, tag: str, count: int, offset: int = 0) -> np.ndarray:
    words = keyed_words(key, tag, count, offset)
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53


def keyed_bits(key: bytes, tag: str, count: int, offset: int = 0) -> np.ndarray:
    words = keyed_words(key, tag, count, offset)
    return (words >> np.uint64(63)).astype(np.uint8)


def keyed_normal(key: bytes, tag: str, count: int, offset: int = 0) -> np.ndarray:
    return ndtri(keyed_uniform(key, tag, count, offset))


def random_key(rng: np.random.Generator) -> bytes:
    """Draw a fresh key from a seeded generator (never from OS entropy)."""
    return rng.bytes(KEY_BYTES)


def flip_key_bit(key: bytes, bit: int) -> bytes:
    raw = bytearray(key)
    raw[bit // 8] ^= 1 << (bit % 8)
    return bytes(raw)


# Wichura (1988), Algorithm AS241, PPND16.
_A = (
    3.3871328727963666080e0,
    1.3314166789178437745e2,
    1.9715909503065514427e3,
    1.3731693765509461125e4,
    4.5921953931549871457e4,
    6.7265770927008700853e4,
    3.3430575583588128105e4,
    2.5090809287301226727e3,
)
_B = (
    1.0,
    4.2313330701600911252e1,
    6.8718700749205790830e2,
    5.3941960214247511077e3,
    2.1213794301586595867e4,
    3.9307895800092710610e4,
    2.8729085735721942674e4,
    5.2264952788528545610e3,
)
_C = (
    1.42343711074968357734e0,
    4.63033784615654529590e0,
    5.76949722146069140550e0,
    3.64784832476320460504e0,
    1.27045825245236838258e0,
    2.41780725177450611770e-1,
    2.27238449892691845833e-2,
    7.74545014278341407640e-4,
)
_D = (
    1.0,
    2.05319162663775882187e0,
    1.67638483018380384940e0,
    6.89767334985100004550e-1,
    1.48103976427480074590e-1,
    1.51986665636164571966e-2,
    5.47593808499534494600e-4,
    1.05075007164441684324e-9,
)
_E = (
    6.65790464350110377720e0,
    5.46378491116411436990e0,
    1.78482653991729133580e0,
    2.96560571828504891230e-1,
    2.65321895265761230930e-2,
    1.24266094738807843860e-3,
    2.71155556874348757815e-5,
    2.01033439929228813265e-7,
)
_F = (
    1.0,
    5.99832206555887937690e-1,
    1.36929880922735805310e-1,
    1.48753612908506148525e-2,
    7.86869131145613259100e-4,
    1.84631831751005468180e-5,
    1.42151175831644588870e-7,
    2.04426310338993978564e-15,
)


def _horner(coeffs: tuple[float, ...], r: np.ndarray) -> np.ndarray:
    acc = np.full_like(r, coeffs[-1])
    for c in coeffs[-2::-1]:
        acc = acc * r + c
    return acc


def ndtri(p: np.ndarray) -> np.ndarray:
    """Standard normal quantile for p in (0, 1); AS241, |error| ~ 1e-16."""
    p = np.asarray(p, dtype=np.float64)
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise ValueError("ndtri requires 0 < p < 1")
    q = p - 0.5
    out = np.empty_like(p)

    central = np.abs(q) <= 0.425
    if np.any(central):
        qc = q[central]
        r = 0.180625 - qc * qc
        out[central] = qc * _horner(_A, r) / _horner(_B, r)

    tail = ~central
    if np.any(tail):
        pt = p[tail]
        r = np.sqrt(-np.log(np.minimum(pt, 1.0 - pt)))
        val = np.empty_like(r)
        near = r <= 5.0
        rn = r[near] - 1.6
        val[near] = _horner(_C, rn) / _horner(_D, rn)
        rf = r[~near] - 5.0
        val[~near] = _horner(_E, rf) / _horner(_F, rf)
        out[tail] = np.where(q[tail] < 0.0, -val, val)
    return out

