import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from artifact import codec, prng
from artifact.codec import CodecParams


def params(Q=2, S=0.5, dims=64, seed=0):
    return CodecParams(Q=Q, S=S, key=prng.key_from_seed(seed), dims=dims)


def test_sigma_formula():
    p = params(Q=4, S=0.5)
    assert p.sigma == pytest.approx(math.sqrt(1 + 0.25 * 17 / (12 * 15)), rel=1e-15)
    assert p.margin == pytest.approx(0.5 / (2 * p.sigma * 15), rel=1e-15)


def test_stored_sigma_checked_to_one_ulp():
    p = params()
    CodecParams(Q=p.Q, S=p.S, key=p.key, dims=p.dims, sigma=p.sigma)
    with pytest.raises(codec.CodecError):
        CodecParams(Q=p.Q, S=p.S, key=p.key, dims=p.dims, sigma=p.sigma * (1 + 1e-12))


@pytest.mark.parametrize("kw", [dict(Q=0), dict(Q=17), dict(S=0.0), dict(S=-1.0), dict(S=float("inf")),
                                dict(dims=0)])
def test_invalid_params(kw):
    base = dict(Q=2, S=0.5, key=prng.key_from_seed(0), dims=4)
    base.update(kw)
    with pytest.raises(codec.CodecError):
        CodecParams(**base)


def test_short_key_rejected():
    with pytest.raises(codec.CodecError):
        CodecParams(Q=1, S=1.0, key=b"abc", dims=4)


def test_pack_is_msb_first():
    s = codec.pack_message([1, 0, 1, 1, 0, 0], Q=3, dims=2, key=prng.key_from_seed(0))
    assert s.symbols.tolist() == [5, 4]
    assert s.payload_len_bits == 6


def test_capacity_exceeded():
    with pytest.raises(codec.CapacityExceeded):
        codec.pack_message(np.ones(9, int), Q=2, dims=4, key=prng.key_from_seed(0))


def test_padding_slot_independent_of_payload_length():
    key = prng.key_from_seed(3)
    full = codec.pack_message([], Q=1, dims=32, key=key)
    part = codec.pack_message(full.symbols[:10], Q=1, dims=32, key=key)
    assert np.array_equal(full.symbols, part.symbols)


def test_non_binary_bits_rejected():
    with pytest.raises(codec.CodecError):
        codec.pack_message([0, 2], Q=1, dims=4, key=prng.key_from_seed(0))


@settings(max_examples=80, deadline=None)
@given(Q=st.sampled_from([1, 2, 3, 4, 8, 12, 16]), dims=st.integers(1, 64), data=st.data())
def test_pack_unpack_roundtrip(Q, dims, data):
    n = data.draw(st.integers(0, Q * dims))
    bits = data.draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    s = codec.pack_message(bits, Q, dims, prng.key_from_seed(1))
    assert codec.unpack_message(s, Q).tolist() == bits


@settings(max_examples=60, deadline=None)
@given(Q=st.sampled_from([1, 2, 4, 8, 16]), S=st.floats(1e-3, 20.0), seed=st.integers(0, 2**32))
def test_map_demap_identity(Q, S, seed):
    p = params(Q=Q, S=S, dims=48, seed=seed)
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, Q * 48)
    stream = codec.pack_message(bits, Q, 48, p.key)
    x = codec.map_message(stream, p)
    assert np.array_equal(codec.demap_noise(x, p, stream.payload_len_bits).symbols, stream.symbols)


def test_lut_path_bitwise_equal_to_direct():
    for Q in (1, 4, 8):
        p = params(Q=Q, S=0.37, dims=256)
        s = codec.pack_message(np.random.default_rng(Q).integers(0, 2, Q * 256), Q, 256, p.key)
        assert np.array_equal(codec.map_with_lut(s, p), codec.map_message(s, p))


def test_perturbation_below_margin_never_flips():
    rng = np.random.default_rng(11)
    for Q in (1, 2, 4, 8):
        p = params(Q=Q, S=0.3, dims=512)
        s = codec.pack_message(rng.integers(0, 2, Q * 512), Q, 512, p.key)
        x = codec.map_message(s, p)
        sign = rng.choice([-1.0, 1.0], size=512)
        y = x + sign * p.margin * (1 - 1e-9)
        assert np.array_equal(codec.demap_noise(y, p).symbols, s.symbols)


def test_perturbation_above_margin_flips_interior_symbols():
    p = params(Q=4, S=0.3, dims=16)
    s = codec.SymbolStream(np.full(16, 7), 64)
    x = codec.map_message(s, p)
    y = codec.demap_noise(x + p.margin * 1.01, p)
    assert np.all(y.symbols == 8)


def test_mapped_noise_has_unit_variance():
    p = params(Q=2, S=1.5, dims=200_000)
    s = codec.pack_message(np.random.default_rng(0).integers(0, 2, 400_000), 2, 200_000, p.key)
    x = codec.map_message(s, p)
    assert abs(x.var() - 1.0) < 0.01
    assert abs(x.mean()) < 0.01


def test_batched_mapping_consumes_stream_row_major():
    p = params(Q=2, S=0.5, dims=8)
    m = np.random.default_rng(2).integers(0, 4, (3, 8))
    batched = codec.map_symbols(m, p)
    rows = [codec.map_symbols(m[i], p, offset=8 * i) for i in range(3)]
    assert np.array_equal(batched, np.stack(rows))


def test_dimension_mismatch():
    p = params(dims=8)
    with pytest.raises(codec.DimensionMismatch):
        codec.demap_noise(np.zeros(7), p)
    with pytest.raises(codec.DimensionMismatch):
        codec.map_message(codec.SymbolStream(np.zeros(7, int), 0), p)


def test_unpack_rejects_out_of_range_symbols():
    with pytest.raises(codec.MalformedSymbols):
        codec.unpack_message(codec.SymbolStream(np.array([0, 4]), 4), 2)


def test_demap_clamps_to_valid_levels():
    p = params(Q=2, S=0.5, dims=4)
    out = codec.demap_noise(np.array([1e6, -1e6, 0.0, 0.0]), p)
    assert out.symbols.min() >= 0 and out.symbols.max() <= 3


def test_fingerprint_hides_key_and_scale():
    a, b = params(S=0.5, seed=0), params(S=2.0, seed=1)
    assert a.fingerprint() == b.fingerprint()
    assert a.fingerprint() != params(Q=3).fingerprint()
