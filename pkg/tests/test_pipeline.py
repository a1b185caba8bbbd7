import numpy as np
import pytest

from artifact import channels, codec, diffusion, prng
from artifact.analysis import bit_agreement
from artifact.codec import CodecParams
from artifact.diffusion import ScoreModel, make_schedule
from artifact.pipeline import (Manifest, PipelineConfig, PipelineError, baseline_noise,
                               codec_signal_variance, config_digest, control_noise, extract, hide,
                               make_manifest, recover, render)
from artifact.reference import latent_config, pixel_config


def payload(n, seed=0):
    return np.random.default_rng(seed).integers(0, 2, n).astype(np.uint8)


@pytest.mark.parametrize("Q", [1, 2, 4])
def test_pixel_hide_extract_identity(Q):
    pc = pixel_config(Q=Q, S=1.0)
    bits = payload(700 * Q, Q)
    x, man = hide(bits, pc)
    assert x.shape == (3, 16, 16)
    assert np.array_equal(extract(x, pc, man), bits)


def test_unit_gaussian_pipeline_is_identity():
    dims = 64
    pc = PipelineConfig(mode="pixel", codec=CodecParams(Q=2, S=0.5, key=prng.key_from_seed(3), dims=dims),
                        schedule=make_schedule("linear-beta", 20), model=ScoreModel.unit_gaussian(dims))
    x_T = np.random.default_rng(0).standard_normal((4, dims))
    assert np.max(np.abs(render(x_T, pc) - x_T)) < 1e-10
    assert np.max(np.abs(recover(x_T, pc) - x_T)) < 1e-10


def test_latent_hide_extract_identity():
    pc = latent_config(Q=1, S=1.0)
    bits = payload(150)
    x, man = hide(bits, pc)
    assert x.shape == (3, 16, 16)
    assert np.array_equal(extract(x, pc, man), bits)


def test_latent_emits_quantized_pixels():
    pc = latent_config(Q=1, S=1.0)
    x, _ = hide(payload(40), pc)
    assert np.array_equal(channels.quantize(x, 256), x)


def test_wrong_key_gives_chance_accuracy():
    pc = pixel_config(Q=1, S=0.05)
    bits = payload(768, 5)
    x, man = hide(bits, pc)
    wrong = pc.with_key(prng.key_from_seed(99))
    got = extract(x, wrong, payload_len_bits=len(bits))
    assert abs(bit_agreement(bits, got) - 0.5) < 0.08


def test_awgn_breaks_pixel_extraction():
    pc = pixel_config(Q=1, S=0.05)
    accs = []
    for s in range(8):
        bits = payload(768, 10 + s)
        x, man = hide(bits, pc)
        y = channels.apply_channel(channels.ChannelSpec("awgn", sigma=0.1), x, rng_seed=s)
        accs.append(bit_agreement(bits, extract(y, pc, man)))
    assert 0.45 <= np.mean(accs) <= 0.55


def test_manifest_has_no_secret():
    pc = pixel_config(Q=2, S=0.3712)
    _, man = hide(payload(100), pc)
    text = man.to_json()
    assert pc.codec.key.hex() not in text
    assert "0.3712" not in text and '"S"' not in text
    assert Manifest.from_json(text) == man
    assert man.payload_len_bits == 100


def test_codec_fingerprint_mismatch_is_reported():
    pc = pixel_config(Q=1, S=1.0)
    x, man = hide(payload(64), pc)
    other = pixel_config(Q=2, S=1.0)
    with pytest.raises(diffusion.ScheduleMismatch, match=other.codec.fingerprint()):
        extract(x, other, man)


def test_schedule_fingerprint_mismatch_is_reported():
    pc = pixel_config(Q=1, S=1.0)
    x, man = hide(payload(64), pc)
    other = pixel_config(Q=1, S=1.0, steps=40)
    with pytest.raises(diffusion.ScheduleMismatch):
        extract(x, other, man)


def test_control_noise_matches_signal_variance():
    pc = pixel_config(Q=4, S=0.5)
    ctrl = control_noise(pc, 64)
    base = baseline_noise(pc, 64)
    sig = (ctrl - base) * pc.codec.sigma
    assert sig.var() == pytest.approx(codec_signal_variance(pc.codec), rel=0.03)
    assert ctrl.std() == pytest.approx(1.0, rel=0.02)


def test_signal_variance_matches_uniform_levels():
    c = pixel_config(Q=3, S=0.7).codec
    u = c.S * (np.arange(c.levels) / (c.levels - 1) - 0.5)
    assert codec_signal_variance(c) == pytest.approx(u.var(), rel=1e-12)


def test_config_validation():
    ok = pixel_config()
    with pytest.raises(PipelineError):
        PipelineConfig(mode="latent", codec=ok.codec, schedule=ok.schedule, model=ok.model)
    with pytest.raises(PipelineError):
        PipelineConfig(mode="pixel", codec=ok.codec, schedule=ok.schedule, model=ok.model, shape=(3, 8, 8))
    with pytest.raises(PipelineError):
        PipelineConfig(mode="spectral", codec=ok.codec, schedule=ok.schedule, model=ok.model)


def test_digest_ignores_scale():
    assert config_digest(pixel_config(S=0.1)) == config_digest(pixel_config(S=0.9))
    assert make_manifest(pixel_config(S=0.1), 8) == make_manifest(pixel_config(S=0.9), 8)
