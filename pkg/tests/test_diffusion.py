import math

import numpy as np
import pytest
from scipy.special import logsumexp

from artifact import diffusion as D

# measured once for Gaussian(mean=2, var=0.25), 16 dims, 64 samples, order 3, 50 steps
# (1.50e-4 and 4.42e-4), frozen with headroom
GEN_ERR_50 = 2e-4
ROUNDTRIP_ERR_50 = 6e-4


@pytest.fixture(scope="module")
def gauss():
    return D.ScoreModel.gaussian(16, 2.0, 0.25)


@pytest.fixture(scope="module")
def x16():
    return np.random.default_rng(0).standard_normal((64, 16))


@pytest.mark.parametrize("kind", D.SCHEDULE_KINDS)
def test_schedule_tables(kind):
    s = D.make_schedule(kind, 50)
    assert len(s.lambda_t) == 51
    assert np.all(np.diff(s.lambda_t) > 0)
    assert np.all(np.diff(s.t_grid) < 0)
    assert np.allclose(s.alpha_bar + s.sigma_t**2, 1.0, rtol=0, atol=1e-14)
    assert np.allclose(np.log(s.alpha_t / s.sigma_t), s.lambda_t, rtol=0, atol=1e-10)


@pytest.mark.parametrize("kind", D.SCHEDULE_KINDS)
def test_inverse_lambda_roundtrip(kind):
    vp = D.VPSchedule(kind=kind)
    t = np.linspace(1e-3, vp.t_max, 200)
    assert np.allclose(vp.inverse_lam(vp.lam(t)), t, rtol=0, atol=1e-9)


def test_linear_schedule_endpoints():
    s = D.make_schedule("linear-beta", 50)
    assert s.alpha_bar[0] == pytest.approx(math.exp(-0.5 * 19.9 - 0.1), rel=1e-10)
    assert s.t_grid[-1] == 1e-3


def test_fingerprint_stable_and_distinct():
    a, b = D.make_schedule("linear-beta", 50), D.make_schedule("linear-beta", 50)
    assert a.fingerprint == b.fingerprint
    assert a.fingerprint != D.make_schedule("linear-beta", 40).fingerprint
    assert a.fingerprint != D.make_schedule("cosine", 50).fingerprint


def test_schedule_errors():
    with pytest.raises(D.ScheduleError):
        D.make_schedule("sigmoid", 50)
    with pytest.raises(D.ScheduleError):
        D.make_schedule("linear-beta", 1)


def _log_density(model, x, a, s):
    v = a * a * model.var + s * s
    diff = x[:, None, :] - a * model.means[None]
    comp = -0.5 * np.sum(diff**2 / v + np.log(2 * np.pi * v), axis=-1)
    return logsumexp(comp + np.log(model.weights)[None], axis=1)


@pytest.mark.parametrize("kind", ["gaussian", "gaussian_mixture"])
def test_eps_is_scaled_score(kind):
    if kind == "gaussian":
        model = D.ScoreModel.gaussian(3, [0.5, -1.0, 0.2], [0.3, 0.5, 1.2])
    else:
        model = D.ScoreModel.mixture([0.3, 0.7], [[1.0, -1.0, 0.5], [-0.5, 0.5, 0.0]], [0.2, 0.3, 0.4])
    a, s = 0.8, 0.6
    x = np.random.default_rng(1).standard_normal((5, 3))
    h = 1e-5
    grad = np.empty_like(x)
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        grad[:, j] = (_log_density(model, x + e, a, s) - _log_density(model, x - e, a, s)) / (2 * h)
    assert np.allclose(model.eps(x, a, s), -s * grad, rtol=0, atol=1e-8)


def test_eps_eval_on_and_off_grid(gauss, x16):
    s = D.make_schedule("linear-beta", 50)
    a, sg = D.alpha_sigma(s.lambda_t[10])
    assert np.allclose(D.eps_eval(gauss, x16, s.t_grid[10], s), gauss.eps(x16, a, sg))
    mid = 0.5 * (s.t_grid[10] + s.t_grid[11])
    D.eps_eval(gauss, x16, mid, s)
    with pytest.raises(D.ScheduleError):
        D.eps_eval(gauss, x16, 2.0, s)


def test_unit_gaussian_flow_is_stationary():
    m = D.ScoreModel.unit_gaussian(32)
    x = np.random.default_rng(3).standard_normal((8, 32))
    for kind in D.SCHEDULE_KINDS:
        s = D.make_schedule(kind, 50)
        y = D.generate(m, s, x, D.SolverConfig(3, 50, "generate"))
        assert np.max(np.abs(y - x)) < 1e-10
        assert np.max(np.abs(D.invert(m, s, y, D.SolverConfig(3, 50, "invert")) - x)) < 1e-10


def test_generate_matches_closed_form(gauss, x16):
    s = D.make_schedule("linear-beta", 50)
    y = D.generate(gauss, s, x16, D.SolverConfig(3, 50, "generate"))
    ex = D.exact_gaussian_flow(gauss, x16, s.lambda_t[0], s.lambda_t[-1])
    assert np.max(np.abs(y - ex)) < GEN_ERR_50


def test_roundtrip_error_bound(gauss, x16):
    s = D.make_schedule("linear-beta", 50)
    y = D.generate(gauss, s, x16, D.SolverConfig(3, 50, "generate"))
    z = D.invert(gauss, s, y, D.SolverConfig(3, 50, "invert"))
    assert np.max(np.abs(z - x16)) < ROUNDTRIP_ERR_50


def _errors(model, x, order, steps_list):
    out = []
    for n in steps_list:
        s = D.make_schedule("linear-beta", n)
        y = D.generate(model, s, x, D.SolverConfig(order, n, "generate"))
        out.append(np.max(np.abs(y - D.exact_gaussian_flow(model, x, s.lambda_t[0], s.lambda_t[-1]))))
    return np.array(out)


def test_third_order_convergence(gauss, x16):
    e = _errors(gauss, x16, 3, [8, 16, 32, 64, 128, 256])
    assert np.min(np.log2(e[:-1] / e[1:])) >= 2.1


@pytest.mark.parametrize("order,lo", [(1, 0.8), (2, 1.7)])
def test_lower_orders_converge_at_their_rate(gauss, x16, order, lo):
    e = _errors(gauss, x16, order, [32, 64, 128, 256])
    assert np.min(np.log2(e[:-1] / e[1:])) >= lo


def test_mixture_roundtrip():
    dims = 12
    means = np.stack([np.full(dims, 0.6), np.full(dims, -0.6)])
    m = D.ScoreModel.mixture([0.5, 0.5], means, 0.1)
    x = np.random.default_rng(4).standard_normal((16, dims))
    s = D.make_schedule("linear-beta", 100)
    y = D.generate(m, s, x, D.SolverConfig(3, 100, "generate"))
    z = D.invert(m, s, y, D.SolverConfig(3, 100, "invert"))
    assert np.max(np.abs(z - x)) < 1e-2


def test_reference_integrator_is_first_order(gauss, x16):
    s = D.make_schedule("linear-beta", 50)
    ex = D.exact_gaussian_flow(gauss, x16, s.lambda_t[0], s.lambda_t[-1])
    e1 = np.max(np.abs(D.reference_integrate(gauss, s, x16, "generate", 1000) - ex))
    e2 = np.max(np.abs(D.reference_integrate(gauss, s, x16, "generate", 2000) - ex))
    assert math.log2(e1 / e2) == pytest.approx(1.0, abs=0.05)


def test_reference_and_solver_agree(gauss, x16):
    s = D.make_schedule("linear-beta", 50)
    ref = D.reference_integrate(gauss, s, x16, "invert", 8000)
    y = D.invert(gauss, s, x16, D.SolverConfig(3, 50, "invert"))
    # measured 1.67e-3: Euler at 8000 steps is 1.35e-3 from the exact inverse map,
    # the 50-step solver 3.1e-4
    assert np.max(np.abs(ref - y)) < 2.5e-3


def test_reference_step_floor(gauss, x16):
    s = D.make_schedule("linear-beta", 50)
    with pytest.raises(D.SolverConfigError):
        D.reference_integrate(gauss, s, x16, "generate", 499)


@pytest.mark.parametrize("kw", [dict(order=4), dict(order=0), dict(order=3, steps=2), dict(direction="up")])
def test_solver_config_errors(kw):
    with pytest.raises(D.SolverConfigError):
        D.SolverConfig(**kw)


def test_solver_rejects_wrong_direction_and_steps(gauss, x16):
    s = D.make_schedule("linear-beta", 50)
    with pytest.raises(D.SolverConfigError):
        D.generate(gauss, s, x16, D.SolverConfig(3, 50, "invert"))
    with pytest.raises(D.SolverConfigError):
        D.generate(gauss, s, x16, D.SolverConfig(3, 40, "generate"))


def test_nonfinite_input_rejected(gauss):
    s = D.make_schedule("linear-beta", 50)
    x = np.zeros((1, 16))
    x[0, 3] = np.nan
    with pytest.raises(ValueError):
        D.generate(gauss, s, x, D.SolverConfig(3, 50, "generate"))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_detected():
    m = D.ScoreModel.gaussian(4, 0.0, 0.01)
    s = D.make_schedule("linear-beta", 10)
    with pytest.raises(D.IntegrationDiverged):
        D.invert(m, s, np.full((1, 4), 1e307), D.SolverConfig(3, 10, "invert"))


def test_fingerprint_mismatch(gauss, x16):
    s = D.make_schedule("linear-beta", 50)
    with pytest.raises(D.ScheduleMismatch):
        D.invert(gauss, s, x16, D.SolverConfig(3, 50, "invert"), expected_fingerprint="0" * 16)


def test_model_validation():
    with pytest.raises(ValueError):
        D.ScoreModel.mixture([0.5, 0.6], [[0.0], [1.0]], 1.0)
    with pytest.raises(ValueError):
        D.ScoreModel.gaussian(3, 0.0, -1.0)
