import numpy as np
import pytest

from paralm import tensor as T
from paralm.optim import (
    AdamConfig, GradCheckReport, OptimizerError, ParamStore, adam_step,
    gradient_check,
)
from paralm.tensor import Tensor, backward


def test_adam_defaults():
    cfg = AdamConfig()
    assert cfg.learning_rate == 1e-4
    assert cfg.beta1 == 0.9
    assert cfg.beta2 == 0.999
    assert cfg.epsilon == 1e-8
    assert cfg.weight_decay == 0.01


@pytest.mark.parametrize("kwargs", [
    {"learning_rate": 0.0},
    {"beta1": 1.0},
    {"beta2": 0.0},
    {"epsilon": -1e-8},
    {"weight_decay": -0.1},
])
def test_adam_config_validation(kwargs):
    with pytest.raises(ValueError):
        AdamConfig(**kwargs)


def test_first_step_closed_form():
    # m_hat = g, v_hat = g^2 on step one, so the update is lr * g/(|g|+eps).
    params = ParamStore()
    p = params.register("w", np.zeros(1))
    p.grad = np.array([0.5])
    adam_step(params, AdamConfig(learning_rate=1e-4, weight_decay=0.0))
    expect = -1e-4 * (0.5 / (0.5 + 1e-8))
    np.testing.assert_allclose(p.data, [expect], rtol=1e-12)
    assert params.step_count == 1
    assert p.grad is None


def test_zero_grad_zero_decay_leaves_param():
    params = ParamStore()
    p = params.register("w", np.array([1.5, -2.0]))
    p.grad = np.zeros(2)
    adam_step(params, AdamConfig(weight_decay=0.0))
    np.testing.assert_array_equal(p.data, [1.5, -2.0])


def test_missing_grad_names_parameter():
    params = ParamStore()
    params.register("first", np.zeros(2)).grad = np.zeros(2)
    params.register("second", np.zeros(2))
    with pytest.raises(OptimizerError, match="second"):
        adam_step(params, AdamConfig())


def test_decay_flag_exempts_parameter():
    params = ParamStore()
    decayed = params.register("w", np.array([1.0]))
    exempt = params.register("b", np.array([1.0]), decay=False)
    decayed.grad = np.zeros(1)
    exempt.grad = np.zeros(1)
    adam_step(params, AdamConfig(learning_rate=1e-2, weight_decay=0.1))
    assert exempt.data[0] == 1.0
    assert decayed.data[0] == pytest.approx(1.0 - 1e-2 * 0.1 * 1.0)


def test_duplicate_name_rejected():
    params = ParamStore()
    params.register("w", np.zeros(1))
    with pytest.raises(ValueError, match="duplicate"):
        params.register("w", np.zeros(1))


def _run_steps(seed, n_steps):
    rng = np.random.default_rng(seed)
    params = ParamStore()
    w = params.register("w", rng.normal(size=(4, 3)))
    cfg = AdamConfig(learning_rate=1e-3)
    data = Tensor(rng.normal(size=(2, 4)))
    for _ in range(n_steps):
        loss = T.sum_all(T.mul(T.matmul(data, w), T.matmul(data, w)))
        backward(loss)
        adam_step(params, cfg)
    return w.data.copy()


def test_adam_bitwise_reproducible():
    a = _run_steps(3, 10)
    b = _run_steps(3, 10)
    assert np.array_equal(a, b)


def test_gradient_check_quadratic():
    rng = np.random.default_rng(0)
    params = ParamStore()
    params.register("x", rng.normal(size=8))
    coeff = Tensor(rng.normal(size=8))

    def f(ps):
        x = ps["x"]
        return T.sum_all(T.add(T.mul(x, x), T.mul(coeff, x)))

    report = gradient_check(f, params, tolerance=1e-7, n_coords=8)
    assert report.passed
    assert report.max_rel_error < 1e-7
    assert report.n_checked == 8


def test_gradient_check_zero_tolerance_always_fails():
    params = ParamStore()
    params.register("x", np.ones(3))

    def f(ps):
        return T.sum_all(T.mul(ps["x"], ps["x"]))

    report = gradient_check(f, params, tolerance=0.0)
    assert not report.passed
    assert isinstance(report, GradCheckReport)
    assert "FAIL" in report.summary()


def test_fingerprint_tracks_mutation():
    params = ParamStore()
    w = params.register("w", np.ones(4))
    before = params.fingerprint()
    assert params.fingerprint() == before
    w.data[0] = 2.0
    assert params.fingerprint() != before
