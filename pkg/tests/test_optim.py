import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eyeglass_recon.optim import Adam, adam_update


def test_zero_gradient_keeps_params(rng):
    x = rng.normal(size=(5, 3))
    opt = Adam(1e-2)
    y = x
    for _ in range(10):
        y = opt.step(y, np.zeros_like(x))
    assert np.array_equal(x, y)


@settings(max_examples=50, deadline=None)
@given(st.floats(-1e3, 1e3).filter(lambda g: abs(g) > 1e-6), st.floats(1e-5, 1.0))
def test_first_step_by_hand(g, lr):
    # after bias correction m_hat = g and v_hat = g^2
    opt = Adam(lr, eps=1e-8)
    x = opt.step(np.array([0.5]), np.array([g]))
    assert x[0] == pytest.approx(0.5 - lr * g / (abs(g) + 1e-8), rel=1e-12, abs=1e-15)


def test_second_step_by_hand():
    opt = Adam(0.1, beta1=0.5, beta2=0.75, eps=0.0 + 1e-12)
    x = opt.step(np.array([1.0]), np.array([2.0]))
    x = opt.step(x, np.array([4.0]))
    m = 0.5 * (0.5 * 2.0) + 0.5 * 4.0
    v = 0.75 * (0.25 * 4.0) + 0.25 * 16.0
    m_hat, v_hat = m / (1 - 0.25), v / (1 - 0.5625)
    expect = 1.0 - 0.1 - 0.1 * m_hat / (np.sqrt(v_hat) + 1e-12)
    assert x[0] == pytest.approx(expect, rel=1e-12)


def test_quadratic_bowl():
    opt = Adam(1e-3)
    x = np.array([1.0])
    for _ in range(10_000):
        x = adam_update(opt, x, 2 * x)
    assert abs(x[0]) < 1e-3


@pytest.mark.parametrize("kw", [{"lr": 0.0}, {"beta1": 1.0}, {"beta2": -0.1}, {"eps": 0.0}])
def test_invalid_hyperparameters(kw):
    with pytest.raises(ValueError):
        Adam(**kw)


def test_shape_checks():
    opt = Adam()
    with pytest.raises(ValueError):
        opt.step(np.zeros(3), np.zeros(4))
    opt.step(np.zeros(3), np.ones(3))
    with pytest.raises(ValueError):
        opt.step(np.zeros(2), np.ones(2))
