import math

import numpy as np
import pytest
import torch
from torch.autograd import gradcheck

from dfa.aggregation import (
    AggregationLossConfig,
    LossReport,
    Reduction,
    aggregation_loss,
    aggregation_residual,
    draw_noise,
)
from dfa.errors import DimensionError, NumericError, ParameterError
from dfa.models import LinearExtractor
from dfa.mixing import convex

MSE = AggregationLossConfig(sigma=0.0)
ROOT = AggregationLossConfig(sigma=0.0, reduction=Reduction.ROOT_OF_NORM)


def test_residual_vanishes_at_the_pivot():
    v_i, v_j = np.array([[1.5, -2.0]]), np.array([[0.25, 4.0]])
    v_hat = 0.3 * v_i + 0.7 * v_j
    assert np.array_equal(aggregation_residual(v_i, v_j, v_hat, 0.3, 0.0), np.zeros((1, 2)))


def test_residual_midpoint_example():
    r = aggregation_residual(np.array([[2.0, 0.0]]), np.array([[0.0, 2.0]]), np.zeros((1, 2)), 0.5, 0.0)
    assert np.array_equal(r, [[1.0, 1.0]])


def test_residual_at_lambda_one():
    v_i, v_j, v_hat = np.array([[3.0, 1.0]]), np.array([[9.0, 9.0]]), np.array([[1.0, 1.0]])
    assert np.array_equal(aggregation_residual(v_i, v_j, v_hat, 1.0), v_i - v_hat)


def test_residual_shape_checks():
    with pytest.raises(DimensionError):
        aggregation_residual(np.zeros((2, 3)), np.zeros((2, 3)), np.zeros((2, 4)), 0.5)
    with pytest.raises(DimensionError):
        aggregation_residual(np.zeros((2, 3)), np.zeros((2, 3)), np.zeros((2, 3)), 0.5, np.zeros((2, 2)))
    with pytest.raises(DimensionError):
        aggregation_residual(np.zeros((1, 2)), np.zeros((1, 2)), np.zeros((1, 2)), 0.5, 0.1)


@pytest.mark.parametrize("cfg", [MSE, ROOT])
def test_zero_residual_zero_loss(cfg):
    assert aggregation_loss(np.zeros((3, 4)), cfg) == 0.0
    assert float(aggregation_loss(torch.zeros(3, 4), cfg)) == 0.0


def test_mean_squared_example():
    assert aggregation_loss(np.array([[1.0, 1.0]]), MSE) == 1.0


def test_root_of_norm_example():
    got = aggregation_loss(np.array([[1.0, 1.0]]), ROOT)
    assert got == pytest.approx(math.sqrt(math.sqrt(2.0)), abs=1e-15)
    assert round(got, 4) == 1.1892


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_nonfinite_residual(bad):
    with pytest.raises(NumericError):
        aggregation_loss(np.array([[0.0, bad]]), MSE)


def test_negative_sigma():
    with pytest.raises(ParameterError):
        AggregationLossConfig(sigma=-0.1)


@pytest.mark.parametrize("cfg", [MSE, ROOT])
def test_gradient_matches_central_differences(cfg):
    g = torch.Generator().manual_seed(0)
    v_i, v_j, v_hat = (torch.randn(4, 5, generator=g, dtype=torch.float64, requires_grad=True)
                       for _ in range(3))

    def f(a, b, c):
        return aggregation_loss(aggregation_residual(a, b, c, 0.3), cfg)

    assert gradcheck(f, (v_i, v_j, v_hat), eps=1e-6, atol=0, rtol=1e-4)


def test_noise_carries_no_gradient():
    n = draw_noise((2, 3), 0.05, np.random.default_rng(0), torch.float64)
    assert not n.requires_grad
    v = torch.zeros(2, 3, dtype=torch.float64, requires_grad=True)
    aggregation_loss(aggregation_residual(v, v, v, 0.5, n), MSE).backward()
    # d/dv of mean((0.5v + 0.5v - v + n)^2) is identically zero
    assert torch.equal(v.grad, torch.zeros_like(v))


def test_noise_only_loss_converges_to_variance():
    sigma = 0.05
    rng = np.random.default_rng(3)
    zero = torch.zeros(4, 8, dtype=torch.float64)
    losses = [
        float(aggregation_loss(aggregation_residual(zero, zero, zero, 0.5,
                                                    draw_noise(zero.shape, sigma, rng, torch.float64)), MSE))
        for _ in range(10_000)
    ]
    assert abs(np.mean(losses) / sigma**2 - 1.0) < 0.05


def test_noise_draws_are_seeded():
    a = draw_noise((3,), 0.1, np.random.default_rng(9))
    b = draw_noise((3,), 0.1, np.random.default_rng(9))
    assert torch.equal(a, b)
    assert torch.equal(draw_noise((3,), 0.0, np.random.default_rng(9)), torch.zeros(3))


@pytest.mark.parametrize("cfg", [MSE, ROOT])
def test_linear_extractor_is_a_fixed_point(cfg, f64):
    torch.manual_seed(0)
    f = LinearExtractor((6,), 4, hidden=(5,)).double()
    rng = np.random.default_rng(0)
    x_i, x_j = torch.from_numpy(rng.random((32, 6))), torch.from_numpy(rng.random((32, 6)))
    for lam in rng.random(10):
        r = aggregation_residual(f(x_i), f(x_j), f(convex(x_i, x_j, lam)), lam)
        assert float(aggregation_loss(r.detach(), AggregationLossConfig(sigma=0.0))) < 1e-24
        assert torch.abs(r).max() < 1e-12


def test_loss_report_adds_up():
    rep = LossReport.from_parts(0.25, 1.5)
    assert rep.l_t == rep.l_a + rep.l_c == 1.75
