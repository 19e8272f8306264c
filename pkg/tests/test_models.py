import numpy as np
import pytest
import torch
from torch.autograd import gradcheck

from dfa.analysis import lipschitz_residual
from dfa.errors import DimensionError, ParameterError
from dfa.mixing import convex
from dfa.models import (
    MLP,
    IdentityExtractor,
    LinearExtractor,
    SmallCNN,
    build_extractor,
    build_model,
    forward,
    manifold_mix_forward,
)


def batch(shape, n=5, seed=0):
    return torch.from_numpy(np.random.default_rng(seed).random((n, *shape)))


def test_identity_extractor_returns_input():
    x = batch((4,))
    assert torch.equal(forward(IdentityExtractor((4,)), x), x)


def test_one_row_per_sample():
    f = SmallCNN((1, 8, 8), embed_dim=16).double()
    for n in (1, 7):
        assert forward(f, batch((1, 8, 8), n)).shape == (n, 16)


def test_forward_is_deterministic():
    f = SmallCNN().double()
    x = batch((1, 8, 8))
    assert torch.equal(f(x), f(x))


def test_wrong_sample_shape():
    with pytest.raises(DimensionError):
        SmallCNN()(torch.zeros(2, 1, 9, 9))


def test_same_seed_same_model():
    arch = {"name": "small_cnn", "input_shape": [1, 8, 8], "embed_dim": 16}
    a, b = build_model(arch, 10, seed=4), build_model(arch, 10, seed=4)
    for p, q in zip(a.state_dict().values(), b.state_dict().values()):
        assert torch.equal(p, q)
    c = build_model(arch, 10, seed=5)
    assert not torch.equal(a.extractor.blocks[0][0].weight, c.extractor.blocks[0][0].weight)


def test_arch_round_trips_through_registry():
    f = SmallCNN((1, 8, 8), embed_dim=12, widths=(4, 6))
    g = build_extractor(f.arch)
    assert type(g) is SmallCNN and g.arch == f.arch
    with pytest.raises(ParameterError):
        build_extractor({"name": "resnet"})


def test_unknown_activation():
    with pytest.raises(ParameterError):
        MLP((4,), 3, activation="gelu-ish")


@pytest.fixture
def cnn():
    torch.manual_seed(0)
    return SmallCNN((1, 8, 8), embed_dim=8, widths=(3, 4)).double()


def test_mix_at_input_equals_forward_of_mix(cnn):
    x_i, x_j = batch((1, 8, 8), seed=1), batch((1, 8, 8), seed=2)
    assert torch.equal(manifold_mix_forward(cnn, x_i, x_j, 0.37, 0), cnn(convex(x_i, x_j, 0.37)))


@pytest.mark.parametrize("layer", [0, 1, 2, 3])
def test_lambda_one_is_plain_forward(cnn, layer):
    x_i, x_j = batch((1, 8, 8), seed=1), batch((1, 8, 8), seed=2)
    assert torch.equal(manifold_mix_forward(cnn, x_i, x_j, 1.0, layer), cnn(x_i))


@pytest.mark.parametrize("layer", [0, 1, 2])
def test_linear_extractor_commutes_with_mixing(layer):
    torch.manual_seed(0)
    f = LinearExtractor((6,), 4, hidden=(5,)).double()
    x_i, x_j = batch((6,), seed=1), batch((6,), seed=2)
    got = manifold_mix_forward(f, x_i, x_j, 0.3, layer)
    want = 0.3 * f(x_i) + 0.7 * f(x_j)
    torch.testing.assert_close(got, want, rtol=0, atol=1e-12)


@pytest.mark.parametrize("layer", [-1, 4, 1.5])
def test_invalid_layer(cnn, layer):
    x = batch((1, 8, 8))
    with pytest.raises(ParameterError):
        manifold_mix_forward(cnn, x, x, 0.5, layer)


def test_parameter_gradients_match_finite_differences(cnn):
    params = list(cnn.parameters())
    assert sum(p.numel() for p in params) <= 1000
    x = batch((1, 8, 8), n=3, seed=3)
    target = torch.from_numpy(np.random.default_rng(4).normal(size=(3, 8)))
    names = [n for n, _ in cnn.named_parameters()]

    def loss(*ps):
        out = torch.func.functional_call(cnn, dict(zip(names, ps)), (x,))
        return ((out - target) ** 2).sum()

    leaves = tuple(p.detach().clone().requires_grad_(True) for p in params)
    assert gradcheck(loss, leaves, eps=1e-6, atol=1e-8, rtol=1e-4)


def test_identity_activation_has_no_lipschitz_residual():
    torch.manual_seed(1)
    g = MLP((1, 8, 8), 8, hidden=(16, 12), activation="identity").double()
    x_i, x_j = batch((1, 8, 8), 20, seed=5), batch((1, 8, 8), 20, seed=6)
    lams = np.random.default_rng(0).random(20)
    assert lipschitz_residual(g, x_i, x_j, lams).residuals.max() <= 1e-9
