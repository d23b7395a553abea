"""Reverse-mode gradients and the finite-difference checker."""

import numpy as np
import pytest
import torch
from torch import nn

from gfnode.autodiff import DTYPE, activation, grad_check, gradients, silu, tensor


def fd_grad(f, x, eps=1e-6):
    """Central differences on a numpy function, coordinate by coordinate."""
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        up, down = x.copy(), x.copy()
        up[idx] += eps
        down[idx] -= eps
        g[idx] = (f(up) - f(down)) / (2 * eps)
    return g


class TestPrimitives:
    def test_default_dtype(self):
        assert torch.get_default_dtype() == torch.float64
        assert tensor([1.0]).dtype == DTYPE

    def test_square(self):
        x = tensor(3.0, requires_grad=True)
        _, (g,) = gradients(lambda: x ** 2, [x])
        assert g.item() == 6.0

    def test_trace_product(self, rng):
        A0, B = rng.standard_normal((2, 2)), rng.standard_normal((2, 2))
        A = tensor(A0, requires_grad=True)
        _, (g,) = gradients(lambda: torch.trace(A @ tensor(B)), [A])
        np.testing.assert_allclose(g.numpy(), B.T, atol=1e-12)
        np.testing.assert_allclose(g.numpy(), fd_grad(lambda a: np.trace(a @ B), A0), atol=1e-8)

    def test_softmax_gradient_rows_sum_to_zero(self, rng):
        x = tensor(rng.standard_normal((3, 5)), requires_grad=True)
        w = tensor(rng.standard_normal((3, 5)))
        y = torch.softmax(x, dim=-1)
        jac_vec, = torch.autograd.grad((y * w).sum(), x)
        # Each softmax Jacobian is symmetric and annihilates the ones vector.
        np.testing.assert_allclose(jac_vec.sum(-1).numpy(), 0.0, atol=1e-8)

    @pytest.mark.parametrize("op", [
        lambda a, b: (a + b).sum(),
        lambda a, b: (a - b).square().mean(),
        lambda a, b: (a * b).exp().sum(),
        lambda a, b: (a @ b.T).sum(),
        lambda a, b: torch.cat([a, b], dim=0)[1:4].reshape(-1).sum(),
        lambda a, b: (a.T.reshape(2, 6) ** 2).sum(),
        lambda a, b: (torch.softmax(a, dim=1) * b).sum(),
        lambda a, b: (silu(a) * b).sum(),
        lambda a, b: (torch.relu(a) * b).sum(),
        lambda a, b: (a * b[:1]).sum(),
    ])
    def test_chain_rule(self, rng, op):
        a0, b0 = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
        a = tensor(a0, requires_grad=True)
        _, (g,) = gradients(lambda: op(a, tensor(b0)), [a])

        def f(x):
            with torch.no_grad():
                return float(op(torch.as_tensor(x), torch.as_tensor(b0)))
        np.testing.assert_allclose(g.numpy(), fd_grad(f, a0), rtol=1e-5, atol=1e-7)

    def test_silu_matches_torch(self, rng):
        x = tensor(rng.standard_normal(10))
        np.testing.assert_allclose(silu(x).numpy(), torch.nn.functional.silu(x).numpy(),
                                   atol=1e-15)
        assert activation("relu") is torch.relu
        with pytest.raises(ValueError):
            activation("tanh")

    def test_unused_param_gets_zero(self):
        a, b = tensor(1.0, requires_grad=True), tensor(2.0, requires_grad=True)
        value, grads = gradients(lambda: a * 3, [a, b])
        assert value == 3.0 and grads[1].item() == 0.0

    def test_deterministic(self, rng):
        data = rng.standard_normal((4, 4))

        def run():
            torch.manual_seed(0)
            net = nn.Sequential(nn.Linear(4, 8), nn.SiLU(), nn.Linear(8, 1))
            x = tensor(data)
            _, grads = gradients(lambda: net(x).square().sum(), list(net.parameters()))
            return [g.numpy().copy() for g in grads]
        for a, b in zip(run(), run()):
            np.testing.assert_array_equal(a, b)


class TestGradCheck:
    def test_linear(self, rng):
        w = tensor(rng.standard_normal(5), requires_grad=True)
        c = tensor(rng.standard_normal(5))
        assert grad_check(lambda: (w * c).sum(), [w]) < 1e-10

    def test_mlp(self, rng):
        torch.manual_seed(1)
        net = nn.Sequential(nn.Linear(3, 6), nn.SiLU(), nn.Linear(6, 1))
        x, y = tensor(rng.standard_normal((5, 3))), tensor(rng.standard_normal((5, 1)))
        err = grad_check(lambda: ((net(x) - y) ** 2).mean(), list(net.parameters()), eps=1e-4)
        assert err < 1e-4

    def test_detects_wrong_gradient(self):
        class Wrong(torch.autograd.Function):
            @staticmethod
            def forward(ctx, x):
                ctx.save_for_backward(x)
                return x ** 2

            @staticmethod
            def backward(ctx, g):
                (x,) = ctx.saved_tensors
                return g * 3 * x

        w = tensor([1.0, 2.0], requires_grad=True)
        assert grad_check(lambda: Wrong.apply(w).sum(), [w]) > 0.4

    def test_restores_parameters(self, rng):
        w = tensor(rng.standard_normal(4), requires_grad=True)
        before = w.detach().clone()
        grad_check(lambda: (w ** 3).sum(), [w])
        torch.testing.assert_close(w.detach(), before, rtol=0, atol=0)

    def test_eps_range(self):
        w = tensor([1.0], requires_grad=True)
        for eps in (1e-7, 1e-2):
            with pytest.raises(ValueError):
                grad_check(lambda: w.sum(), [w], eps=eps)

    def test_subset(self, rng):
        w = tensor(rng.standard_normal(50), requires_grad=True)
        assert grad_check(lambda: (w ** 2).sum(), [w], max_coords=5) < 1e-6
