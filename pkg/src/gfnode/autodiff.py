"""Reverse-mode differentiation on dense float64 tensors.

Tensors are ``torch.Tensor`` objects in 64-bit precision; torch's autograd
tape records every primitive used by the model (add, sub, mul, matmul,
transpose, reshape, cat, slicing, sum, mean, silu, softmax, exp, square
and broadcasting). :func:`grad_check` is an independent central-difference
oracle for any scalar loss built from them.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
import torch

DTYPE = torch.float64

torch.set_default_dtype(DTYPE)


def tensor(data, requires_grad: bool = False) -> torch.Tensor:
    return torch.tensor(np.asarray(data, dtype=np.float64), dtype=DTYPE,
                        requires_grad=requires_grad)


def silu(x: torch.Tensor) -> torch.Tensor:
    return x * torch.sigmoid(x)


def activation(name: str) -> Callable:
    if name == "silu":
        return silu
    if name == "relu":
        return torch.relu
    raise ValueError(f"unknown activation {name!r}")


def gradients(f: Callable[[], torch.Tensor], params: Sequence[torch.Tensor]):
    """Evaluate ``f()`` and return ``(value, [d value / d p for p in params])``."""
    value = f()
    grads = torch.autograd.grad(value, list(params), allow_unused=True)
    grads = [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)]
    return float(value.detach()), grads


def grad_check(f: Callable[[], torch.Tensor], params: Sequence[torch.Tensor],
               eps: float = 1e-4, max_coords: int | None = None, seed: int = 0) -> float:
    """Largest ``|g_ad - g_fd| / max(1, |g_fd|)`` over parameter coordinates.

    ``f`` is re-evaluated with each coordinate nudged by ``+-eps`` in place.
    When ``max_coords`` is given, a seeded random subset of coordinates is
    checked instead of all of them.
    """
    if not (1e-6 <= eps <= 1e-3):
        raise ValueError("eps must lie in [1e-6, 1e-3]")
    _, analytic = gradients(f, params)
    coords = [(pi, idx) for pi, p in enumerate(params) for idx in range(p.numel())]
    if max_coords is not None and max_coords < len(coords):
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[i] for i in sorted(pick)]
    worst = 0.0
    with torch.no_grad():
        for pi, idx in coords:
            flat = params[pi].view(-1)
            orig = flat[idx].item()
            flat[idx] = orig + eps
            up = float(f())
            flat[idx] = orig - eps
            down = float(f())
            flat[idx] = orig
            g_fd = (up - down) / (2 * eps)
            g_ad = analytic[pi].reshape(-1)[idx].item()
            worst = max(worst, abs(g_ad - g_fd) / max(1.0, abs(g_fd)))
    return worst
