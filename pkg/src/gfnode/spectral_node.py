"""Learnable vector field on graph Fourier coefficients.

Scalar coefficients H~ (B, M, F) and vector coefficients Z~ (B, M, m, 3)
evolve under separate fields f and g. Each field runs multi-head
self-attention with the M modes as sequence positions, appends a learned
time embedding along the feature axis and applies one linear map per mode.

The vector field never mixes spatial axes: projections act on the channel
axis only, attention logits sum query-key products over the three axes (so
they are rotation invariant), and the time embedding enters as an outer
product with the mode's mean channel vector. Together these make g exactly
SO(3)-equivariant.
"""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

from . import autodiff  # noqa: F401  (sets float64 default)
from .errors import InvalidArgumentError
from .ode import SolverConfig, integrate, rk4_grid, vector_error_norm
from .spectral import SpectralState


def _time_tensor(t, batch: int, like: torch.Tensor) -> torch.Tensor:
    if torch.is_tensor(t):
        t = t.to(like)
    else:
        t = like.new_tensor(np.asarray(t, dtype=np.float64))
    if t.ndim == 0:
        t = t.expand(batch)
    return t


class TimeEmbedding(nn.Module):
    """Affine map from a scalar time to a ``width``-vector."""

    def __init__(self, width: int):
        super().__init__()
        self.linear = nn.Linear(1, width)

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        return self.linear(t[..., None])


class ModeAttention(nn.Module):
    """Standard multi-head self-attention across modes for scalar features."""

    def __init__(self, width: int, heads: int):
        super().__init__()
        if width % heads:
            raise InvalidArgumentError(f"heads ({heads}) must divide width ({width})")
        self.heads = heads
        self.query = nn.Linear(width, width)
        self.key = nn.Linear(width, width)
        self.value = nn.Linear(width, width)
        self.out = nn.Linear(width, width)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, m, w = x.shape
        hd = w // self.heads

        def split(y):
            return y.reshape(b, m, self.heads, hd).transpose(1, 2)

        q, k, v = split(self.query(x)), split(self.key(x)), split(self.value(x))
        att = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(hd), dim=-1)
        y = (att @ v).transpose(1, 2).reshape(b, m, w)
        return self.out(y)


class VectorModeAttention(nn.Module):
    """Multi-head attention across modes for (m, 3) vector features."""

    def __init__(self, channels: int, width: int, heads: int):
        super().__init__()
        if width % heads:
            raise InvalidArgumentError(f"heads ({heads}) must divide width ({width})")
        self.heads = heads
        self.width = width
        self.query = nn.Parameter(torch.empty(channels, width))
        self.key = nn.Parameter(torch.empty(channels, width))
        self.value = nn.Parameter(torch.empty(channels, width))
        self.out = nn.Parameter(torch.empty(width, channels))
        for p in (self.query, self.key, self.value):
            nn.init.uniform_(p, -1 / math.sqrt(channels), 1 / math.sqrt(channels))
        nn.init.uniform_(self.out, -1 / math.sqrt(width), 1 / math.sqrt(width))

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        b, m, _, _ = z.shape
        hd = self.width // self.heads

        def project(weight):
            y = torch.einsum("bmca,cd->bmda", z, weight)
            return y.reshape(b, m, self.heads, hd, 3).transpose(1, 2)  # (b, h, m, hd, 3)

        q, k, v = project(self.query), project(self.key), project(self.value)
        logits = torch.einsum("bhida,bhjda->bhij", q, k) / math.sqrt(3 * hd)
        att = torch.softmax(logits, dim=-1)
        y = torch.einsum("bhij,bhjda->bhida", att, v)
        y = y.transpose(1, 2).reshape(b, m, self.width, 3)
        return torch.einsum("bmda,dc->bmca", y, self.out)


class ModeWiseLinear(nn.Module):
    """Independent bias-free linear map for every mode."""

    def __init__(self, num_modes: int, in_features: int, out_features: int):
        super().__init__()
        bound = 1 / math.sqrt(in_features)
        self.weight = nn.Parameter(
            torch.empty(num_modes, out_features, in_features).uniform_(-bound, bound))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: (B, M, in) or (B, M, in, 3)
        if x.ndim == 3:
            return torch.einsum("koi,bki->bko", self.weight, x)
        return torch.einsum("koi,bkia->bkoa", self.weight, x)


class SpectralODEFunc(nn.Module):
    """Block-diagonal right-hand side ``(f(H~, t), g(Z~, t))``."""

    def __init__(self, num_modes: int, scalar_width: int, vector_channels: int = 2,
                 heads: int = 2, time_width: int = 8, vector_attention_width: int | None = None):
        super().__init__()
        self.num_modes = num_modes
        self.scalar_width = scalar_width
        self.vector_channels = vector_channels
        vw = vector_attention_width or 2 * heads
        self.time_embed = TimeEmbedding(time_width)
        self.scalar_attention = ModeAttention(scalar_width, heads)
        self.vector_attention = VectorModeAttention(vector_channels, vw, heads)
        self.scalar_modes = ModeWiseLinear(num_modes, scalar_width + time_width, scalar_width)
        self.vector_modes = ModeWiseLinear(num_modes, vector_channels + time_width,
                                           vector_channels)

    def _check(self, x, trailing):
        if x.ndim != 2 + len(trailing) or x.shape[1] != self.num_modes \
                or tuple(x.shape[2:]) != trailing:
            raise InvalidArgumentError(
                f"expected (B, {self.num_modes}, {', '.join(map(str, trailing))}), "
                f"got {tuple(x.shape)}")

    def scalar_rhs(self, t, H: torch.Tensor) -> torch.Tensor:
        self._check(H, (self.scalar_width,))
        gamma = self.time_embed(_time_tensor(t, H.shape[0], H))
        h = self.scalar_attention(H)
        h = torch.cat([h, gamma[:, None, :].expand(-1, h.shape[1], -1)], dim=-1)
        return self.scalar_modes(h)

    def vector_rhs(self, t, Z: torch.Tensor) -> torch.Tensor:
        self._check(Z, (self.vector_channels, 3))
        gamma = self.time_embed(_time_tensor(t, Z.shape[0], Z))
        z = self.vector_attention(Z)
        direction = z.mean(dim=2)  # (B, M, 3)
        timed = gamma[:, None, :, None] * direction[:, :, None, :]
        return self.vector_modes(torch.cat([z, timed], dim=2))

    def forward(self, t, H, Z):
        return self.scalar_rhs(t, H), self.vector_rhs(t, Z)

    @torch.no_grad()
    def zero_(self) -> "SpectralODEFunc":
        """Zero the mode-wise maps so the field vanishes identically."""
        self.scalar_modes.weight.zero_()
        self.vector_modes.weight.zero_()
        return self


def _as_batched(state: SpectralState):
    arrays = [state.scalar_coeffs, state.vector_coeffs, state.vector_mean]
    numpy_in = not torch.is_tensor(arrays[1])
    tensors = [torch.as_tensor(np.asarray(a, dtype=np.float64)) if numpy_in else a
               for a in arrays]
    unbatched = tensors[1].ndim == 3
    if unbatched:
        tensors = [a[None] for a in tensors]
    return tensors, numpy_in, unbatched


def evolve(func, state0: SpectralState, times, config: SolverConfig = SolverConfig()):
    """Integrate the coefficients from ``times[..., 0]`` to every later time.

    ``times`` is either shared (K,) or per sample (B, K). The two blocks are
    independent IVPs and are solved separately; the vector block uses an
    error norm over 3-vectors so adaptive steps do not depend on orientation.
    The vector mean is carried through unchanged. Returns K states.
    """
    (H0, Z0, mean), numpy_in, unbatched = _as_batched(state0)
    times = np.asarray(times, dtype=np.float64)
    if times.ndim == 1:
        h_traj = integrate(func.scalar_rhs, H0, times, config).states
        z_traj = integrate(func.vector_rhs, Z0, times, config, norm=vector_error_norm).states
        h_list, z_list = list(h_traj), list(z_traj)
    elif times.ndim == 2:
        if times.shape[0] != Z0.shape[0]:
            raise InvalidArgumentError("per-sample time grid must match the batch size")
        if config.method == "rk4":
            h_list = rk4_grid(func.scalar_rhs, H0, times, config.steps_per_interval)
            z_list = rk4_grid(func.vector_rhs, Z0, times, config.steps_per_interval)
        else:
            per_sample = []
            for b in range(times.shape[0]):
                sub = SpectralState(H0[b:b + 1], Z0[b:b + 1], mean[b:b + 1])
                per_sample.append(evolve(func, sub, times[b], config))
            h_list = [torch.cat([s[k].scalar_coeffs for s in per_sample])
                      for k in range(times.shape[1])]
            z_list = [torch.cat([s[k].vector_coeffs for s in per_sample])
                      for k in range(times.shape[1])]
    else:
        raise InvalidArgumentError("times must be (K,) or (B, K)")

    out = []
    for h, z in zip(h_list, z_list):
        m = mean
        if unbatched:
            h, z, m = h[0], z[0], m[0]
        if numpy_in:
            h, z, m = (a.detach().numpy() for a in (h, z, m))
        out.append(SpectralState(h, z, m))
    return out
