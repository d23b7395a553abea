"""End-to-end pipeline: encode, transform, evolve, invert and decode."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import torch
from torch import nn

from . import autodiff  # noqa: F401
from .codec import DEFAULT_Z_MAX, Encoder, GraphCodec
from .errors import InvalidArgumentError
from .graph import DEFAULT_CUTOFF, MolecularFrame, build_graph, graph_spectrum
from .ode import SolverConfig
from .spectral import SpectralState, batched_gft, batched_igft
from .spectral_node import SpectralODEFunc, evolve


@dataclass(frozen=True)
class ModelConfig:
    num_modes: int = 8
    hidden: int = 64
    encoder_layers: int = 2
    decoder_layers: int = 2
    heads: int = 2
    time_width: int = 8
    activation: str = "silu"
    cutoff: float = DEFAULT_CUTOFF
    z_max: float = DEFAULT_Z_MAX
    # Simulation steps mapped to one unit of ODE time.
    time_scale: float = 3000.0

    def __post_init__(self):
        if self.num_modes < 1 or self.hidden < 1 or self.time_width < 1:
            raise InvalidArgumentError("num_modes, hidden and time_width must be >= 1")
        if self.encoder_layers < 1 or self.decoder_layers < 1:
            raise InvalidArgumentError("encoder/decoder need at least one layer")
        if self.hidden % self.heads:
            raise InvalidArgumentError("heads must divide hidden")
        if not (self.cutoff > 0 and self.z_max > 0 and self.time_scale > 0):
            raise InvalidArgumentError("cutoff, z_max and time_scale must be positive")

    def to_dict(self):
        return asdict(self)


@dataclass
class Batch:
    positions: torch.Tensor      # (B, N, 3)
    velocities: torch.Tensor     # (B, N, 3)
    atomic_numbers: torch.Tensor  # (B, N)
    adjacency: torch.Tensor      # (B, N, N)
    basis: torch.Tensor          # (B, N, M)
    eigenvalues: torch.Tensor    # (B, N)

    @property
    def size(self) -> int:
        return self.positions.shape[0]


class GFNodeModel(nn.Module):
    def __init__(self, config: ModelConfig, num_atoms: int):
        super().__init__()
        self.config = config
        self.num_atoms = num_atoms
        self.num_modes = min(num_atoms, config.num_modes)
        self.encoder = Encoder(config.hidden, config.encoder_layers, config.activation,
                               config.z_max)
        self.ode = SpectralODEFunc(self.num_modes, config.hidden, 2, config.heads,
                                   config.time_width)
        self.decoder = GraphCodec(config.hidden, config.decoder_layers, config.activation)

    def make_batch(self, frames: Sequence[MolecularFrame]) -> Batch:
        """Stack initial frames; each gets its own graph and eigenbasis."""
        adj, basis, evals = [], [], []
        for frame in frames:
            if frame.num_atoms != self.num_atoms:
                raise InvalidArgumentError(
                    f"model built for {self.num_atoms} atoms, got {frame.num_atoms}")
            graph = build_graph(frame, self.config.cutoff)
            spec = graph_spectrum(graph)
            adj.append(graph.adjacency())
            basis.append(spec.eigenvectors[:, :self.num_modes])
            evals.append(spec.eigenvalues)
        t = torch.as_tensor
        return Batch(
            t(np.stack([f.positions for f in frames])),
            t(np.stack([f.velocities for f in frames])),
            t(np.stack([f.atomic_numbers for f in frames])),
            t(np.stack(adj)), t(np.stack(basis)), t(np.stack(evals)))

    def encode_spectral(self, batch: Batch) -> SpectralState:
        h, x, v = self.encoder(batch.positions, batch.velocities, batch.atomic_numbers,
                               batch.adjacency)
        return batched_gft(h, torch.stack([x, v], dim=2), batch.basis)

    def forward(self, batch: Batch, offsets, solver: SolverConfig = SolverConfig()):
        """Predict positions and velocities at time ``offsets`` after each t0.

        ``offsets`` is (K,) shared or (B, K) per sample, in simulation steps.
        Returns two tensors of shape (B, K, N, 3).
        """
        offsets = np.asarray(offsets, dtype=np.float64)
        if offsets.ndim == 1:
            offsets = np.broadcast_to(offsets, (batch.size, offsets.size))
        if offsets.shape[0] != batch.size or np.any(offsets < 0):
            raise InvalidArgumentError("offsets must be non-negative and match the batch")
        tau = np.concatenate([np.zeros((batch.size, 1)), offsets], axis=1)
        tau = tau / self.config.time_scale
        order = np.argsort(tau, axis=1, kind="stable")
        grid = np.take_along_axis(tau, order, axis=1)
        if np.all(grid == grid[:1]):
            grid = grid[0]

        state0 = self.encode_spectral(batch)
        states = evolve(self.ode, state0, grid, solver)
        coeffs = SpectralState(
            torch.stack([s.scalar_coeffs for s in states]),
            torch.stack([s.vector_coeffs for s in states]),
            state0.vector_mean)
        H, Z = batched_igft(coeffs, batch.basis)  # (K+1, B, N, ...)
        steps, b, n = H.shape[:3]
        adj = batch.adjacency.expand(steps, -1, -1, -1).reshape(steps * b, n, n)
        _, x, v = self.decoder(H.reshape(steps * b, n, -1), Z[..., 0, :].reshape(steps * b, n, 3),
                               Z[..., 1, :].reshape(steps * b, n, 3), adj)
        x = x.reshape(steps, b, n, 3).transpose(0, 1)
        v = v.reshape(steps, b, n, 3).transpose(0, 1)
        # Undo the sort and drop the t0 entry.
        inverse = torch.as_tensor(np.argsort(order, axis=1)[:, 1:])
        idx = inverse[:, :, None, None].expand(-1, -1, n, 3)
        return torch.gather(x, 1, idx), torch.gather(v, 1, idx)

    @torch.no_grad()
    def zero_dynamics_(self) -> "GFNodeModel":
        """Zero the vector field and both codecs' coordinate updates."""
        self.ode.zero_()
        self.encoder.gnn.zero_coordinate_updates_()
        self.decoder.zero_coordinate_updates_()
        return self


def predict(model: GFNodeModel, frame0: MolecularFrame, target_times,
            solver: SolverConfig = SolverConfig()) -> list:
    """Frames at absolute ``target_times`` (simulation steps, each >= t0)."""
    target_times = np.asarray(target_times, dtype=np.float64)
    offsets = target_times - frame0.timestamp
    with torch.no_grad():
        x, v = model(model.make_batch([frame0]), offsets, solver)
    return [
        MolecularFrame(x[0, k].numpy(), v[0, k].numpy(), frame0.atomic_numbers, t)
        for k, t in enumerate(target_times)
    ]
