"""E(3)-equivariant message passing used as encoder and decoder.

All tensors are batched and dense: scalar features (B, N, F), positions and
velocities (B, N, 3), adjacency (B, N, N). Messages only see squared
distances, and coordinate updates are scalar gates on relative vectors, so
scalars are invariant and vectors equivariant under rotations and
translations.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from . import autodiff
from .errors import InvalidArgumentError
from .graph import MolecularFrame, MolecularGraph

DEFAULT_Z_MAX = 9.0


class MLP(nn.Module):
    def __init__(self, sizes, act="silu", act_last=False, final_scale=None):
        super().__init__()
        self.layers = nn.ModuleList(nn.Linear(a, b) for a, b in zip(sizes[:-1], sizes[1:]))
        self.act = autodiff.activation(act)
        self.act_last = act_last
        if final_scale is not None:
            last = self.layers[-1]
            nn.init.uniform_(last.weight, -final_scale, final_scale)
            nn.init.zeros_(last.bias)

    def forward(self, x):
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1 or self.act_last:
                x = self.act(x)
        return x

    @torch.no_grad()
    def zero_output_(self):
        self.layers[-1].weight.zero_()
        self.layers[-1].bias.zero_()


class EquivariantLayer(nn.Module):
    """One round of message passing over scalars, positions and velocities."""

    def __init__(self, width: int, act: str = "silu", gate_init: float = 1e-2):
        super().__init__()
        self.edge = MLP([2 * width + 1, width, width], act, act_last=True)
        self.node = MLP([2 * width, width, width], act)
        self.coord_gate = MLP([width, width, 1], act, final_scale=gate_init)
        self.velocity_gate = MLP([width, width, 1], act, final_scale=gate_init)
        self.velocity_scale = MLP([width, width, 1], act, final_scale=gate_init)

    def forward(self, h, x, v, adj):
        n = h.shape[1]
        rel = x[:, :, None, :] - x[:, None, :, :]
        dist2 = (rel ** 2).sum(-1, keepdim=True)
        mask = adj[..., None]
        pair = torch.cat([
            h[:, :, None, :].expand(-1, -1, n, -1),
            h[:, None, :, :].expand(-1, n, -1, -1),
            dist2,
        ], dim=-1)
        msg = self.edge(pair) * mask
        h_new = self.node(torch.cat([h, msg.sum(2)], dim=-1))
        # Mean over neighbours; isolated nodes get a zero update.
        deg = adj.sum(-1, keepdim=True).clamp(min=1.0)
        x_new = x + (rel * self.coord_gate(msg) * mask).sum(2) / deg
        v_new = (v + self.velocity_scale(h) * v
                 + (rel * self.velocity_gate(msg) * mask).sum(2) / deg)
        return h_new, x_new, v_new


class GraphCodec(nn.Module):
    """Stack of equivariant layers; the encoder and the decoder are both one."""

    def __init__(self, width: int, num_layers: int = 2, act: str = "silu"):
        super().__init__()
        if num_layers < 1 or width < 1:
            raise InvalidArgumentError("need at least one layer and positive width")
        self.layers = nn.ModuleList(EquivariantLayer(width, act) for _ in range(num_layers))

    def forward(self, h, x, v, adj):
        for layer in self.layers:
            h, x, v = layer(h, x, v, adj)
        return h, x, v

    @torch.no_grad()
    def zero_coordinate_updates_(self) -> "GraphCodec":
        """Make every layer leave positions and velocities untouched."""
        for layer in self.layers:
            layer.coord_gate.zero_output_()
            layer.velocity_gate.zero_output_()
            layer.velocity_scale.zero_output_()
        return self


def raw_node_features(velocities, atomic_numbers, z_max: float = DEFAULT_Z_MAX) -> np.ndarray:
    """Per-atom ``(|v_i|, Z_i / z_max)``."""
    if not z_max > 0:
        raise InvalidArgumentError("z_max must be positive")
    speed = np.linalg.norm(np.asarray(velocities, dtype=np.float64), axis=-1)
    z = np.asarray(atomic_numbers, dtype=np.float64) / z_max
    z = np.broadcast_to(z, speed.shape)
    return np.stack([speed, z], axis=-1)


class Encoder(nn.Module):
    """Linear embedding of the raw invariants followed by message passing."""

    def __init__(self, width: int, num_layers: int = 2, act: str = "silu",
                 z_max: float = DEFAULT_Z_MAX):
        super().__init__()
        self.z_max = z_max
        self.embed = nn.Linear(2, width)
        self.gnn = GraphCodec(width, num_layers, act)

    def init_features(self, velocities: torch.Tensor, atomic_numbers: torch.Tensor):
        speed = torch.linalg.vector_norm(velocities, dim=-1)
        z = (atomic_numbers.to(velocities) / self.z_max).expand_as(speed)
        return self.embed(torch.stack([speed, z], dim=-1))

    def forward(self, x, v, atomic_numbers, adj):
        h = self.init_features(v, atomic_numbers)
        return self.gnn(h, x, v, adj)


def frame_tensors(frame: MolecularFrame, graph: MolecularGraph):
    """Batch-of-one tensors ``(x, v, Z, adj)`` for a single frame."""
    if graph.num_nodes != frame.num_atoms:
        raise InvalidArgumentError("graph and frame disagree on the number of atoms")
    return (torch.as_tensor(frame.positions)[None], torch.as_tensor(frame.velocities)[None],
            torch.as_tensor(frame.atomic_numbers)[None],
            torch.as_tensor(graph.adjacency())[None])


def encode(encoder: Encoder, frame: MolecularFrame, graph: MolecularGraph):
    """Encode one frame; returns ``h`` (N, F) and ``z`` (N, 2, 3) as tensors."""
    x, v, z, adj = frame_tensors(frame, graph)
    h, x, v = encoder(x, v, z, adj)
    return h[0], torch.stack([x[0], v[0]], dim=1)


def decode(decoder: GraphCodec, h: torch.Tensor, z: torch.Tensor, graph: MolecularGraph):
    """Refine one reconstructed frame ``(h, z)`` on the fixed t0 graph."""
    adj = torch.as_tensor(graph.adjacency())[None]
    h, x, v = decoder(h[None], z[None, :, 0], z[None, :, 1], adj)
    return h[0], torch.stack([x[0], v[0]], dim=1)
