"""Molecular frames, cutoff graphs and the graph Laplacian spectrum."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError, InvalidInputError

DEFAULT_CUTOFF = 1.6


@dataclass(frozen=True)
class MolecularFrame:
    """One trajectory snapshot.

    Positions are in angstroms, velocities in angstroms per simulation step
    and ``timestamp`` in simulation steps.
    """

    positions: np.ndarray
    velocities: np.ndarray
    atomic_numbers: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        vel = (np.zeros_like(pos) if self.velocities is None
               else np.asarray(self.velocities, dtype=np.float64))
        z = np.asarray(self.atomic_numbers, dtype=np.int64)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise InvalidInputError(f"positions must be N x 3 with N >= 1, got {pos.shape}")
        if vel.shape != pos.shape:
            raise InvalidInputError(
                f"velocities shape {vel.shape} does not match positions {pos.shape}")
        if z.shape != (pos.shape[0],):
            raise InvalidInputError(
                f"expected {pos.shape[0]} atomic numbers, got shape {z.shape}")
        if np.any(z < 1):
            raise InvalidInputError("atomic numbers must be >= 1")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "velocities", vel)
        object.__setattr__(self, "atomic_numbers", z)
        object.__setattr__(self, "timestamp", float(self.timestamp))

    @property
    def num_atoms(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class Trajectory:
    """Frames of one molecule ordered by strictly increasing timestamp."""

    frames: tuple
    name: str = ""

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise InvalidInputError("trajectory has no frames")
        ref = frames[0]
        for idx, frame in enumerate(frames[1:], start=1):
            if frame.num_atoms != ref.num_atoms:
                raise InvalidInputError(
                    f"frame {idx} has {frame.num_atoms} atoms, expected {ref.num_atoms}")
            if not np.array_equal(frame.atomic_numbers, ref.atomic_numbers):
                raise InvalidInputError(f"frame {idx} atomic numbers differ from frame 0")
            if frame.timestamp <= frames[idx - 1].timestamp:
                raise InvalidInputError(f"timestamps not strictly increasing at frame {idx}")
        object.__setattr__(self, "frames", frames)

    def __len__(self):
        return len(self.frames)

    def __getitem__(self, idx):
        return self.frames[idx]

    @property
    def atomic_numbers(self) -> np.ndarray:
        return self.frames[0].atomic_numbers

    @property
    def num_atoms(self) -> int:
        return self.frames[0].num_atoms

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([f.timestamp for f in self.frames])

    def positions(self) -> np.ndarray:
        """All positions stacked as (T, N, 3)."""
        return np.stack([f.positions for f in self.frames])

    def velocities(self) -> np.ndarray:
        return np.stack([f.velocities for f in self.frames])

    @classmethod
    def from_arrays(cls, positions, atomic_numbers, timestamps, velocities=None, name=""):
        positions = np.asarray(positions, dtype=np.float64)
        if velocities is None:
            velocities = np.zeros_like(positions)
        frames = [
            MolecularFrame(p, v, atomic_numbers, t)
            for p, v, t in zip(positions, velocities, timestamps)
        ]
        return cls(tuple(frames), name=name)


@dataclass(frozen=True)
class MolecularGraph:
    """Undirected simple graph; edges are stored as sorted ``(i, j)`` with ``i < j``."""

    num_nodes: int
    edges: tuple
    cutoff: float | None = None

    def __post_init__(self):
        if self.num_nodes < 1:
            raise InvalidInputError("graph needs at least one node")
        seen = set()
        for i, j in self.edges:
            if i == j:
                raise InvalidInputError(f"self-loop on node {i}")
            if not (0 <= i < self.num_nodes and 0 <= j < self.num_nodes):
                raise InvalidInputError(f"edge ({i}, {j}) out of range")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise InvalidInputError(f"duplicate edge {key}")
            seen.add(key)
        object.__setattr__(self, "edges", tuple(sorted(seen)))

    @classmethod
    def from_edges(cls, num_nodes: int, edges: Sequence[tuple[int, int]]) -> "MolecularGraph":
        return cls(num_nodes, tuple((int(i), int(j)) for i, j in edges))

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.num_nodes, self.num_nodes))
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1.0
        return a

    def degrees(self) -> np.ndarray:
        return self.adjacency().sum(axis=1)

    def is_connected(self) -> bool:
        adj = self.adjacency()
        seen = {0}
        stack = [0]
        while stack:
            node = stack.pop()
            for nb in np.flatnonzero(adj[node]):
                if nb not in seen:
                    seen.add(int(nb))
                    stack.append(int(nb))
        return len(seen) == self.num_nodes

    def permuted(self, perm: Sequence[int]) -> "MolecularGraph":
        """Relabel so that old node ``perm[k]`` becomes new node ``k``."""
        inverse = np.argsort(perm)
        return MolecularGraph.from_edges(
            self.num_nodes, [(inverse[i], inverse[j]) for i, j in self.edges])


def build_graph(frame: MolecularFrame, cutoff: float = DEFAULT_CUTOFF) -> MolecularGraph:
    """Connect every pair of atoms closer than ``cutoff`` (strict inequality)."""
    if not cutoff > 0:
        raise InvalidArgumentError(f"cutoff must be positive, got {cutoff}")
    pos = frame.positions
    if not np.all(np.isfinite(pos)):
        raise InvalidInputError("non-finite coordinates")
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt((diff ** 2).sum(-1))
    i, j = np.nonzero(np.triu(dist < cutoff, k=1))
    return MolecularGraph(frame.num_atoms, tuple(zip(i.tolist(), j.tolist())), float(cutoff))


def laplacian(graph: MolecularGraph) -> np.ndarray:
    """Combinatorial Laplacian ``D - A``."""
    adj = graph.adjacency()
    return np.diag(adj.sum(axis=1)) - adj


@dataclass(frozen=True)
class LaplacianSpectrum:
    """Orthonormal eigenvectors (columns) and ascending eigenvalues."""

    eigenvectors: np.ndarray
    eigenvalues: np.ndarray
    laplacian: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def num_nodes(self) -> int:
        return self.eigenvalues.shape[0]

    def basis(self, num_modes: int) -> np.ndarray:
        """First ``num_modes`` eigenvectors as an N x M matrix."""
        check_num_modes(num_modes, self.num_nodes)
        return self.eigenvectors[:, :num_modes]


def check_num_modes(num_modes: int, num_nodes: int) -> None:
    if not (1 <= num_modes <= num_nodes):
        raise InvalidArgumentError(f"num_modes must lie in [1, {num_nodes}], got {num_modes}")


def _fix_signs(vectors: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    # Largest-magnitude entry positive; ties go to the lowest index.
    out = vectors.copy()
    for k in range(out.shape[1]):
        col = out[:, k]
        mag = np.abs(col)
        pivot = int(np.flatnonzero(mag >= mag.max() - tol)[0])
        if col[pivot] < 0:
            out[:, k] = -col
    return out


def eig_decompose(lap: np.ndarray, symmetry_tol: float = 1e-10) -> LaplacianSpectrum:
    lap = np.asarray(lap, dtype=np.float64)
    if lap.ndim != 2 or lap.shape[0] != lap.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got {lap.shape}")
    if not np.all(np.isfinite(lap)):
        raise InvalidInputError("matrix has non-finite entries")
    if np.max(np.abs(lap - lap.T), initial=0.0) > symmetry_tol:
        raise InvalidInputError("matrix is not symmetric")
    sym = 0.5 * (lap + lap.T)
    values, vectors = np.linalg.eigh(sym)
    order = np.argsort(values, kind="stable")
    values = values[order]
    vectors = _fix_signs(vectors[:, order])
    return LaplacianSpectrum(vectors, values, sym)


def graph_spectrum(graph: MolecularGraph) -> LaplacianSpectrum:
    return eig_decompose(laplacian(graph))
