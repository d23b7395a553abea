"""Toy trajectories with known ground truth."""

from __future__ import annotations

from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import InvalidArgumentError
from .graph import MolecularGraph, Trajectory, graph_spectrum
from .ode import heat_closed_form


def gen_heat_trajectory(graph: MolecularGraph, f0, times) -> np.ndarray:
    """Exact heat flow of the scalar signal ``f0``, one row per time."""
    spec = graph_spectrum(graph)
    return np.stack([heat_closed_form(spec, f0, float(t)) for t in times])


def _planar_ring(n: int, radius: float = 1.5) -> np.ndarray:
    angles = 2 * np.pi * np.arange(n) / n
    return np.stack([np.zeros(n), radius * np.cos(angles), radius * np.sin(angles)], axis=1)


def gen_planted_modes(graph: MolecularGraph, amplitudes, freq_fn: Callable[[float], float],
                      dt: float = 1.0, T_sim: int = 4096, base_positions=None,
                      atomic_number: int = 6) -> Trajectory:
    """Drive each Laplacian mode with a sinusoid along x at ``freq_fn(lambda_k)``.

    ``amplitudes`` is either a length-N sequence or a ``{mode: amplitude}``
    mapping. The default base geometry is a ring in the y-z plane, so every
    base x-coordinate is zero and each mode's squared magnitude is a pure
    tone at twice the planted frequency.
    """
    spec = graph_spectrum(graph)
    n = graph.num_nodes
    if isinstance(amplitudes, Mapping):
        amp = np.zeros(n)
        for k, a in amplitudes.items():
            amp[int(k)] = a
    else:
        amp = np.asarray(amplitudes, dtype=np.float64)
        if amp.shape != (n,):
            raise InvalidArgumentError(f"need {n} amplitudes, got {amp.shape}")
    base = _planar_ring(n) if base_positions is None else np.asarray(base_positions, float)
    t = dt * np.arange(T_sim)
    freqs = np.array([freq_fn(lam) if a != 0 else 0.0 for lam, a in zip(spec.eigenvalues, amp)])
    # (T, N) displacement along x.
    disp = (np.sin(2 * np.pi * t[:, None] * freqs[None, :]) * amp) @ spec.eigenvectors.T
    positions = np.repeat(base[None], T_sim, axis=0)
    positions[:, :, 0] += disp
    return Trajectory.from_arrays(positions, np.full(n, atomic_number), t, name="planted_modes")


def chain_energy(positions, velocities, spring_k: float, spacing: float, mass: float) -> float:
    """Kinetic plus spring energy of a chain along x (velocities per unit time)."""
    x = np.asarray(positions)[:, 0]
    kinetic = 0.5 * mass * np.sum(np.asarray(velocities) ** 2)
    stretch = np.diff(x) - spacing
    return float(kinetic + 0.5 * spring_k * np.sum(stretch ** 2))


def gen_harmonic_chain(n_atoms: int, spring_k: float = 1.0, dt: float = 0.005,
                       steps: int = 2000, spacing: float = 1.2, mass: float = 1.0,
                       amplitude: float = 0.1, initial_velocity: float = 0.0,
                       seed: int = 0, atomic_number: int = 6) -> Trajectory:
    """Longitudinal spring chain along x sampled every step (``steps + 1`` frames).

    Integrated with symplectic Euler. Initial displacements and velocities
    are seeded Gaussians of the given scales. Stored velocities are physical
    (angstroms per unit time), not per step.
    """
    if n_atoms < 2:
        raise InvalidArgumentError("chain needs at least two atoms")
    rng = np.random.default_rng(seed)
    x = spacing * np.arange(n_atoms) + amplitude * rng.standard_normal(n_atoms)
    v = initial_velocity * rng.standard_normal(n_atoms)
    xs, vs = [x.copy()], [v.copy()]
    for _ in range(steps):
        stretch = np.diff(x) - spacing
        force = np.zeros(n_atoms)
        force[:-1] += spring_k * stretch
        force[1:] -= spring_k * stretch
        v = v + dt * force / mass
        x = x + dt * v
        xs.append(x.copy())
        vs.append(v.copy())
    pos = np.zeros((steps + 1, n_atoms, 3))
    vel = np.zeros_like(pos)
    pos[:, :, 0] = np.array(xs)
    vel[:, :, 0] = np.array(vs)
    return Trajectory.from_arrays(pos, np.full(n_atoms, atomic_number), np.arange(steps + 1.0),
                                  vel, name="harmonic_chain")


def random_connected_graph(n: int, rng: np.random.Generator, extra_edge_prob: float = 0.3
                           ) -> MolecularGraph:
    """Random spanning tree plus each remaining pair with ``extra_edge_prob``."""
    if n < 1:
        raise InvalidArgumentError("need at least one node")
    order = rng.permutation(n)
    edges = {tuple(sorted((int(order[i]), int(order[rng.integers(0, i)])))) for i in range(1, n)}
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) not in edges and rng.random() < extra_edge_prob:
                edges.add((i, j))
    return MolecularGraph.from_edges(n, sorted(edges))


def random_molecule(n: int, rng: np.random.Generator, bond: float = 1.3,
                    atomic_numbers: Sequence[int] | None = None, timestamp: float = 0.0):
    """Self-avoiding random walk of ``n`` atoms with steps of length ``bond``.

    Consecutive atoms fall inside the default cutoff, so the cutoff graph
    is connected. Velocities are standard normal.
    """
    from .graph import MolecularFrame

    pos = [np.zeros(3)]
    while len(pos) < n:
        step = rng.standard_normal(3)
        cand = pos[-1] + bond * step / np.linalg.norm(step)
        if all(np.linalg.norm(cand - p) > 1.0 for p in pos[:-1]):
            pos.append(cand)
    z = np.full(n, 6) if atomic_numbers is None else np.asarray(atomic_numbers)
    return MolecularFrame(np.array(pos), rng.standard_normal((n, 3)), z, timestamp)
