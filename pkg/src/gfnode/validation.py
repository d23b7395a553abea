"""Self-checks behind ``gfnode validate``."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch

from .autodiff import grad_check
from .graph import graph_spectrum, laplacian
from .model import GFNodeModel, ModelConfig, predict
from .ode import SolverConfig, heat_closed_form, heat_rhs, integrate
from .synthetic import random_connected_graph, random_molecule
from .training import mse_loss


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_error: float
    tolerance: float
    trials: int

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def to_dict(self) -> dict:
        return {**asdict(self), "passed": self.passed}


def heat_check(seed: int = 0, trials: int = 20, max_nodes: int = 20, t_end: float = 5.0,
               tolerance: float = 1e-4) -> CheckResult:
    """dopri5 on ``df/dt = -L f`` against decaying graph Fourier coefficients."""
    rng = np.random.default_rng(seed)
    times = np.linspace(0.0, t_end, 26)
    worst = 0.0
    for _ in range(trials):
        graph = random_connected_graph(int(rng.integers(2, max_nodes + 1)), rng)
        f0 = rng.standard_normal(graph.num_nodes)
        sol = integrate(heat_rhs(laplacian(graph)), f0, times, SolverConfig(rtol=1e-3, atol=1e-4))
        spec = graph_spectrum(graph)
        exact = np.stack([heat_closed_form(spec, f0, t) for t in times])
        worst = max(worst, float(np.abs(sol.states - exact).max()))
    return CheckResult("heat", worst, tolerance, trials)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def equivariance_check(seed: int = 0, trials: int = 20, num_atoms: int = 6,
                       tolerance: float = 1e-6) -> CheckResult:
    """``predict(R x + t)`` against ``R predict(x) + t`` for a random model."""
    from .graph import MolecularFrame

    rng = np.random.default_rng(seed)
    torch.manual_seed(seed)
    model = GFNodeModel(ModelConfig(num_modes=num_atoms, hidden=8, time_scale=100.0), num_atoms)
    frame = random_molecule(num_atoms, rng)
    times = np.array([10.0, 50.0, 100.0])
    base = predict(model, frame, times)
    worst = 0.0
    for _ in range(trials):
        rot, shift = random_rotation(rng), rng.standard_normal(3)
        moved = MolecularFrame(frame.positions @ rot.T + shift, frame.velocities @ rot.T,
                               frame.atomic_numbers, frame.timestamp)
        out = predict(model, moved, times)
        for a, b in zip(base, out):
            worst = max(worst, float(np.abs(a.positions @ rot.T + shift - b.positions).max()),
                        float(np.abs(a.velocities @ rot.T - b.velocities).max()))
    return CheckResult("equivariance", worst, tolerance, trials)


def training_loss_fn(model: GFNodeModel, frame, offsets, targets, solver: SolverConfig):
    """Closure computing the MSE of ``model`` on one instance."""
    batch = model.make_batch([frame])
    truth = torch.as_tensor(np.asarray(targets))[None]

    def loss():
        pred, _ = model(batch, offsets, solver)
        return mse_loss(pred, truth)

    return loss


def grad_check_model(seed: int = 0, trials: int = 1, num_atoms: int = 4, num_modes: int = 3,
                     seq_len: int = 2, eps: float = 1e-4, tolerance: float = 1e-3) -> CheckResult:
    """Central differences on every parameter of the full training loss."""
    rng = np.random.default_rng(seed)
    torch.manual_seed(seed)
    worst = 0.0
    for _ in range(trials):
        model = GFNodeModel(ModelConfig(num_modes=num_modes, hidden=4, heads=2, time_width=4,
                                        time_scale=10.0), num_atoms)
        frame = random_molecule(num_atoms, rng)
        offsets = np.sort(rng.uniform(1.0, 10.0, size=seq_len))
        targets = frame.positions + 0.1 * rng.standard_normal((seq_len, num_atoms, 3))
        loss = training_loss_fn(model, frame, offsets, targets,
                                SolverConfig(method="rk4", steps_per_interval=4))
        worst = max(worst, grad_check(loss, list(model.parameters()), eps=eps))
    return CheckResult("grad", worst, tolerance, trials)
