"""Instance sampling, MSE loss, Adam updates and the epoch loop."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np
import torch

from .errors import InvalidArgumentError, InvalidInputError, NumericalFailureError
from .graph import MolecularFrame, Trajectory
from .model import GFNodeModel
from .ode import SolverConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 1e-15
    batch_size: int = 50
    seq_len: int = 8
    delta_T: float = 3000
    epochs: int = 5000
    seed: int = 0
    sampling: str = "irregular"
    num_instances: int = 500
    steps_per_interval: int = 8

    def __post_init__(self):
        if self.seq_len < 1:
            raise InvalidArgumentError("seq_len must be >= 1")
        if self.delta_T < self.seq_len:
            raise InvalidArgumentError("delta_T must be >= seq_len")
        if not self.learning_rate >= 0:
            raise InvalidArgumentError("learning_rate must be non-negative")
        if self.batch_size < 1 or self.num_instances < 1 or self.epochs < 0:
            raise InvalidArgumentError("batch_size/num_instances must be >= 1, epochs >= 0")
        if self.sampling not in ("irregular", "regular"):
            raise InvalidArgumentError(f"unknown sampling {self.sampling!r}")

    def to_dict(self):
        return asdict(self)

    @property
    def train_solver(self) -> SolverConfig:
        return SolverConfig(method="rk4", steps_per_interval=self.steps_per_interval)


@dataclass(frozen=True)
class Instance:
    frame0: MolecularFrame
    target_times: np.ndarray
    targets: tuple

    @property
    def offsets(self) -> np.ndarray:
        return self.target_times - self.frame0.timestamp

    def target_positions(self) -> np.ndarray:
        return np.stack([f.positions for f in self.targets])


def sample_instance(traj: Trajectory, config: TrainConfig, rng: np.random.Generator) -> Instance:
    """Pick a random start frame and ``seq_len`` target frames within ``delta_T``.

    Irregular sampling draws distinct frames uniformly from ``(t0, t0 + delta_T]``;
    regular sampling takes the frames at ``t0 + delta_T * k / K``.
    """
    times = traj.timestamps
    last_start = np.searchsorted(times, times[-1] - config.delta_T, side="right") - 1
    if last_start < 0 or times[-1] - times[0] < config.delta_T:
        raise InvalidInputError(
            f"trajectory spans {times[-1] - times[0]} steps, need delta_T={config.delta_T}")
    start = int(rng.integers(0, last_start + 1))
    t0 = times[start]
    k = config.seq_len
    if config.sampling == "irregular":
        lo = start + 1
        hi = np.searchsorted(times, t0 + config.delta_T, side="right")
        if hi - lo < k:
            raise InvalidInputError(f"only {hi - lo} frames inside the window, need {k}")
        picks = np.sort(rng.choice(np.arange(lo, hi), size=k, replace=False))
    else:
        wanted = t0 + config.delta_T * np.arange(1, k + 1) / k
        picks = np.searchsorted(times, wanted)
        tol = 1e-9 * max(1.0, abs(times[-1]))
        if np.any(picks >= len(times)) or np.any(np.abs(times[np.minimum(picks, len(times) - 1)] - wanted) > tol):
            raise InvalidInputError("regular offsets do not land on trajectory frames")
    frames = tuple(traj[int(i)] for i in picks)
    return Instance(traj[start], times[picks].astype(np.float64), frames)


def sample_instances(traj: Trajectory, config: TrainConfig, count: int | None = None,
                     rng: np.random.Generator | None = None) -> list:
    rng = np.random.default_rng(config.seed) if rng is None else rng
    count = config.num_instances if count is None else count
    return [sample_instance(traj, config, rng) for _ in range(count)]


def mse_loss(pred, truth):
    """Mean over time points and atoms of the squared position error."""
    if tuple(pred.shape) != tuple(truth.shape):
        raise InvalidArgumentError(f"shape mismatch {tuple(pred.shape)} vs {tuple(truth.shape)}")
    return ((pred - truth) ** 2).sum(-1).mean()


def make_optimizer(params, config: TrainConfig) -> torch.optim.Optimizer:
    """AdamW: Adam moments with decoupled weight decay."""
    return torch.optim.AdamW(params, lr=config.learning_rate, betas=(0.9, 0.999), eps=1e-8,
                             weight_decay=config.weight_decay)


def optimizer_step(loss_fn: Callable[[], torch.Tensor], params: Sequence[torch.Tensor],
                   optimizer: torch.optim.Optimizer) -> float:
    """Backpropagate ``loss_fn()`` and apply one update; nothing changes on failure."""
    optimizer.zero_grad(set_to_none=True)
    loss = loss_fn()
    if not torch.isfinite(loss):
        raise NumericalFailureError(f"non-finite loss {float(loss.detach())}")
    loss.backward()
    for p in params:
        if p.grad is not None and not torch.all(torch.isfinite(p.grad)):
            optimizer.zero_grad(set_to_none=True)
            raise NumericalFailureError("non-finite gradient")
    optimizer.step()
    return float(loss.detach())


def batch_loss(model: GFNodeModel, instances: Sequence[Instance],
               solver: SolverConfig) -> torch.Tensor:
    batch = model.make_batch([inst.frame0 for inst in instances])
    offsets = np.stack([inst.offsets for inst in instances])
    pred, _ = model(batch, offsets, solver)
    truth = torch.as_tensor(np.stack([inst.target_positions() for inst in instances]))
    return mse_loss(pred, truth)


def train_step(model: GFNodeModel, optimizer, instances: Sequence[Instance],
               config: TrainConfig) -> float:
    return optimizer_step(lambda: batch_loss(model, instances, config.train_solver),
                          list(model.parameters()), optimizer)


def evaluate(model: GFNodeModel, instances: Sequence[Instance],
             solver: SolverConfig, batch_size: int = 64) -> float:
    """Instance-weighted MSE with gradients disabled."""
    total = 0.0
    with torch.no_grad():
        for i in range(0, len(instances), batch_size):
            chunk = instances[i:i + batch_size]
            total += float(batch_loss(model, chunk, solver)) * len(chunk)
    return total / len(instances)


@dataclass
class History:
    train_loss: list
    val_loss: list
    best_val_loss: float
    best_epoch: int


def fit(model: GFNodeModel, train: Sequence[Instance], config: TrainConfig,
        val: Sequence[Instance] | None = None, optimizer=None,
        on_improve: Callable[[int, float], None] | None = None) -> History:
    """Run ``config.epochs`` epochs of shuffled mini-batch updates.

    ``on_improve(epoch, val_loss)`` fires whenever the validation loss (or the
    training loss if no validation set is given) reaches a new minimum; the
    CLI uses it to write checkpoints.
    """
    optimizer = optimizer or make_optimizer(model.parameters(), config)
    rng = np.random.default_rng(config.seed + 1)
    history = History([], [], float("inf"), -1)
    for epoch in range(config.epochs):
        order = rng.permutation(len(train))
        losses = []
        for i in range(0, len(train), config.batch_size):
            chunk = [train[j] for j in order[i:i + config.batch_size]]
            losses.append(train_step(model, optimizer, chunk, config) * len(chunk))
        train_loss = sum(losses) / len(train)
        history.train_loss.append(train_loss)
        val_loss = evaluate(model, val, config.train_solver) if val else train_loss
        history.val_loss.append(val_loss)
        if val_loss < history.best_val_loss:
            history.best_val_loss, history.best_epoch = val_loss, epoch
            if on_improve is not None:
                on_improve(epoch, val_loss)
        log.info("epoch %d train %.6g val %.6g", epoch, train_loss, val_loss)
    return history
