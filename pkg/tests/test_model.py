"""End-to-end pipeline: equivariance, identity composition, batching."""

import numpy as np
import pytest
import torch

from gfnode.errors import InvalidArgumentError
from gfnode.graph import MolecularFrame
from gfnode.model import GFNodeModel, ModelConfig, predict
from gfnode.ode import SolverConfig
from gfnode.synthetic import random_molecule
from gfnode.validation import random_rotation


def small_model(n=6, seed=0, **kw):
    torch.manual_seed(seed)
    cfg = ModelConfig(**{"num_modes": n, "hidden": 8, "time_scale": 100.0, **kw})
    return GFNodeModel(cfg, n)


class TestConfig:
    def test_defaults(self):
        cfg = ModelConfig()
        assert (cfg.num_modes, cfg.hidden, cfg.heads, cfg.time_width) == (8, 64, 2, 8)
        assert cfg.cutoff == 1.6

    def test_validation(self):
        with pytest.raises(InvalidArgumentError):
            ModelConfig(hidden=7, heads=2)
        with pytest.raises(InvalidArgumentError):
            ModelConfig(time_scale=0.0)

    def test_modes_capped_by_atoms(self):
        assert GFNodeModel(ModelConfig(num_modes=8, hidden=4), 5).num_modes == 5


class TestPredict:
    def setup_method(self):
        self.rng = np.random.default_rng(0)
        self.frame = random_molecule(6, self.rng, timestamp=20.0)

    def test_zero_dynamics_identity(self):
        model = small_model().zero_dynamics_()
        out = predict(model, self.frame, [20.0, 50.0])
        for f in out:
            np.testing.assert_allclose(f.positions, self.frame.positions, atol=1e-8)
            np.testing.assert_allclose(f.velocities, self.frame.velocities, atol=1e-8)
        assert [f.timestamp for f in out] == [20.0, 50.0]

    def test_rotation_and_translation(self):
        model = small_model()
        times = [30.0, 60.0, 120.0]
        base = predict(model, self.frame, times)
        for _ in range(3):
            R, t = random_rotation(self.rng), self.rng.standard_normal(3)
            moved = MolecularFrame(self.frame.positions @ R.T + t, self.frame.velocities @ R.T,
                                   self.frame.atomic_numbers, self.frame.timestamp)
            for a, b in zip(base, predict(model, moved, times)):
                np.testing.assert_allclose(b.positions, a.positions @ R.T + t, atol=1e-8)
                np.testing.assert_allclose(b.velocities, a.velocities @ R.T, atol=1e-8)

    def test_super_resolution_is_continuous(self):
        model = small_model()
        coarse = np.array([45.0, 70.0, 95.0, 120.0])
        fine = np.sort(np.concatenate([coarse, coarse - 12.5]))
        a = predict(model, self.frame, coarse)
        b = predict(model, self.frame, fine)
        for f in a:
            match = next(g for g in b if g.timestamp == f.timestamp)
            np.testing.assert_allclose(match.positions, f.positions, atol=1e-3)
        pos = np.stack([f.positions for f in b])
        assert np.all(np.isfinite(pos))
        assert np.abs(np.diff(pos, axis=0)).max() < 1.0

    def test_unsorted_times(self):
        model = small_model()
        a = predict(model, self.frame, [40.0, 80.0])
        b = predict(model, self.frame, [80.0, 40.0])
        np.testing.assert_allclose(a[0].positions, b[1].positions, atol=1e-6)

    def test_rejects_past_times(self):
        with pytest.raises(InvalidArgumentError):
            predict(small_model(), self.frame, [10.0])

    def test_wrong_atom_count(self):
        with pytest.raises(InvalidArgumentError):
            predict(small_model(n=5), self.frame, [30.0])


class TestBatchForward:
    def test_batch_matches_single(self):
        rng = np.random.default_rng(3)
        model = small_model()
        frames = [random_molecule(6, rng) for _ in range(3)]
        offsets = np.array([[5.0, 10.0], [2.0, 40.0], [7.0, 8.0]])
        solver = SolverConfig(method="rk4")
        with torch.no_grad():
            x, v = model(model.make_batch(frames), offsets, solver)
            for b, f in enumerate(frames):
                xs, vs = model(model.make_batch([f]), offsets[b], solver)
                torch.testing.assert_close(x[b], xs[0], atol=1e-12, rtol=0)
                torch.testing.assert_close(v[b], vs[0], atol=1e-12, rtol=0)
        assert x.shape == (3, 2, 6, 3)

    def test_shared_offsets(self):
        rng = np.random.default_rng(4)
        model = small_model()
        batch = model.make_batch([random_molecule(6, rng) for _ in range(2)])
        with torch.no_grad():
            a, _ = model(batch, np.array([3.0, 9.0]))
            b, _ = model(batch, np.array([[3.0, 9.0], [3.0, 9.0]]))
        torch.testing.assert_close(a, b, rtol=0, atol=0)
