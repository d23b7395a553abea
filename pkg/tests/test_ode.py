"""Dormand-Prince and RK4 integrators, heat-equation oracle."""

import math

import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st
from scipy.integrate import RK45, solve_ivp

from gfnode import ode
from gfnode.errors import IntegrationError, InvalidArgumentError, NumericalFailureError
from gfnode.graph import MolecularGraph, graph_spectrum, laplacian
from gfnode.ode import (SolverConfig, heat_closed_form, heat_rhs, integrate, rk4_grid,
                        vector_error_norm)
from gfnode.synthetic import random_connected_graph

K2 = MolecularGraph.from_edges(2, [(0, 1)])


class TestTableau:
    def test_against_scipy_coefficients(self):
        np.testing.assert_allclose(ode._C, RK45.C, rtol=0, atol=1e-15)
        np.testing.assert_allclose(ode._B, RK45.B, rtol=0, atol=1e-15)
        # scipy stores the error weights with the opposite sign.
        np.testing.assert_allclose(ode._E, -RK45.E, rtol=0, atol=1e-15)
        np.testing.assert_allclose(np.array(ode._P), RK45.P, rtol=0, atol=1e-15)
        for i, row in enumerate(ode._A):
            np.testing.assert_allclose(row, RK45.A[i, :i], rtol=0, atol=1e-15)

    def test_consistency(self):
        for c, row in zip(ode._C, ode._A):
            assert abs(sum(row) - c) < 1e-14
        assert abs(sum(ode._B) - 1.0) < 1e-14
        assert abs(sum(ode._E)) < 1e-14


class TestDopri5:
    def test_zero_rhs(self):
        sol = integrate(lambda t, y: np.zeros_like(y), np.array([1.0, 2.0]), [0.0, 1.0, 5.0])
        np.testing.assert_array_equal(sol.states, [[1, 2], [1, 2], [1, 2]])

    def test_exponential_decay(self):
        sol = integrate(lambda t, y: -y, np.array([1.0]), [0.0, 1.0])
        assert abs(sol.states[-1, 0] - math.exp(-1)) < 1e-4

    def test_sine(self):
        sol = integrate(lambda t, y: np.cos(t) * np.ones_like(y), np.array([0.0]),
                        [0.0, math.pi / 2])
        assert abs(sol.states[-1, 0] - 1.0) < 1e-4

    def test_initial_state_is_exact(self):
        y0 = np.array([0.1, 0.2])
        sol = integrate(lambda t, y: -y, y0, [0.0, 0.5])
        assert sol.states[0] is not None
        np.testing.assert_array_equal(sol.states[0], y0)

    def test_repeated_times(self):
        sol = integrate(lambda t, y: -y, np.array([1.0]), [0.0, 0.0, 1.0, 1.0])
        assert sol.states[1, 0] == 1.0
        assert sol.states[2, 0] == sol.states[3, 0]

    def test_rejects_decreasing_times(self):
        with pytest.raises(InvalidArgumentError):
            integrate(lambda t, y: -y, np.array([1.0]), [0.0, 2.0, 1.0])

    def test_max_steps(self):
        with pytest.raises(IntegrationError) as info:
            integrate(lambda t, y: -y, np.array([1.0]), [0.0, 100.0],
                      SolverConfig(max_steps=3, initial_step=1e-3))
        assert 0.0 < info.value.last_time < 100.0

    def test_non_finite_rhs(self):
        def rhs(t, y):
            return np.full_like(y, np.nan) if t > 0.3 else -y
        with pytest.raises(NumericalFailureError):
            integrate(rhs, np.array([1.0]), [0.0, 1.0])

    def test_matches_scipy_tight(self):
        def rhs(t, y):
            return np.array([y[1], -y[0] + 0.1 * np.sin(t)])
        times = np.linspace(0, 10, 11)
        cfg = SolverConfig(rtol=1e-10, atol=1e-12)
        mine = integrate(rhs, np.array([1.0, 0.0]), times, cfg).states
        ref = solve_ivp(rhs, (0, 10), [1.0, 0.0], t_eval=times, rtol=1e-12, atol=1e-14,
                        method="DOP853").y.T
        np.testing.assert_allclose(mine, ref, atol=1e-8)

    def test_dense_output_between_steps(self):
        # Output times far denser than the accepted steps still hit 1e-4.
        times = np.linspace(0, 3, 301)
        sol = integrate(lambda t, y: -y, np.array([1.0]), times)
        assert sol.num_rhs_evals < 300
        np.testing.assert_allclose(sol.states[:, 0], np.exp(-times), atol=1e-4)

    def test_torch_gradients_flow(self):
        k = torch.tensor(0.7, requires_grad=True)
        sol = integrate(lambda t, y: -k * y, torch.tensor([1.0]), [0.0, 1.0],
                        SolverConfig(rtol=1e-8, atol=1e-10))
        sol.states[-1, 0].backward()
        # d/dk exp(-k) = -exp(-k)
        assert abs(k.grad.item() + math.exp(-0.7)) < 1e-6

    def test_vector_norm_is_rotation_invariant(self, rng):
        err, a, b = (rng.standard_normal((4, 2, 3)) for _ in range(3))
        q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        base = vector_error_norm(err, a, b, 1e-3, 1e-4)
        assert abs(vector_error_norm(err @ q.T, a @ q.T, b @ q.T, 1e-3, 1e-4) - base) \
            < 1e-12 * base


class TestRK4:
    def test_order(self):
        errs = []
        for n in (10, 20):
            sol = integrate(lambda t, y: -y, np.array([1.0]), [0.0, 1.0],
                            SolverConfig(method="rk4", steps_per_interval=n))
            errs.append(abs(sol.states[-1, 0] - math.exp(-1)))
        assert errs[0] / errs[1] >= 12

    def test_single_step_by_hand(self):
        # dy/dt = t: one RK4 step is exact for this quadrature.
        y = ode.rk4_step(lambda t, y: np.full_like(y, t), 0.0, np.array([0.0]), 2.0)
        np.testing.assert_allclose(y, [2.0])

    def test_grid_matches_rows(self, rng):
        grid = np.sort(rng.uniform(0, 2, size=(3, 4)), axis=1)
        grid[:, 0] = 0.0
        y0 = rng.standard_normal((3, 2))

        def rhs(t, y):
            return -y * (1 + np.asarray(t)[:, None])

        batched = rk4_grid(rhs, y0, grid, 8)
        for b in range(3):
            row = integrate(lambda t, y: -y * (1 + t), y0[b], grid[b],
                            SolverConfig(method="rk4", steps_per_interval=8)).states
            for k in range(4):
                np.testing.assert_allclose(batched[k][b], row[k], atol=1e-14)


class TestHeat:
    def test_rhs_k2(self):
        np.testing.assert_array_equal(heat_rhs(laplacian(K2))(0.0, np.array([1.0, 0.0])),
                                      [-1.0, 1.0])

    def test_rhs_constant_and_eigenvector(self, rng):
        g = random_connected_graph(8, rng)
        spec = graph_spectrum(g)
        rhs = heat_rhs(laplacian(g))
        np.testing.assert_allclose(rhs(0, np.ones(8)), 0.0, atol=1e-12)
        for k in range(8):
            u = spec.eigenvectors[:, k]
            np.testing.assert_allclose(rhs(0, u), -spec.eigenvalues[k] * u, atol=1e-10)

    def test_closed_form_k2(self):
        spec = graph_spectrum(K2)
        for t in (0.0, 0.3, 2.0):
            e = math.exp(-2 * t)
            np.testing.assert_allclose(heat_closed_form(spec, [1.0, 0.0], t),
                                       [0.5 * (1 + e), 0.5 * (1 - e)], atol=1e-12)

    def test_closed_form_identity_and_limit(self, rng):
        g = random_connected_graph(9, rng)
        spec = graph_spectrum(g)
        f0 = rng.standard_normal(9)
        np.testing.assert_allclose(heat_closed_form(spec, f0, 0.0), f0, atol=1e-12)
        np.testing.assert_allclose(heat_closed_form(spec, f0, 1e4), f0.mean(), atol=1e-10)

    def test_negative_time(self):
        with pytest.raises(InvalidArgumentError):
            heat_closed_form(graph_spectrum(K2), [1.0, 0.0], -1.0)

    @given(st.integers(0, 2**31 - 1))
    def test_oracle_tight_tolerance(self, seed):
        # The solver converges to the closed form; default tolerances are
        # covered by the acceptance suite.
        rng = np.random.default_rng(seed)
        g = random_connected_graph(int(rng.integers(2, 21)), rng)
        f0 = rng.standard_normal(g.num_nodes)
        times = np.linspace(0, 5, 11)
        sol = integrate(heat_rhs(laplacian(g)), f0, times, SolverConfig(rtol=1e-9, atol=1e-11))
        spec = graph_spectrum(g)
        exact = np.stack([heat_closed_form(spec, f0, t) for t in times])
        np.testing.assert_allclose(sol.states, exact, atol=1e-7)
        # Mass conservation and monotone decay of every mode.
        np.testing.assert_allclose(sol.states.sum(axis=1), f0.sum(), atol=1e-8)
        modes = np.abs(sol.states @ spec.eigenvectors)
        assert np.all(np.diff(modes, axis=0) <= 1e-9)
