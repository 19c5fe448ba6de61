"""Oracles, trajectory errors, rate fits, and convergence studies."""

import numpy as np
import pytest
from scipy import integrate, linalg

from nlplap.analysis import (
    DegenerateFit,
    NonNestedMeshes,
    fit_rate,
    linear_oracle_p2,
    study_space,
    study_time,
    traj_error_c0l2,
    two_node_closed_form,
    two_node_extinction_time,
)
from nlplap.evolve import Problem, Trajectory, ZeroSource, backward_euler
from nlplap.kernels import SeparableSmooth
from nlplap.meshes import GridFunction, project_function, project_kernel, uniform_mesh
from nlplap.operators import coupling_from_kernel, linear_operator_matrix


class TestLinearOracle:
    def test_matches_expm(self):
        mesh = uniform_mesh(24)
        kd = project_kernel(SeparableSmooth(), mesh)
        g = project_function(lambda x: np.asarray(x, float) ** 2, mesh)
        L = linear_operator_matrix(coupling_from_kernel(kd))
        for t in (0.1, 1.0, 3.0):
            ref = linalg.expm(-t * L) @ g.values
            ours = linear_oracle_p2(kd, g, None, t)
            np.testing.assert_allclose(ours.values, ref, atol=1e-10)

    def test_long_time_limit_is_mean(self):
        mesh = uniform_mesh(16)
        kd = project_kernel(SeparableSmooth(), mesh)
        g = project_function(lambda x: np.asarray(x, float), mesh)
        u = linear_oracle_p2(kd, g, None, 200.0)
        mean = float(mesh.widths @ g.values)
        np.testing.assert_allclose(u.values, mean, atol=1e-8)

    def test_constant_source_zero_mode(self):
        # with f = const the zero mode grows linearly: mass(t) = mass(0) + t * int f
        mesh = uniform_mesh(16)
        kd = project_kernel(SeparableSmooth(), mesh)
        g = project_function(lambda x: np.asarray(x, float), mesh)
        f = np.ones(16)
        t = 2.0
        u = linear_oracle_p2(kd, g, f, t)
        mass = float(mesh.widths @ u.values)
        assert mass == pytest.approx(float(mesh.widths @ g.values) + t, abs=1e-10)


class TestTwoNode:
    def test_p2_is_exponential(self):
        for t in (0.0, 0.5, 2.0):
            assert two_node_closed_form(2.0, 1.7, 1.0, t) == pytest.approx(np.exp(-1.7 * t))

    def test_ode_oracle_p3(self):
        sol = integrate.solve_ivp(
            lambda t, w: [-np.sign(w[0]) * abs(w[0]) ** 2],
            (0.0, 1.5),
            [1.0],
            rtol=1e-11,
            atol=1e-12,
            dense_output=True,
        )
        for t in (0.3, 1.0, 1.5):
            assert two_node_closed_form(3.0, 1.0, 1.0, t) == pytest.approx(
                float(sol.sol(t)[0]), abs=1e-8
            )

    def test_extinction_p15(self):
        # w0^(2-p) / ((2-p) K) = 1 / 0.5 = 2
        assert two_node_extinction_time(1.5, 1.0, 1.0) == pytest.approx(2.0)
        assert two_node_closed_form(1.5, 1.0, 1.0, 2.0) == 0.0
        assert two_node_closed_form(1.5, 1.0, 1.0, 3.0) == 0.0

    def test_sign_preserved(self):
        assert two_node_closed_form(1.5, 1.0, -1.0, 0.5) == pytest.approx(
            -two_node_closed_form(1.5, 1.0, 1.0, 0.5)
        )


def _toy_traj(mesh, scale, T=1.0):
    times = np.linspace(0.0, T, 5)
    states = scale * np.outer(np.ones(5), np.arange(mesh.n, dtype=float))
    states *= (1.0 + times)[:, None]
    return Trajectory("backward_euler", mesh, times, states)


class TestTrajError:
    def test_zero_for_identical(self):
        mesh = uniform_mesh(8)
        a = _toy_traj(mesh, 1.0)
        assert traj_error_c0l2(a, a) == pytest.approx(0.0, abs=1e-14)

    def test_symmetric(self):
        mesh = uniform_mesh(8)
        a = _toy_traj(mesh, 1.0)
        b = _toy_traj(mesh, 1.3)
        assert traj_error_c0l2(a, b) == pytest.approx(traj_error_c0l2(b, a), abs=1e-12)

    def test_triangle_inequality(self):
        mesh = uniform_mesh(8)
        a = _toy_traj(mesh, 1.0)
        b = _toy_traj(mesh, 1.3)
        c = _toy_traj(mesh, 0.6)
        ab = traj_error_c0l2(a, b)
        bc = traj_error_c0l2(b, c)
        ac = traj_error_c0l2(a, c)
        assert ac <= ab + bc + 1e-12

    def test_cross_mesh_nested(self):
        coarse = uniform_mesh(4)
        fine = uniform_mesh(8)
        a = _toy_traj(coarse, 1.0)
        b = Trajectory(
            "backward_euler",
            fine,
            a.times,
            np.repeat(a.states, 2, axis=1),
        )
        # b is the exact refinement of a, so the error vanishes
        assert traj_error_c0l2(a, b, n_common=8) == pytest.approx(0.0, abs=1e-14)

    def test_non_nested_rejected(self):
        a = _toy_traj(uniform_mesh(4), 1.0)
        b = _toy_traj(uniform_mesh(6), 1.0)
        with pytest.raises(NonNestedMeshes):
            traj_error_c0l2(a, b, n_common=8)

    def test_callable_reference(self):
        # reference given as t -> grid values on the trajectory's mesh
        mesh = uniform_mesh(64)
        times = np.array([0.0, 1.0])
        vals = np.outer(1.0 + times, mesh.centers)
        a = Trajectory("backward_euler", mesh, times, vals)
        err = traj_error_c0l2(a, lambda t: (1.0 + t) * mesh.centers)
        # the piecewise-constant-in-time reading of a introduces an O(1)
        # gap in time but none at the breakpoints themselves
        exact = traj_error_c0l2(a, lambda t: a.state_const(t))
        assert exact == pytest.approx(0.0, abs=1e-14)
        assert err <= np.sqrt(np.mean(mesh.centers**2)) + 1e-12


class TestFitRate:
    def test_exact_power_law(self):
        xs = [0.5**k for k in range(6)]
        pts = [(x, 3.0 * x**1.7) for x in xs]
        result = fit_rate(pts)
        assert result.slope == pytest.approx(1.7, abs=1e-12)
        assert result.intercept == pytest.approx(np.log(3.0), abs=1e-12)
        assert result.max_residual < 1e-12

    def test_requires_three_points(self):
        with pytest.raises(ValueError):
            fit_rate([(1.0, 1.0), (0.5, 0.5)])

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            fit_rate([(1.0, 1.0), (0.5, -0.5), (0.25, 0.1)])

    def test_degenerate_abscissae(self):
        with pytest.raises(DegenerateFit):
            fit_rate([(1.0, 1.0), (1.0, 0.5), (1.0, 0.1)])


class TestStudies:
    def test_space_study_linear_rate(self):
        result = study_space(
            SeparableSmooth(),
            lambda x: np.asarray(x, float),
            None,
            2.0,
            n_list=[8, 16, 32],
            n_ref=128,
            T=0.5,
            tau=0.025,
        )
        assert 0.7 <= result.slope <= 1.3
        assert all(np.diff(result.errors) < 0)

    def test_space_study_requires_nesting(self):
        with pytest.raises(NonNestedMeshes):
            study_space(
                SeparableSmooth(),
                lambda x: np.asarray(x, float),
                None,
                2.0,
                n_list=[12],
                n_ref=128,
                T=0.5,
                tau=0.1,
            )

    def test_time_study_backward_p2(self):
        result = study_time(
            SeparableSmooth(),
            lambda x: np.asarray(x, float),
            None,
            2.0,
            n_fixed=32,
            tau_list=[0.25, 0.125, 0.0625, 0.03125],
            T=1.0,
        )
        assert 0.8 <= result.slope <= 1.2
