"""Time-stepping schemes: explicit, diminishing-step, and proximal."""

import numpy as np
import pytest

from nlplap.analysis import two_node_closed_form
from nlplap.evolve import (
    HorizonUnreachable,
    Problem,
    SeparableSource,
    TabulatedSource,
    TimeConstantSource,
    TimeDependentSource,
    Trajectory,
    ZeroSource,
    backward_euler,
    forward_euler,
    subgradient_p1,
)
from nlplap.kernels import ConstantKernel, SeparableSmooth
from nlplap.meshes import GridFunction, norm_lq, project_function, project_kernel, uniform_mesh
from nlplap.operators import InvalidP, cfl_constant
from nlplap import graphs


def _problem(p, n=16, T=0.5, g=None, source=None, kernel=None):
    mesh = uniform_mesh(n)
    kd = project_kernel(kernel or SeparableSmooth(), mesh)
    if g is None:
        g = project_function(lambda x: np.asarray(x, float), mesh)
    return Problem(kd, p, g, source or ZeroSource(), T)


def _two_node_problem(p, T):
    mesh = uniform_mesh(2)
    kd = project_kernel(ConstantKernel(1.0), mesh)
    g = GridFunction(mesh, np.array([0.0, 1.0]))
    return Problem(kd, p, g, ZeroSource(), T)


class TestSources:
    def test_zero(self):
        np.testing.assert_array_equal(ZeroSource().values_at(uniform_mesh(4), 0.3), np.zeros(4))

    def test_time_constant_average(self):
        mesh = uniform_mesh(4)
        f = TimeConstantSource(GridFunction(mesh, np.arange(4.0)))
        np.testing.assert_array_equal(f.step_average(mesh, 0.0, 0.5), np.arange(4.0))

    def test_separable_exact_antiderivative(self):
        mesh = uniform_mesh(4)
        a = project_function(lambda x: np.asarray(x, float), mesh)
        f = SeparableSource(a, b=np.cos, b_antideriv=np.sin)
        # step average of cos over [0.2, 0.9] times a(x)
        avg = (np.sin(0.9) - np.sin(0.2)) / 0.7
        np.testing.assert_allclose(f.step_average(mesh, 0.2, 0.9), a.values * avg, atol=1e-14)

    def test_separable_quadrature_fallback(self):
        mesh = uniform_mesh(4)
        a = project_function(lambda x: np.asarray(x, float), mesh)
        f = SeparableSource(a, b=np.cos)
        avg = (np.sin(0.9) - np.sin(0.2)) / 0.7
        np.testing.assert_allclose(f.step_average(mesh, 0.2, 0.9), a.values * avg, atol=1e-9)

    def test_tabulated_interpolation(self):
        mesh = uniform_mesh(2)
        snaps = [
            GridFunction(mesh, np.array([0.0, 0.0])),
            GridFunction(mesh, np.array([1.0, 2.0])),
        ]
        f = TabulatedSource(np.array([0.0, 1.0]), snaps)
        np.testing.assert_allclose(f.values_at(mesh, 0.5), [0.5, 1.0])


class TestTrajectory:
    def test_state_interpolation_modes(self):
        mesh = uniform_mesh(1)
        tr = Trajectory("backward_euler", mesh, np.array([0.0, 1.0]), np.array([[0.0], [2.0]]))
        assert tr.state_linear(0.5)[0] == pytest.approx(1.0)
        assert tr.state_const(0.5)[0] == 2.0  # implicit scheme holds u^k
        tr2 = Trajectory("forward_euler", mesh, np.array([0.0, 1.0]), np.array([[0.0], [2.0]]))
        assert tr2.state_const(0.5)[0] == 0.0  # explicit scheme holds u^{k-1}

    def test_times_must_increase(self):
        mesh = uniform_mesh(1)
        with pytest.raises(ValueError):
            Trajectory("forward_euler", mesh, np.array([0.0, 0.0]), np.zeros((2, 1)))


class TestForwardEuler:
    def test_constant_initial_is_stationary(self):
        mesh = uniform_mesh(8)
        g = GridFunction(mesh, np.full(8, 1.3))
        prob = Problem(project_kernel(SeparableSmooth(), mesh), 1.5, g, ZeroSource(), 0.4)
        tr = forward_euler(prob, tau_max=0.05)
        np.testing.assert_allclose(tr.states[-1], 1.3, atol=1e-14)

    def test_two_node_closed_form(self):
        prob = _two_node_problem(1.5, 1.0)
        tr = forward_euler(prob, tau_max=1e-3)
        gap = tr.states[-1][1] - tr.states[-1][0]
        assert gap == pytest.approx(two_node_closed_form(1.5, 1.0, 1.0, 1.0), abs=1e-2)

    def test_mass_conserved(self):
        prob = _problem(1.5)
        tr = forward_euler(prob, tau_max=0.01)
        h = prob.coupling().mesh.widths
        masses = tr.states @ h
        np.testing.assert_allclose(masses, masses[0], atol=1e-13)

    def test_step_rule_respected(self):
        prob = _problem(1.5, T=0.2)
        coup = prob.coupling()
        two_c = 2.0 * cfl_constant(1.5, coup.linf1())
        tr = forward_euler(prob, tau_max=0.05, safety=0.9)
        for rec in tr.steps:
            bound = 0.9 * two_c * max(rec.residual, 1e-8) ** 1.0  # (2-p)/(p-1) = 1
            assert rec.tau <= min(0.05, bound) + 1e-14

    def test_reaches_horizon_exactly(self):
        tr = forward_euler(_problem(1.5, T=0.37), tau_max=0.05)
        assert tr.times[-1] == 0.37

    def test_p_validation(self):
        with pytest.raises(InvalidP):
            forward_euler(_problem(3.0), tau_max=0.01)

    def test_time_dependent_source_rejected(self):
        mesh = uniform_mesh(4)
        a = project_function(lambda x: np.asarray(x, float), mesh)
        src = SeparableSource(a, b=np.cos)
        prob = Problem(project_kernel(SeparableSmooth(), mesh), 1.5, a, src, 0.1)
        with pytest.raises(TimeDependentSource):
            forward_euler(prob, tau_max=0.01)

    def test_constant_source_adds_mass_linearly(self):
        mesh = uniform_mesh(8)
        g = GridFunction(mesh, np.zeros(8))
        f = TimeConstantSource(GridFunction(mesh, np.ones(8)))
        prob = Problem(project_kernel(SeparableSmooth(), mesh), 1.5, g, f, 0.25)
        tr = forward_euler(prob, tau_max=0.01)
        h = mesh.widths
        assert float(h @ tr.states[-1]) == pytest.approx(0.25, abs=1e-12)


class TestSubgradient:
    def test_requires_p1(self):
        with pytest.raises(InvalidP):
            subgradient_p1(_problem(1.5), alpha0=0.1)

    def test_stationary_constant(self):
        mesh = uniform_mesh(8)
        g = GridFunction(mesh, np.full(8, 0.7))
        prob = Problem(project_kernel(SeparableSmooth(), mesh), 1.0, g, ZeroSource(), 0.2)
        tr = subgradient_p1(prob, alpha0=0.2)
        np.testing.assert_allclose(tr.states[-1], 0.7, atol=1e-14)

    def test_boundedness_estimate(self):
        mesh = uniform_mesh(32)
        g = project_function(lambda x: (np.asarray(x, float) > 0.5).astype(float), mesh)
        prob = Problem(project_kernel(SeparableSmooth(), mesh), 1.0, g, ZeroSource(), 0.2)
        alpha0 = 0.3
        tr = subgradient_p1(prob, alpha0=alpha0)
        bound = norm_lq(g, 2) + alpha0 * np.pi / np.sqrt(6.0) + 1e-9
        for state in tr.states:
            assert norm_lq(GridFunction(mesh, state), 2) <= bound

    def test_mass_conserved(self):
        mesh = uniform_mesh(16)
        g = project_function(lambda x: np.sin(2 * np.pi * np.asarray(x, float)), mesh)
        prob = Problem(project_kernel(SeparableSmooth(), mesh), 1.0, g, ZeroSource(), 0.3)
        tr = subgradient_p1(prob, alpha0=0.2)
        h = mesh.widths
        masses = tr.states @ h
        np.testing.assert_allclose(masses, masses[0], atol=1e-13)

    def test_horizon_unreachable_reports_coverage(self):
        prob = _problem(1.0, T=5.0)
        with pytest.raises(HorizonUnreachable):
            subgradient_p1(prob, alpha0=0.01, max_steps=10)


class TestBackwardEuler:
    def test_mass_conserved(self):
        prob = _problem(3.0, T=0.5)
        tr = backward_euler(prob, 10, solve_tol=1e-11)
        h = prob.coupling().mesh.widths
        masses = tr.states @ h
        np.testing.assert_allclose(masses, masses[0], atol=1e-9)

    def test_unconditional_stability(self):
        # arbitrarily large steps never amplify the state
        rng = np.random.default_rng(0)
        mesh = uniform_mesh(24)
        g = GridFunction(mesh, rng.normal(size=24))
        # at tau = 10 and p < 2 the proximal minimizer pushes state
        # differences toward machine epsilon, where psi(d) = |d|^(p-1)
        # floors the attainable residual near lam * eps^(p-1) ~ 1e-7
        tol = 1e-7
        for p in (1.5, 2.0, 4.0):
            prob = Problem(project_kernel(SeparableSmooth(), mesh), p, g, ZeroSource(), 40.0)
            tr = backward_euler(prob, 4, solve_tol=tol)  # tau = 10
            for q in (1, 2, np.inf):
                for state in tr.states:
                    assert norm_lq(GridFunction(mesh, state), q) <= norm_lq(g, q) + 10 * tol

    def test_discrete_contraction(self):
        rng = np.random.default_rng(1)
        mesh = uniform_mesh(16)
        kd = project_kernel(SeparableSmooth(), mesh)
        g1 = GridFunction(mesh, rng.normal(size=16))
        g2 = GridFunction(mesh, rng.normal(size=16))
        tol = 1e-11
        tr1 = backward_euler(Problem(kd, 3.0, g1, ZeroSource(), 1.0), 8, solve_tol=tol)
        tr2 = backward_euler(Problem(kd, 3.0, g2, ZeroSource(), 1.0), 8, solve_tol=tol)
        for q in (1, 2, np.inf):
            g_gap = norm_lq(GridFunction(mesh, g1.values - g2.values), q)
            for k in range(len(tr1.states)):
                gap = norm_lq(GridFunction(mesh, tr1.states[k] - tr2.states[k]), q)
                assert gap <= g_gap + 10 * k * tol

    def test_two_node_closed_form_p3(self):
        prob = _two_node_problem(3.0, 1.0)
        tr = backward_euler(prob, 1000, solve_tol=1e-12)
        gap = tr.states[-1][1] - tr.states[-1][0]
        assert gap == pytest.approx(two_node_closed_form(3.0, 1.0, 1.0, 1.0), abs=1e-3)

    def test_p2_prefactored_matches_general_path(self):
        # uniform partition takes the factorized branch; a nonuniform
        # partition with the same breakpoints must agree
        prob = _problem(2.0, T=1.0)
        tr_fast = backward_euler(prob, 4)
        times = np.array([0.0, 0.25, 0.5, 0.75 + 1e-9, 1.0])
        tr_slow = backward_euler(prob, times, solve_tol=1e-12)
        np.testing.assert_allclose(tr_fast.states[-1], tr_slow.states[-1], atol=1e-6)

    def test_partition_validated(self):
        prob = _problem(2.0, T=1.0)
        with pytest.raises(ValueError):
            backward_euler(prob, np.array([0.0, 0.4]))  # does not reach T
        with pytest.raises(ValueError):
            backward_euler(prob, np.array([0.1, 1.0]))  # does not start at 0

    def test_graph_operator_supported(self):
        mesh = uniform_mesh(32)
        kd = project_kernel(SeparableSmooth(), mesh)
        gs = graphs.sample(graphs.truncate(kd, 0.5), 0)
        g = project_function(lambda x: np.asarray(x, float), mesh)
        prob = Problem(gs, 2.0, g, ZeroSource(), 0.5)
        tr = backward_euler(prob, 5)
        assert tr.states.shape == (6, 32)
        assert np.all(np.isfinite(tr.states))

    def test_graph_forward_matches_kernel_form(self):
        # with the graph coupling, one explicit step uses (1/(rho n)) sums
        # over neighbors; verify against a hand-rolled step
        mesh = uniform_mesh(16)
        kd = project_kernel(SeparableSmooth(), mesh)
        rho = 0.5
        gs = graphs.sample(graphs.truncate(kd, rho), 4)
        g = project_function(lambda x: np.asarray(x, float), mesh)
        prob = Problem(gs, 1.5, g, ZeroSource(), 0.01)
        tr = forward_euler(prob, tau_max=0.01)
        A = gs.adjacency().toarray()
        v = g.values
        lap = np.zeros(16)
        for i in range(16):
            for j in range(16):
                if A[i, j]:
                    d = v[j] - v[i]
                    lap[i] -= (1.0 / (rho * 16)) * np.sign(d) * abs(d) ** 0.5
        tau = tr.steps[0].tau
        np.testing.assert_allclose(tr.states[1], v - tau * lap, atol=1e-12)
