"""Time-stepping schemes for the nonlocal evolution, on kernels or graphs.

Three schemes: explicit Euler under the nonlinear CFL step rule for
p in (1, 2], the diminishing-step subgradient scheme for p = 1, and the
unconditionally stable proximal (backward Euler) scheme for p > 1.
Trajectories keep every state and expose the piecewise-linear and
piecewise-constant time extensions used by the error functionals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .graphs import GraphSample
from .meshes import DiscreteKernel, GridFunction, Mesh, MeshMismatch, inject_eval
from .operators import (
    Coupling,
    InvalidP,
    NoConvergence,
    cfl_constant,
    coupling_from_kernel,
    one_lap_select,
    plap_apply,
    resolvent_with_info,
    linear_operator_matrix,
    h_norm2,
)


class TimeDependentSource(Exception):
    """Explicit schemes require a time-independent source."""


class StepUnderflow(Exception):
    """CFL step collapsed below the floor (residual blow-up guard)."""


class HorizonUnreachable(Exception):
    """Diminishing steps hit the iteration cap before covering [0, T]."""

    def __init__(self, covered: float, horizon: float):
        self.covered = covered
        self.horizon = horizon
        super().__init__(f"covered t={covered:.6g} of horizon T={horizon:.6g}")


# ---------------------------------------------------------------------------
# Source terms


class ZeroSource:
    def values_at(self, mesh: Mesh, t: float) -> np.ndarray:
        return np.zeros(mesh.n)

    def step_average(self, mesh: Mesh, t0: float, t1: float) -> np.ndarray:
        return np.zeros(mesh.n)

    time_constant = True


class TimeConstantSource:
    def __init__(self, f: GridFunction):
        self.f = f

    time_constant = True

    def values_at(self, mesh: Mesh, t: float) -> np.ndarray:
        return self.f.values

    def step_average(self, mesh: Mesh, t0: float, t1: float) -> np.ndarray:
        return self.f.values


class SeparableSource:
    """f(x, t) = a(x) b(t); the step average integrates b by 4-point Gauss
    unless an antiderivative of b is supplied."""

    time_constant = False

    def __init__(self, a: GridFunction, b: Callable[[float], float], b_antideriv=None):
        self.a = a
        self.b = b
        self.b_antideriv = b_antideriv

    def values_at(self, mesh: Mesh, t: float) -> np.ndarray:
        return self.a.values * float(self.b(t))

    def _b_mean(self, t0, t1):
        if self.b_antideriv is not None:
            return (self.b_antideriv(t1) - self.b_antideriv(t0)) / (t1 - t0)
        x, w = np.polynomial.legendre.leggauss(4)
        pts = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * x
        return 0.5 * float(w @ np.array([self.b(t) for t in pts]))

    def step_average(self, mesh: Mesh, t0: float, t1: float) -> np.ndarray:
        return self.a.values * self._b_mean(t0, t1)


class TabulatedSource:
    """Piecewise-linear interpolation in time of tabulated snapshots."""

    time_constant = False

    def __init__(self, times: np.ndarray, snapshots: list[GridFunction]):
        self.times = np.asarray(times, dtype=float)
        self.snapshots = np.stack([s.values for s in snapshots])

    def values_at(self, mesh: Mesh, t: float) -> np.ndarray:
        out = np.empty(self.snapshots.shape[1])
        for k in range(self.snapshots.shape[1]):
            out[k] = np.interp(t, self.times, self.snapshots[:, k])
        return out

    def step_average(self, mesh: Mesh, t0: float, t1: float) -> np.ndarray:
        x, w = np.polynomial.legendre.leggauss(4)
        pts = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * x
        return 0.5 * sum(wi * self.values_at(mesh, t) for wi, t in zip(w, pts))


SourceTerm = ZeroSource | TimeConstantSource | SeparableSource | TabulatedSource


# ---------------------------------------------------------------------------
# Problem and trajectory containers


@dataclass
class Problem:
    operator: DiscreteKernel | GraphSample
    p: float
    initial: GridFunction
    source: SourceTerm
    horizon: float

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.coupling().mesh.n != self.initial.mesh.n:
            raise MeshMismatch("initial state and operator sizes differ")

    def coupling(self) -> Coupling:
        if isinstance(self.operator, GraphSample):
            return self.operator.coupling()
        return coupling_from_kernel(self.operator)


@dataclass
class StepRecord:
    tau: float
    iters: int = 0
    residual: float = 0.0


@dataclass
class Trajectory:
    scheme: str  # "forward_euler" | "subgradient_p1" | "backward_euler"
    mesh: Mesh
    times: np.ndarray  # t_0 = 0 < ... < t_N = T
    states: np.ndarray  # (N+1, n)
    steps: list[StepRecord] = field(default_factory=list)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must increase strictly")
        if self.states.shape != (len(self.times), self.mesh.n):
            raise ValueError("state array shape does not match times/mesh")

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def _bracket(self, t: float) -> int:
        """Index k with t in (t_{k-1}, t_k]; t = 0 gives k = 1 conventionally."""
        k = int(np.searchsorted(self.times, t, side="left"))
        return min(max(k, 1), len(self.times) - 1)

    def state_linear(self, t: float) -> np.ndarray:
        """Piecewise-linear-in-time state vector at t."""
        k = self._bracket(t)
        t0, t1 = self.times[k - 1], self.times[k]
        w = (t - t0) / (t1 - t0)
        return (1.0 - w) * self.states[k - 1] + w * self.states[k]

    def state_const(self, t: float) -> np.ndarray:
        """Piecewise-constant state: u^{k-1} on ]t_{k-1}, t_k] for explicit
        schemes, u^k for backward Euler; u^0 at t = 0."""
        if t <= self.times[0]:
            return self.states[0]
        k = self._bracket(t)
        return self.states[k] if self.scheme == "backward_euler" else self.states[k - 1]


def extend_linear(traj: Trajectory, x: float, t: float) -> float:
    return float(inject_eval(GridFunction(traj.mesh, traj.state_linear(t)), x))


def extend_const(traj: Trajectory, x: float, t: float) -> float:
    return float(inject_eval(GridFunction(traj.mesh, traj.state_const(t)), x))


def apply_operator(prob: Problem, u: GridFunction) -> GridFunction:
    """Apply the problem's p-Laplacian (kernelized or graph-based) to u."""
    return plap_apply(prob.coupling(), prob.p, u)


# ---------------------------------------------------------------------------
# Schemes


def _require_time_constant(source: SourceTerm):
    if not source.time_constant:
        raise TimeDependentSource("explicit schemes need a Zero or TimeConstant source")


def forward_euler(
    prob: Problem,
    tau_max: float,
    safety: float = 0.9,
    residual_floor: float = 1e-8,
    keep_states: bool = True,
) -> Trajectory:
    """Explicit Euler with the state-dependent CFL step rule, p in (1, 2].

    tau_k = min(tau_max, safety * 2C * r^((2-p)/(p-1)), T - t) with r the
    weighted L2 residual at the state being stepped; when r falls below
    ``residual_floor`` the state counts as stationary and the CFL bound is
    dropped.  The rule is evaluated at u^{k-1}; safety < 1 absorbs the
    pre/post-step gap.
    """
    p = prob.p
    if not 1.0 < p <= 2.0:
        raise InvalidP(f"forward Euler requires p in (1, 2], got {p}")
    _require_time_constant(prob.source)
    if not 0.0 < safety <= 1.0:
        raise ValueError("safety must lie in (0, 1]")
    coup = prob.coupling()
    mesh = coup.mesh
    h = mesh.widths
    fvec = prob.source.values_at(mesh, 0.0)
    k1 = coup.linf1()
    two_c = 2.0 * cfl_constant(p, k1) if k1 > 0 else np.inf
    expo = (2.0 - p) / (p - 1.0)
    T = prob.horizon

    u = prob.initial.values.copy()
    t = 0.0
    times = [0.0]
    states = [u.copy()]
    steps: list[StepRecord] = []
    while t < T - 1e-14:
        lap = plap_apply(coup, p, GridFunction(mesh, u)).values
        r = h_norm2(h, lap - fvec)
        if r <= residual_floor:
            # numerically stationary: for p < 2 the bound below shrinks
            # with r and would grind the run to a halt, yet the update has
            # norm tau * r and is harmless at any step size
            tau = min(tau_max, T - t)
        else:
            tau = min(tau_max, safety * two_c * r**expo, T - t)
        if tau < 1e-14:
            raise StepUnderflow(f"step collapsed to {tau:.3e} at t={t:.6g}")
        u = u + tau * (fvec - lap)
        t = T if T - (t + tau) < 1e-14 else t + tau
        times.append(t)
        if keep_states or t == T:
            states.append(u.copy())
        steps.append(StepRecord(tau=tau, residual=r))
    if not keep_states:
        times = [times[0], times[-1]]
        states = [states[0], states[-1]]
        steps = [steps[-1]] if steps else []
    return Trajectory("forward_euler", mesh, np.array(times), np.stack(states), steps)


def subgradient_p1(
    prob: Problem,
    alpha0: float,
    max_steps: int = 2_000_000,
) -> Trajectory:
    """Diminishing-step scheme for p = 1 with tau_k = alpha_k / max(res, 1).

    alpha_k = alpha0 / (k + 1) is square-summable but not summable, so
    finite horizons stay reachable while the classical boundedness
    estimate applies.
    """
    if prob.p != 1.0:
        raise InvalidP("subgradient scheme is the p = 1 scheme")
    _require_time_constant(prob.source)
    coup = prob.coupling()
    mesh = coup.mesh
    h = mesh.widths
    fvec = prob.source.values_at(mesh, 0.0)
    T = prob.horizon

    u = prob.initial.values.copy()
    t = 0.0
    times = [0.0]
    states = [u.copy()]
    steps: list[StepRecord] = []
    for k in range(max_steps):
        eta, _ = one_lap_select(coup, GridFunction(mesh, u))
        r = h_norm2(h, eta.values - fvec)
        alpha = alpha0 / (k + 1.0)
        tau = min(alpha / max(r, 1.0), T - t)
        u = u + tau * (fvec - eta.values)
        t = T if T - (t + tau) < 1e-14 else t + tau
        times.append(t)
        states.append(u.copy())
        steps.append(StepRecord(tau=tau, residual=r))
        if t >= T:
            return Trajectory("subgradient_p1", mesh, np.array(times), np.stack(states), steps)
    raise HorizonUnreachable(t, T)


def _uniform_partition(T: float, n_steps: int) -> np.ndarray:
    return np.linspace(0.0, T, n_steps + 1)


def backward_euler(
    prob: Problem,
    time_partition,
    solve_tol: float | None = None,
    max_iters: int = 500,
) -> Trajectory:
    """Proximal iteration u^k = J_{tau L_p}(u^{k-1} + tau f^k), p > 1.

    ``time_partition`` is either an integer (uniform steps) or an
    increasing array 0 = t_0 < ... < t_N = T.  f^k is the exact source
    average over each step where available, Gauss quadrature otherwise.
    For p = 2 with a uniform partition the step matrix is factorized once.
    """
    p = prob.p
    if p <= 1.0:
        raise InvalidP(f"backward Euler requires p > 1, got {p}")
    coup = prob.coupling()
    mesh = coup.mesh
    T = prob.horizon
    if np.isscalar(time_partition):
        times = _uniform_partition(T, int(time_partition))
    else:
        times = np.asarray(time_partition, dtype=float)
        if times[0] != 0.0 or abs(times[-1] - T) > 1e-12 or np.any(np.diff(times) <= 0):
            raise ValueError("partition must increase strictly from 0 to T")
    taus = np.diff(times)

    solver = None
    if p == 2.0 and np.allclose(taus, taus[0], rtol=0.0, atol=1e-15):
        L = linear_operator_matrix(coup)
        n = mesh.n
        if coup.is_sparse:
            solver = spla.factorized((sp.eye(n, format="csc") + taus[0] * L).tocsc())
        else:
            lu = scipy.linalg.lu_factor(np.eye(n) + taus[0] * L)
            solver = lambda b: scipy.linalg.lu_solve(lu, b)

    u = prob.initial.values.copy()
    states = [u.copy()]
    steps: list[StepRecord] = []
    for k, tau in enumerate(taus):
        fk = prob.source.step_average(mesh, times[k], times[k + 1])
        b = GridFunction(mesh, u + tau * fk)
        if solver is not None:
            u = solver(b.values)
            rec = StepRecord(tau=float(tau), iters=1, residual=0.0)
        else:
            sol, iters, res = resolvent_with_info(
                coup, p, float(tau), b, tol=solve_tol, max_iters=max_iters, warm_start=u
            )
            u = sol.values
            rec = StepRecord(tau=float(tau), iters=iters, residual=res)
        states.append(u.copy())
        steps.append(rec)
    return Trajectory("backward_euler", mesh, times, np.stack(states), steps)
