"""Reference oracles, sup-in-time error norms, and convergence-rate studies.

Absolute correctness is anchored by two closed-form oracles (the linear
p = 2 semigroup and the two-node scalar ODE); the rate studies measure
self-convergence against a finest discretization and fit log-log slopes.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import gcd
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from . import graphs as graphmod
from .evolve import (
    Problem,
    SourceTerm,
    Trajectory,
    ZeroSource,
    backward_euler,
    forward_euler,
    subgradient_p1,
)
from .kernels import KernelSpec
from .meshes import DiscreteKernel, GridFunction, project_function, project_kernel, uniform_mesh


class EigenFailure(Exception):
    """Eigendecomposition of the linear operator failed."""


class NonNestedMeshes(Exception):
    """Cross-mesh comparison requires both sizes to divide the common size."""


class DegenerateFit(Exception):
    """All abscissae coincide; no slope can be fitted."""


@dataclass
class RateStudyResult:
    """Fitted log-log slope of error against a discretization parameter."""

    params: np.ndarray
    errors: np.ndarray
    slope: float
    intercept: float
    max_residual: float
    extras: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Oracles


def linear_oracle_p2(kd: DiscreteKernel, g: GridFunction, f_const: np.ndarray | None, t: float) -> GridFunction:
    """Exact solution of the linear (p = 2) system u' = -L u + f at time t.

    L is symmetrized in the cell-weighted inner product and
    eigendecomposed, so the result is exact up to dense linear algebra
    rounding.  The zero eigenvalue (constant mode) gets its t * f limit.
    """
    mesh = kd.mesh
    h = mesh.widths
    sqrt_h = np.sqrt(h)
    rowsum = kd.matrix @ h
    L = np.diag(rowsum) - kd.matrix * h[None, :]
    S = sqrt_h[:, None] * L / sqrt_h[None, :]
    S = 0.5 * (S + S.T)
    try:
        lam, V = scipy.linalg.eigh(S)
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover
        raise EigenFailure(str(exc)) from exc
    lam = np.maximum(lam, 0.0)  # L is positive semidefinite; clip rounding noise
    gh = V.T @ (sqrt_h * g.values)
    decay = np.exp(-lam * t)
    out = decay * gh
    if f_const is not None and np.any(f_const):
        fh = V.T @ (sqrt_h * f_const)
        with np.errstate(divide="ignore", invalid="ignore"):
            ramp = np.where(lam > 1e-13, (1.0 - decay) / lam, t)
        out = out + ramp * fh
    return GridFunction(mesh, (V @ out) / sqrt_h)


def two_node_closed_form(p: float, K: float, w0: float, t: float) -> float:
    """Closed-form gap w(t) of the two-node system dw/dt = -K psi(w).

    For p != 2: w(t) = (w0^(2-p) - (2-p) K t)^(1/(2-p)), clamped at 0 once
    the base vanishes (finite extinction for p < 2); exponential decay at
    p = 2; odd in w0.
    """
    if p <= 1.0:
        raise ValueError("p must exceed 1")
    if K <= 0:
        raise ValueError("K must be positive")
    if w0 == 0.0:
        return 0.0
    s = 1.0 if w0 > 0 else -1.0
    a = abs(w0)
    if p == 2.0:
        return s * a * float(np.exp(-K * t))
    base = a ** (2.0 - p) - (2.0 - p) * K * t
    if p < 2.0 and base <= 0.0:
        return 0.0
    return s * float(base ** (1.0 / (2.0 - p)))


def two_node_extinction_time(p: float, K: float, w0: float) -> float:
    """Time at which the two-node gap reaches zero (p < 2 only)."""
    if not 1.0 < p < 2.0:
        raise ValueError("finite extinction requires p in (1, 2)")
    return abs(w0) ** (2.0 - p) / ((2.0 - p) * K)


# ---------------------------------------------------------------------------
# Error functional


def _refine(values: np.ndarray, factor: int) -> np.ndarray:
    return np.repeat(values, factor)


def _common_size(na: int, nb: int, n_common: int | None) -> int:
    if n_common is None:
        n_common = na * nb // gcd(na, nb)
    if n_common % na or n_common % nb:
        raise NonNestedMeshes(f"sizes {na}, {nb} must divide the common size {n_common}")
    return n_common


def traj_error_c0l2(
    a: Trajectory,
    b: Trajectory | Callable[[float], np.ndarray],
    n_common: int | None = None,
    time_samples: int = 64,
) -> float:
    """sup-in-time L2 distance between two trajectories (or one oracle).

    States are compared through their scheme-appropriate piecewise-constant
    extensions on the common nested refinement; the sup runs over the union
    of both breakpoint sets plus uniformly spread extra samples.  A callable
    second argument must return values on ``a``'s mesh.
    """
    na = a.mesh.n
    if isinstance(b, Trajectory):
        nc = _common_size(na, b.mesh.n, n_common)
        fb = nc // b.mesh.n
        horizon = min(a.horizon, b.horizon)
        ts = np.concatenate(
            [
                a.times[a.times <= horizon + 1e-15],
                b.times[b.times <= horizon + 1e-15],
                np.linspace(0.0, horizon, time_samples),
            ]
        )

        def b_vals(t):
            return _refine(b.state_const(t), fb)

    else:
        nc = _common_size(na, na, n_common)
        horizon = a.horizon
        ts = np.concatenate([a.times, np.linspace(0.0, horizon, time_samples)])

        def b_vals(t):
            return _refine(np.asarray(b(t), dtype=float), nc // na)

    fa = nc // na
    ts = np.unique(np.clip(ts, 0.0, horizon))
    w = 1.0 / nc
    worst = 0.0
    for t in ts:
        d = _refine(a.state_const(t), fa) - b_vals(t)
        worst = max(worst, float(np.sqrt(w * np.sum(d**2))))
    return worst


def fit_rate(points: Sequence[tuple[float, float]]) -> RateStudyResult:
    """Least-squares slope of log(error) against log(parameter)."""
    pts = [(float(x), float(e)) for x, e in points]
    if len(pts) < 3:
        raise ValueError("need at least 3 points to fit a rate")
    xs = np.array([x for x, _ in pts])
    es = np.array([e for _, e in pts])
    if np.any(es <= 0) or np.any(xs <= 0):
        raise ValueError("parameters and errors must be positive")
    if np.all(xs == xs[0]):
        raise DegenerateFit("all parameters equal")
    lx, le = np.log(xs), np.log(es)
    slope, intercept = np.polyfit(lx, le, 1)
    resid = le - (slope * lx + intercept)
    return RateStudyResult(xs, es, float(slope), float(intercept), float(np.abs(resid).max()))


# ---------------------------------------------------------------------------
# Studies


def _run_scheme(
    scheme: str,
    prob: Problem,
    tau: float,
    solve_tol: float | None,
    safety: float = 0.9,
) -> Trajectory:
    if scheme == "backward":
        n_steps = max(1, round(prob.horizon / tau))
        return backward_euler(prob, n_steps, solve_tol=solve_tol)
    if scheme == "forward":
        return forward_euler(prob, tau_max=tau, safety=safety)
    if scheme == "subgradient":
        return subgradient_p1(prob, alpha0=tau)
    raise ValueError(f"unknown scheme '{scheme}'")


def study_space(
    kernel: KernelSpec,
    g: Callable,
    f: SourceTerm | None,
    p: float,
    n_list: Sequence[int],
    n_ref: int,
    T: float,
    tau: float,
    scheme: str = "backward",
    solve_tol: float = 1e-10,
    time_samples: int = 16,
    verify_time_error: bool = False,
) -> RateStudyResult:
    """Self-convergence in space: error against the same scheme at n_ref.

    Fits error against the mesh size delta = 1/n, so the expected slope is
    the smoothness exponent of the data.  With ``verify_time_error`` the
    reference is re-run at tau/2 to confirm the time error is subdominant.
    """
    f = f or ZeroSource()
    for n in n_list:
        if n_ref % n:
            raise NonNestedMeshes(f"{n} does not divide n_ref={n_ref}")

    def solve(n, tau_n):
        mesh = uniform_mesh(n)
        prob = Problem(project_kernel(kernel, mesh), p, project_function(g, mesh), f, T)
        return _run_scheme(scheme, prob, tau_n, solve_tol)

    ref = solve(n_ref, tau)
    errors = []
    for n in n_list:
        traj = solve(n, tau)
        errors.append(traj_error_c0l2(traj, ref, n_common=n_ref, time_samples=time_samples))
    result = fit_rate(list(zip([1.0 / n for n in n_list], errors)))
    result.extras["n_list"] = list(n_list)
    if verify_time_error:
        ref2 = solve(n_ref, tau / 2.0)
        drift = traj_error_c0l2(ref2, ref, n_common=n_ref, time_samples=time_samples)
        result.extras["reference_time_drift"] = drift
        if drift > 0.1 * min(errors):
            raise ValueError(f"reference time error {drift:.3e} not subdominant")
    return result


def study_time(
    kernel: KernelSpec,
    g: Callable,
    f: SourceTerm | None,
    p: float,
    n_fixed: int,
    tau_list: Sequence[float],
    T: float,
    scheme: str = "backward",
    solve_tol: float = 1e-10,
    ref_factor: int = 16,
    time_samples: int = 16,
    safety: float = 0.9,
) -> RateStudyResult:
    """Self-convergence in time at a fixed space resolution.

    The reference is the same scheme at the smallest tau divided by
    ``ref_factor``; the fit is error against tau.
    """
    f = f or ZeroSource()
    mesh = uniform_mesh(n_fixed)
    kd = project_kernel(kernel, mesh)
    g0 = project_function(g, mesh)

    def solve(tau):
        prob = Problem(kd, p, g0, f, T)
        return _run_scheme(scheme, prob, tau, solve_tol, safety=safety)

    ref = solve(min(tau_list) / ref_factor)
    errors = [
        traj_error_c0l2(solve(tau), ref, n_common=n_fixed, time_samples=time_samples)
        for tau in tau_list
    ]
    result = fit_rate(list(zip(tau_list, errors)))
    result.extras["n_fixed"] = n_fixed
    return result


def study_graph(
    kernel: KernelSpec,
    g: Callable,
    f: SourceTerm | None,
    p: float,
    n_list: Sequence[int],
    rho_of_n: Callable[[int], float],
    seeds: Sequence[int],
    T: float,
    tau: float,
    solve_tol: float = 1e-10,
    time_samples: int = 16,
    threads: int = 1,
) -> RateStudyResult:
    """Sampling error of graph realizations against the kernelized solution.

    Per n: one backward-Euler solve with the cell-averaged kernel, then one
    per seed with a sampled graph on the same mesh, same partition.  The
    per-n mean error over seeds is fitted against rho_n * n (the average
    degree scale).  Seeds fan out to a thread pool; aggregation order is
    fixed by seed index, so results do not depend on the worker count.
    """
    f = f or ZeroSource()
    n_steps_of = lambda: max(1, round(T / tau))
    params = []
    means = []
    maxima = []
    clouds = {}
    for n in n_list:
        rho = float(rho_of_n(n))
        mesh = uniform_mesh(n)
        kd = project_kernel(kernel, mesh)
        g0 = project_function(g, mesh)
        ref = backward_euler(Problem(kd, p, g0, f, T), n_steps_of(), solve_tol=solve_tol)
        weights = graphmod.truncate(kd, rho)

        def one_seed(seed):
            gs = graphmod.sample(weights, seed)
            traj = backward_euler(Problem(gs, p, g0, f, T), n_steps_of(), solve_tol=solve_tol)
            return traj_error_c0l2(traj, ref, n_common=n, time_samples=time_samples)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                errs = list(pool.map(one_seed, seeds))
        else:
            errs = [one_seed(s) for s in seeds]
        params.append(rho * n)
        means.append(float(np.mean(errs)))
        maxima.append(float(np.max(errs)))
        clouds[int(n)] = errs
    result = fit_rate(list(zip(params, means)))
    result.extras.update(
        {"n_list": list(n_list), "max_errors": maxima, "per_seed_errors": clouds}
    )
    return result
