"""Runnable property suites aggregating the module invariants.

Each check returns (name, passed, detail).  The CLI's verify-properties
command and the test suite both run these.
"""

from __future__ import annotations

import numpy as np

from . import graphs as graphmod
from .kernels import ConstantKernel, SeparableSmooth
from .meshes import GridFunction, norm_lq, project_function, uniform_mesh, project_kernel
from .operators import (
    check_continuity,
    check_monotonicity,
    coupling_from_kernel,
    resolvent,
)


def check_psi_inequalities(samples: int = 20000, seed: int = 0) -> tuple[str, bool, str]:
    rng = np.random.default_rng(seed)
    p = rng.uniform(1.1, 6.0, samples)
    x = rng.uniform(-10.0, 10.0, samples)
    y = rng.uniform(-10.0, 10.0, samples)
    worst = 0.0
    ok = True
    for pi, xi, yi in zip(p, x, y):
        lhs, rhs = check_monotonicity(pi, max(pi, 2.0), xi, yi)
        gap = float(rhs - lhs)
        if gap > 1e-9 * max(1.0, abs(lhs)):
            ok = False
        worst = max(worst, gap / max(1.0, abs(lhs)))
        lhs, rhs = check_continuity(pi, min(1.0, pi - 1.0), xi, yi)
        gap = float(lhs - rhs)
        if gap > 1e-9 * max(1.0, abs(rhs)):
            ok = False
        worst = max(worst, gap / max(1.0, abs(rhs)))
    return "psi sharp inequalities", ok, f"worst relative violation {worst:.3e}"


def check_projector_contraction(trials: int = 100, seed: int = 1) -> tuple[str, bool, str]:
    rng = np.random.default_rng(seed)
    worst = -np.inf
    ok = True
    for _ in range(trials):
        coeffs = rng.normal(size=rng.integers(1, 5))
        f = np.polynomial.Polynomial(coeffs)
        n = int(rng.choice([8, 64, 512]))
        mesh = uniform_mesh(n)
        proj = project_function(f, mesh)
        fine = uniform_mesh(16 * n)
        fp = project_function(f, fine)
        for q in (1, 2, np.inf):
            lhs = norm_lq(proj, q)
            rhs = norm_lq(fp, q) if q != np.inf else float(np.abs(f.linspace(4096)[1]).max())
            if lhs > rhs + 1e-9:
                ok = False
            worst = max(worst, lhs - rhs)
    return "projector contraction", ok, f"worst excess {worst:.3e}"


def check_resolvent_nonexpansive(pairs: int = 20, seed: int = 2) -> tuple[str, bool, str]:
    rng = np.random.default_rng(seed)
    mesh = uniform_mesh(64)
    coup = coupling_from_kernel(project_kernel(SeparableSmooth(), mesh))
    tol = 1e-10
    worst = -np.inf
    ok = True
    for p in (1.5, 2.0, 3.0):
        for lam in (0.01, 0.1, 1.0):
            for _ in range(pairs):
                b1 = GridFunction(mesh, rng.normal(size=64))
                b2 = GridFunction(mesh, rng.normal(size=64))
                u1 = resolvent(coup, p, lam, b1, tol=tol)
                u2 = resolvent(coup, p, lam, b2, tol=tol)
                for q in (1, 2, np.inf):
                    lhs = norm_lq(GridFunction(mesh, u1.values - u2.values), q)
                    rhs = norm_lq(GridFunction(mesh, b1.values - b2.values), q)
                    if lhs > rhs + 10 * tol:
                        ok = False
                    worst = max(worst, lhs - rhs)
    return "resolvent nonexpansiveness", ok, f"worst excess {worst:.3e}"


def check_mass_conservation(seed: int = 3) -> tuple[str, bool, str]:
    from .evolve import Problem, ZeroSource, backward_euler, forward_euler, subgradient_p1

    rng = np.random.default_rng(seed)
    mesh = uniform_mesh(32)
    kd = project_kernel(SeparableSmooth(), mesh)
    h = mesh.widths
    g = GridFunction(mesh, rng.normal(size=32))
    mass0 = float(h @ g.values)
    worst = 0.0
    ok = True
    tr = forward_euler(Problem(kd, 1.5, g, ZeroSource(), 0.2), tau_max=1e-2)
    drift = max(abs(float(h @ s) - mass0) for s in tr.states)
    worst = max(worst, drift)
    ok &= drift <= 1e-12 * max(1.0, abs(mass0))
    tr = subgradient_p1(Problem(kd, 1.0, g, ZeroSource(), 0.2), alpha0=0.05)
    drift = max(abs(float(h @ s) - mass0) for s in tr.states)
    worst = max(worst, drift)
    ok &= drift <= 1e-12 * max(1.0, abs(mass0))
    tol = 1e-10
    tr = backward_euler(Problem(kd, 3.0, g, ZeroSource(), 0.2), 20, solve_tol=tol)
    drift = max(abs(float(h @ s) - mass0) for s in tr.states)
    worst = max(worst, drift)
    ok &= drift <= 10 * tol * len(tr.steps)
    return "mass conservation", bool(ok), f"worst drift {worst:.3e}"


def check_graph_calibration(n_seeds: int = 10000) -> tuple[str, bool, str]:
    """Empirical edge frequency vs rho * K_ij over many seeds, a few pairs."""
    mesh = uniform_mesh(4)
    kd = project_kernel(ConstantKernel(0.8), mesh)
    rho = 0.5
    w = graphmod.truncate(kd, rho)
    prob = rho * 0.8
    hits = {(0, 1): 0, (1, 3): 0, (0, 3): 0}
    for seed in range(n_seeds):
        g = graphmod.sample(w, seed)
        edges = set(zip(g.rows.tolist(), g.cols.tolist()))
        for pair in hits:
            if pair in edges:
                hits[pair] += 1
    se = np.sqrt(prob * (1 - prob) / n_seeds)
    worst = max(abs(c / n_seeds - prob) for c in hits.values())
    ok = worst <= 4 * se
    return "graph edge calibration", bool(ok), f"worst deviation {worst:.4f} (4se={4 * se:.4f})"


ALL_CHECKS = [
    check_psi_inequalities,
    check_projector_contraction,
    check_resolvent_nonexpansive,
    check_mass_conservation,
    check_graph_calibration,
]


def run_all() -> list[tuple[str, bool, str]]:
    return [check() for check in ALL_CHECKS]
