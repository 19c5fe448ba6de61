"""The scalar nonlinearity, discrete p-Laplacian/1-Laplacian, energy, and resolvent.

Operators act on a ``Coupling``: a symmetric nonnegative weight matrix
(dense ndarray or scipy CSR) together with the mesh carrying the cell
weights.  A cell-averaged kernel and a weighted graph adjacency are both
couplings, so every scheme downstream runs unchanged on either.

Row sums are computed by sequential left-to-right reduction (reduceat /
bincount), which makes dense and sparse applications of identical weights
agree bit-for-bit and keeps results independent of thread count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .meshes import DiscreteKernel, GridFunction, Mesh, MeshMismatch


class InvalidP(Exception):
    """Exponent p outside the admissible range of the operation."""


class NoConvergence(Exception):
    """Iterative solve hit the iteration cap before meeting its tolerance."""

    def __init__(self, iters: int, residual: float):
        self.iters = iters
        self.residual = residual
        super().__init__(f"no convergence after {iters} iterations (residual {residual:.3e})")


@dataclass(frozen=True)
class Coupling:
    """Symmetric nonnegative interaction weights over a mesh."""

    mesh: Mesh
    matrix: object  # (n, n) ndarray or scipy.sparse matrix

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrix)

    def linf1(self) -> float:
        """max_i sum_j h_j W_ij, the L^{inf,1} norm of the injected weights."""
        h = self.mesh.widths
        if self.is_sparse:
            rowsums = np.asarray(self.matrix @ h).ravel()
        else:
            rowsums = self.matrix @ h
        return float(rowsums.max()) if len(rowsums) else 0.0


def coupling_from_kernel(kd: DiscreteKernel) -> Coupling:
    return Coupling(kd.mesh, kd.matrix)


def psi(p: float, x):
    """sign(x) |x|^(p-1), with sign(0) = 0."""
    x = np.asarray(x, dtype=float)
    if p == 2.0:
        return x.copy()
    return np.sign(x) * np.abs(x) ** (p - 1.0)


_row_index_cache: dict[int, np.ndarray] = {}


def _row_sums_dense(terms: np.ndarray) -> np.ndarray:
    # bincount sums strictly sequentially, exactly like the CSR path;
    # reduceat would use pairwise summation and round differently
    n = terms.shape[0]
    if n not in _row_index_cache:
        _row_index_cache[n] = np.repeat(np.arange(n), n)
    return np.bincount(_row_index_cache[n], weights=terms.ravel(), minlength=n)


def plap_apply(coup: Coupling, p: float, u: GridFunction) -> GridFunction:
    """Discrete p-Laplacian: (Lu)_i = -sum_j h_j W_ij psi(u_j - u_i)."""
    if u.mesh is not coup.mesh and not np.array_equal(u.mesh.boundaries, coup.mesh.boundaries):
        raise MeshMismatch("state and coupling live on different meshes")
    if p <= 1.0:
        raise InvalidP("plap_apply requires p > 1; use one_lap_select for p = 1")
    v = u.values
    h = coup.mesh.widths
    if coup.is_sparse:
        W = coup.matrix.tocsr()
        rows = W.indptr
        cols = W.indices
        ri = np.repeat(np.arange(W.shape[0]), np.diff(rows))
        # same multiplication order as the dense path (W * psi * h) so
        # both layouts round identically term by term
        terms = W.data * psi(p, v[cols] - v[ri]) * h[cols]
        out = -np.bincount(ri, weights=terms, minlength=W.shape[0])
    else:
        d = v[None, :] - v[:, None]
        terms = coup.matrix * psi(p, d) * h[None, :]
        out = -_row_sums_dense(terms)
    return GridFunction(u.mesh, out)


def one_lap_select(coup: Coupling, u: GridFunction):
    """1-Laplacian subgradient selection w_ij = sign(u_j - u_i).

    Returns (eta, w) with eta_i = -sum_j h_j W_ij w_ij.  The dense path
    materializes w; the sparse path returns the edge-wise sign data in CSR
    layout.
    """
    if u.mesh is not coup.mesh and not np.array_equal(u.mesh.boundaries, coup.mesh.boundaries):
        raise MeshMismatch("state and coupling live on different meshes")
    v = u.values
    h = coup.mesh.widths
    if coup.is_sparse:
        W = coup.matrix.tocsr()
        ri = np.repeat(np.arange(W.shape[0]), np.diff(W.indptr))
        w = np.sign(v[W.indices] - v[ri])
        terms = W.data * w * h[W.indices]
        eta = -np.bincount(ri, weights=terms, minlength=W.shape[0])
        return GridFunction(u.mesh, eta), w
    d = v[None, :] - v[:, None]
    w = np.sign(d)
    eta = -_row_sums_dense(coup.matrix * w * h[None, :])
    return GridFunction(u.mesh, eta), w


def energy(coup: Coupling, p: float, u: GridFunction) -> float:
    """Convex potential E(u) = (1/(2p)) sum_ij h_i h_j W_ij |u_j - u_i|^p.

    For p = 1 the prefactor is 1/2.  The h-weighted gradient of E is the
    discrete p-Laplacian.
    """
    v = u.values
    h = coup.mesh.widths
    factor = 0.5 if p == 1.0 else 0.5 / p
    if coup.is_sparse:
        W = coup.matrix.tocoo()
        d = np.abs(v[W.col] - v[W.row])
        return factor * float(np.sum(h[W.row] * h[W.col] * W.data * d**p))
    d = np.abs(v[None, :] - v[:, None])
    return factor * float(h @ (coup.matrix * d**p) @ h)


def linear_operator_matrix(coup: Coupling):
    """Matrix of the linear (p=2) operator: L = diag(W h) - W diag(h)."""
    h = coup.mesh.widths
    if coup.is_sparse:
        W = coup.matrix.tocsr()
        rowsum = np.asarray(W @ h).ravel()
        return sp.diags(rowsum) - W @ sp.diags(h)
    rowsum = coup.matrix @ h
    return np.diag(rowsum) - coup.matrix * h[None, :]


def h_norm2(h: np.ndarray, r: np.ndarray) -> float:
    """Mesh-weighted l2 norm (the discrete L2 norm of the injection)."""
    return float(np.sqrt(h @ r**2))


def resolvent(
    coup: Coupling,
    p: float,
    lam: float,
    b: GridFunction,
    tol: float | None = None,
    max_iters: int = 500,
) -> GridFunction:
    """Solve u + lam * L_p u = b (one backward-Euler / proximal step).

    Minimizes the strongly convex F(u) = 0.5 ||u - b||_h^2 + lam E(u):
    direct linear solve for p = 2, damped Newton with Armijo line search
    for p > 2, and clamped-curvature Newton alternated with Barzilai-
    Borwein descent for p in (1, 2) where the Hessian is unbounded.
    Always verifies the residual contract before returning.

    For p < 2 with very large lam the minimizer clusters state values:
    differences shrink toward machine epsilon and psi floors the
    attainable residual near lam * ||K|| * eps^(p-1); tolerances below
    that are unreachable in double precision.
    """
    u, _, _ = resolvent_with_info(coup, p, lam, b, tol, max_iters)
    return u


def resolvent_with_info(
    coup: Coupling,
    p: float,
    lam: float,
    b: GridFunction,
    tol: float | None = None,
    max_iters: int = 500,
    warm_start: np.ndarray | None = None,
):
    """resolvent plus (iterations, final residual) for scheme metadata."""
    if p <= 1.0:
        raise InvalidP("resolvent requires p > 1")
    if lam <= 0:
        raise ValueError("lam must be positive")
    h = coup.mesh.widths
    bv = b.values
    if tol is None:
        tol = 1e-10 * max(1.0, h_norm2(h, bv))

    if p == 2.0:
        L = linear_operator_matrix(coup)
        n = len(bv)
        if coup.is_sparse:
            A = sp.eye(n, format="csr") + lam * L
            u = spla.spsolve(A.tocsc(), bv)
        else:
            u = np.linalg.solve(np.eye(n) + lam * L, bv)
        res = h_norm2(h, u + lam * plap_apply(coup, p, GridFunction(b.mesh, u)).values - bv)
        if res > tol:
            raise NoConvergence(1, res)
        return GridFunction(b.mesh, u), 1, res

    def grad(u):
        # gradient of F in the h-weighted inner product
        return u - bv + lam * plap_apply(coup, p, GridFunction(b.mesh, u)).values

    def fval(u):
        return 0.5 * float(h @ (u - bv) ** 2) + lam * energy(coup, p, GridFunction(b.mesh, u))

    u = bv.copy() if warm_start is None else warm_start.copy()
    g = grad(u)
    res = h_norm2(h, g)
    step = 1.0
    u_prev = g_prev = None
    res_hist = [res]
    for it in range(max_iters):
        if res <= tol:
            return GridFunction(b.mesh, u), it, res
        stagnant = len(res_hist) >= 5 and res > 0.5 * res_hist[-5]
        if p > 2.0:
            d = -_newton_direction(coup, p, lam, u, g)
            t = 1.0
        elif u_prev is not None and stagnant:
            # Clamped-curvature Newton rescue: the true edge weights
            # (p-1)|u_j-u_i|^(p-2) are unbounded for p < 2, so small
            # differences are floored.  The matrix stays SPD, hence this
            # is a descent direction even where the clamp is active.
            # Only used when plain descent stops making progress, since
            # one factorization costs O(n^3).
            d = -_newton_direction(coup, p, lam, u, g)
            t = 1.0
        else:
            # Barzilai-Borwein steepest descent: the gradient is only
            # Hoelder continuous, so secant curvature estimates beat any
            # fixed step.
            d = -g
            if u_prev is not None:
                du = u - u_prev
                dg = g - g_prev
                denom = float(h @ (du * dg))
                t = float(h @ du**2) / denom if denom > 0 else step
            else:
                t = step
            t = min(max(t, 1e-12), 1e6)
        f0 = fval(u)
        slope = float(h @ (g * d))
        if slope >= 0:  # safeguard: fall back to steepest descent
            d = -g
            slope = -float(h @ g**2)
        # The 1e-14 |f0| allowance keeps the line search meaningful when the
        # attainable decrease (about res^2) sinks below roundoff in f0.
        fuzz = 1e-14 * abs(f0)
        for _ in range(60):
            un = u + t * d
            if fval(un) <= f0 + 1e-4 * t * slope + fuzz:
                break
            t *= 0.5
        else:
            raise NoConvergence(it + 1, res)
        u_prev, g_prev = u, g
        u = un
        if p <= 2.0:
            step = t
        g = grad(u)
        res = h_norm2(h, g)
        res_hist.append(res)
    if res <= tol:
        return GridFunction(b.mesh, u), max_iters, res
    raise NoConvergence(max_iters, res)


def _newton_direction(coup: Coupling, p: float, lam: float, u: np.ndarray, g: np.ndarray):
    """Newton step for F at u: solve (I + lam Hess_h E) d = g.

    Hess_h E has graph-Laplacian structure with edge weights
    (p-1) |u_j - u_i|^(p-2) W_ij.  For p < 2 those weights diverge as the
    differences vanish, so |u_j - u_i| is floored at a small multiple of
    the solution scale; the clamped matrix is still SPD, which keeps the
    resulting direction a descent direction.
    """
    h = coup.mesh.widths
    floor = 1e-9 * max(1.0, float(np.abs(u).max())) if p < 2.0 else 0.0
    if coup.is_sparse:
        W = coup.matrix.tocsr()
        ri = np.repeat(np.arange(W.shape[0]), np.diff(W.indptr))
        diffs = np.maximum(np.abs(u[W.indices] - u[ri]), floor)
        phi = (p - 1.0) * diffs ** (p - 2.0)
        Wp = sp.csr_matrix((W.data * phi, W.indices, W.indptr), shape=W.shape)
        rowsum = np.asarray(Wp @ h).ravel()
        A = sp.eye(W.shape[0], format="csr") + lam * (sp.diags(rowsum) - Wp @ sp.diags(h))
        return spla.spsolve(A.tocsc(), g)
    d = np.maximum(np.abs(u[None, :] - u[:, None]), floor)
    phi = (p - 1.0) * d ** (p - 2.0) if p != 2.0 else np.ones_like(d)
    Wp = coup.matrix * phi
    rowsum = Wp @ h
    A = np.eye(len(u)) + lam * (np.diag(rowsum) - Wp * h[None, :])
    return np.linalg.solve(A, g)


def monotonicity_constant(p: float) -> float:
    """Sharp constant in the generalized monotonicity inequality for psi."""
    return 2.0 ** (2.0 - p) * min(1.0, p - 1.0)


def continuity_constant(p: float) -> float:
    """Sharp constant in the generalized Hoelder continuity inequality for psi."""
    return max(2.0 ** (2.0 - p), (p - 1.0) * 2.0 ** (2.0 - p), 1.0)


def cfl_constant(p: float, k_inf1: float) -> float:
    """Step-size constant of the explicit scheme for p in (1, 2].

    C = 2^((p-2)/(2(p-1))) * (sqrt(C2) k)^(1/(1-p)) * (1 - 1/p), where C2
    is the sharp continuity constant.  The step rule is
    tau <= 2 C * residual^((2-p)/(p-1)).
    """
    if not 1.0 < p <= 2.0:
        raise InvalidP(f"cfl_constant requires p in (1, 2], got {p}")
    if k_inf1 <= 0:
        raise ValueError("k_inf1 must be positive")
    c2 = continuity_constant(p)
    return float(
        2.0 ** ((p - 2.0) / (2.0 * (p - 1.0)))
        * (np.sqrt(c2) * k_inf1) ** (1.0 / (1.0 - p))
        * (1.0 - 1.0 / p)
    )


def check_monotonicity(p: float, beta_exp: float, x, y):
    """Evaluate both sides of the sharp monotonicity inequality.

    lhs = (psi(y) - psi(x))(y - x),
    rhs = C1 |y - x|^beta (|x| + |y|)^(p - beta);  contract: lhs >= rhs.
    """
    if p <= 1.0:
        raise InvalidP("p must exceed 1")
    if beta_exp < max(p, 2.0):
        raise ValueError("beta_exp must be >= max(p, 2)")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lhs = (psi(p, y) - psi(p, x)) * (y - x)
    gap = np.abs(y - x)
    base = np.abs(x) + np.abs(y)
    with np.errstate(divide="ignore", invalid="ignore"):
        rhs = monotonicity_constant(p) * gap**beta_exp * base ** (p - beta_exp)
    rhs = np.where(gap == 0.0, 0.0, rhs)
    return lhs, rhs


def check_continuity(p: float, alpha_exp: float, x, y):
    """Evaluate both sides of the sharp continuity inequality.

    lhs = |psi(y) - psi(x)|,
    rhs = C2 |y - x|^alpha (|x| + |y|)^(p - 1 - alpha);  contract: lhs <= rhs.
    """
    if p <= 1.0:
        raise InvalidP("p must exceed 1")
    if not 0.0 <= alpha_exp <= min(1.0, p - 1.0):
        raise ValueError("alpha_exp must lie in [0, min(1, p-1)]")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lhs = np.abs(psi(p, y) - psi(p, x))
    gap = np.abs(y - x)
    base = np.abs(x) + np.abs(y)
    # Exponents p-1-alpha and alpha are nonnegative, so no singular cases arise.
    rhs = continuity_constant(p) * gap**alpha_exp * base ** (p - 1.0 - alpha_exp)
    return lhs, rhs
