"""Sparse random graphs sampled from a cell-averaged kernel.

Each unordered pair {i, j}, i < j, is joined independently with
probability rho * min(K_ij, 1/rho).  A present edge carries weight 1/rho,
so the weighted adjacency plays the role of the kernel matrix in the
evolution schemes.

Randomness is counter-based: row i of the pair uniforms comes from a
Philox stream keyed by the seed with counter block i.  Sampling is
therefore deterministic and independent of how rows are distributed over
workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .meshes import DiscreteKernel, Mesh, uniform_mesh
from .operators import Coupling


@dataclass(frozen=True)
class TruncatedWeights:
    """Edge-probability weights min(K_ij, 1/rho)."""

    mesh: Mesh
    rho: float
    matrix: np.ndarray

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")


def truncate(kd: DiscreteKernel, rho: float) -> TruncatedWeights:
    """Cap kernel entries at 1/rho so that rho * weight is a probability."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    return TruncatedWeights(kd.mesh, rho, np.minimum(kd.matrix, 1.0 / rho))


@dataclass(frozen=True)
class GraphSample:
    """Seeded sparse graph on n vertices; implied weight 1/rho per edge."""

    n: int
    rho: float
    seed: int
    rows: np.ndarray  # i of each edge, i < j
    cols: np.ndarray  # j of each edge
    mesh: Mesh = field(default=None)

    def __post_init__(self):
        if self.mesh is None:
            object.__setattr__(self, "mesh", uniform_mesh(self.n))

    @property
    def edge_count(self) -> int:
        return len(self.rows)

    def adjacency(self) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency (no self-loops)."""
        i = np.concatenate([self.rows, self.cols])
        j = np.concatenate([self.cols, self.rows])
        data = np.ones(len(i))
        return sp.csr_matrix((data, (i, j)), shape=(self.n, self.n))

    def coupling(self) -> Coupling:
        """Weighted adjacency (1/rho per edge) as an evolution coupling."""
        return Coupling(self.mesh, self.adjacency() * (1.0 / self.rho))

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        np.add.at(deg, self.rows, 1)
        np.add.at(deg, self.cols, 1)
        return deg


def _row_uniforms(seed: int, i: int, n: int) -> np.ndarray:
    bg = np.random.Philox(key=seed, counter=[0, 0, 0, i])
    return np.random.Generator(bg).random(n)


def sample(weights: TruncatedWeights, seed: int) -> GraphSample:
    """Draw one graph: pair {i, j} present iff the (seed, i) stream's j-th
    uniform falls below rho * weight_ij.  Only the strict upper triangle is
    sampled; the graph is symmetric by construction."""
    n = weights.mesh.n
    prob = weights.rho * weights.matrix
    rows = []
    cols = []
    for i in range(n - 1):
        u = _row_uniforms(seed, i, n)
        hit = np.nonzero(u[i + 1 :] < prob[i, i + 1 :])[0] + i + 1
        if len(hit):
            rows.append(np.full(len(hit), i, dtype=np.int64))
            cols.append(hit.astype(np.int64))
    if rows:
        r = np.concatenate(rows)
        c = np.concatenate(cols)
    else:
        r = np.empty(0, dtype=np.int64)
        c = np.empty(0, dtype=np.int64)
    return GraphSample(n=n, rho=weights.rho, seed=int(seed), rows=r, cols=c, mesh=weights.mesh)


def stats(g: GraphSample) -> dict:
    deg = g.degrees()
    return {
        "n": g.n,
        "rho": g.rho,
        "seed": g.seed,
        "edge_count": g.edge_count,
        "degrees": deg,
        "mean_degree": float(deg.mean()) if g.n else 0.0,
        "max_degree": int(deg.max()) if g.n else 0,
    }


def linf1_norm(g: GraphSample) -> float:
    """L^{inf,1} norm of the injected weighted adjacency: max_i deg(i)/(rho n)."""
    deg = g.degrees()
    return float(deg.max() / (g.rho * g.n)) if g.n else 0.0


def write_edge_list(g: GraphSample, path) -> None:
    """Text format: header "n rho seed", then one "i j" per line, 1-based."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{g.n} {g.rho!r} {g.seed}\n")
        for i, j in zip(g.rows, g.cols):
            fh.write(f"{i + 1} {j + 1}\n")


def read_edge_list(path) -> GraphSample:
    with open(path, encoding="utf-8") as fh:
        head = fh.readline().split()
        n, rho, seed = int(head[0]), float(head[1]), int(head[2])
        pairs = [line.split() for line in fh if line.strip()]
    r = np.array([int(p[0]) - 1 for p in pairs], dtype=np.int64)
    c = np.array([int(p[1]) - 1 for p in pairs], dtype=np.int64)
    return GraphSample(n=n, rho=rho, seed=seed, rows=r, cols=c)


def write_stats_json(g: GraphSample, path) -> None:
    s = stats(g)
    s["degrees"] = s["degrees"].tolist()
    s["linf1_norm"] = linf1_norm(g)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(s, fh, indent=2, sort_keys=True)
        fh.write("\n")
