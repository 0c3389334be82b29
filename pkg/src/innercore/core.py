"""Depth-based core discovery (InnerCore, AlphaCore) and the graph k-core.

Both depth peelers estimate the inverse covariance once, from the feature
matrix of the full snapshot, and keep it fixed while node properties are
recomputed on the shrinking induced subgraph.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .depth import RIDGE_SCHEDULE, InverseCovariance, depth_vector, inverse_covariance
from .errors import InputError
from .graph import AddressBook, FeatureKernel, SnapshotGraph


@dataclass(frozen=True, eq=False)
class InnerCoreResult:
    members: np.ndarray
    iterations: int
    per_iteration: list[tuple[int, float | None]]
    epsilon: float
    elapsed: float
    ridge_used: float = 0.0
    depths: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self) -> int:
        return len(self.members)

    def member_set(self) -> set[int]:
        return set(self.members.tolist())

    def as_dict(self, book: AddressBook | None = None) -> dict:
        ids = self.members.tolist()
        return {
            "members": [book.raw(i) for i in ids] if book is not None else ids,
            "iterations": self.iterations,
            "trace": [{"removed": r, "max_depth": d} for r, d in self.per_iteration],
            "epsilon": self.epsilon,
            "ridge_used": self.ridge_used,
            "elapsed_s": self.elapsed,
        }

    def to_json(self, book: AddressBook | None = None) -> str:
        return json.dumps(self.as_dict(book), indent=2)


def _check_epsilon(eps: float) -> float:
    eps = float(eps)
    if not 0.0 < eps <= 1.0:
        raise InputError(f"epsilon must lie in (0, 1], got {eps}")
    return eps


class _Peeler:
    """Shared state for batch depth peeling on one snapshot."""

    def __init__(self, g, props, reestimate_cov, ridge_schedule):
        self.kernel = FeatureKernel(g, props)
        self.n = g.num_nodes
        self.reestimate = reestimate_cov
        self.ridge_schedule = ridge_schedule
        self.alive = np.ones(self.n, dtype=bool)
        F = self.kernel.compute()
        self.inv: InverseCovariance = inverse_covariance(F, ridge_schedule)
        self.z = depth_vector(F, self.inv)
        self.iterations = 0

    @property
    def size(self) -> int:
        return int(self.alive.sum())

    def peel(self, eps: float) -> list[tuple[int, float]]:
        """Remove batches with depth >= eps until none qualifies."""
        trace = []
        while self.size > 1:
            hit = self.alive & (self.z >= eps)
            removed = int(hit.sum())
            if removed == 0:
                break
            self.alive &= ~hit
            self._refresh()
            self.iterations += 1
            trace.append((removed, self.max_depth()))
        return trace

    def _refresh(self):
        F = self.kernel.compute(self.alive)
        if self.reestimate and self.size >= 2:
            self.inv = inverse_covariance(F[self.alive], self.ridge_schedule)
        z = np.ones(self.n)
        z[self.alive] = depth_vector(F[self.alive], self.inv)
        self.z = z

    def max_depth(self) -> float | None:
        return float(self.z[self.alive].max()) if self.alive.any() else None


def inner_core(
    g: SnapshotGraph,
    props: Sequence[str] | None = None,
    epsilon: float = 0.1,
    *,
    reestimate_cov: bool = False,
    ridge_schedule=RIDGE_SCHEDULE,
) -> InnerCoreResult:
    """Peel every node with depth >= epsilon, batch by batch, until none is left.

    A run that finds nothing to remove still counts as one iteration.  Once a
    single node remains it is kept (its covariance is undefined).
    """
    eps = _check_epsilon(epsilon)
    t0 = time.perf_counter()
    if g.num_nodes <= 1:
        return InnerCoreResult(g.nodes.copy(), 1, [(0, 1.0 if g.num_nodes else None)],
                               eps, time.perf_counter() - t0, 0.0, np.ones(g.num_nodes))
    p = _Peeler(g, props, reestimate_cov, ridge_schedule)
    trace = p.peel(eps)
    if not trace:
        trace = [(0, p.max_depth())]
    members = g.nodes[p.alive]
    return InnerCoreResult(members, max(p.iterations, 1), trace, eps,
                           time.perf_counter() - t0, p.inv.ridge_used, p.z[p.alive])


@dataclass(frozen=True, eq=False)
class AlphaDecomposition:
    node_ids: np.ndarray
    alpha: np.ndarray
    step: float
    start_epsilon: float
    levels: list[float]
    level_sizes: list[int]
    iterations: int
    elapsed: float

    def core(self, a: float) -> np.ndarray:
        """Node ids with core value at least ``a``."""
        return self.node_ids[self.alpha >= a - 1e-9]

    def innermost(self) -> np.ndarray:
        return self.core(1.0 - self.levels[-1])

    def as_dict(self, book: AddressBook | None = None) -> dict:
        ids = self.node_ids.tolist()
        keys = [book.raw(i) for i in ids] if book is not None else ids
        return {
            "start_epsilon": self.start_epsilon,
            "step": self.step,
            "levels": self.levels,
            "level_sizes": self.level_sizes,
            "iterations": self.iterations,
            "elapsed_s": self.elapsed,
            "alpha": dict(zip(map(str, keys), self.alpha.tolist())),
        }


def _levels(start: float, step: float) -> list[float]:
    out = []
    k = 0
    while True:
        eps = round(start - k * step, 12)
        if eps <= 1e-12:
            break
        out.append(eps)
        k += 1
    return out


def alpha_core(
    g: SnapshotGraph,
    props: Sequence[str] | None = None,
    start_epsilon: float = 1.0,
    step: float = 0.1,
    *,
    reestimate_cov: bool = False,
    ridge_schedule=RIDGE_SCHEDULE,
) -> AlphaDecomposition:
    """Stepwise decomposition over epsilon = start, start - step, ... > 0.

    A node's core value is ``1 - eps`` for the lowest level it survived;
    nodes removed at the first level get 0.
    """
    start = _check_epsilon(start_epsilon)
    step = float(step)
    if not 0.0 < step <= start:
        raise InputError(f"need 0 < step <= start_epsilon, got step={step}, start={start}")
    t0 = time.perf_counter()
    levels = _levels(start, step)
    alpha = np.zeros(g.num_nodes)
    sizes = []
    if g.num_nodes <= 1:
        alpha[:] = 1.0 - levels[-1]
        return AlphaDecomposition(g.nodes.copy(), alpha, step, start, levels,
                                  [g.num_nodes] * len(levels), 0, time.perf_counter() - t0)
    p = _Peeler(g, props, reestimate_cov, ridge_schedule)
    for eps in levels:
        p.peel(eps)
        alpha[p.alive] = 1.0 - eps
        sizes.append(p.size)
        if p.size == 0:
            break
    sizes += [0] * (len(levels) - len(sizes))
    return AlphaDecomposition(g.nodes.copy(), alpha, step, start, levels, sizes,
                              p.iterations, time.perf_counter() - t0)


@dataclass(frozen=True, eq=False)
class KCoreResult:
    node_ids: np.ndarray
    coreness: np.ndarray

    @property
    def max_core(self) -> int:
        return int(self.coreness.max()) if len(self.coreness) else 0

    def core(self, k: int) -> np.ndarray:
        return self.node_ids[self.coreness >= k]

    def as_dict(self, book: AddressBook | None = None) -> dict:
        ids = self.node_ids.tolist()
        keys = [book.raw(i) for i in ids] if book is not None else ids
        return {"max_core": self.max_core,
                "coreness": dict(zip(map(str, keys), self.coreness.tolist()))}


def k_core(g: SnapshotGraph, count_parallel: bool = True) -> KCoreResult:
    """Coreness on the undirected view (Batagelj-Zaversnik bucket peeling).

    Self-loops are ignored.  With ``count_parallel`` every parallel edge adds
    to the degree; otherwise only distinct neighbors count.
    """
    n = g.num_nodes
    a, b = g.local_src, g.local_dst
    keep = a != b
    a, b = a[keep], b[keep]
    if not count_parallel:
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        codes = np.unique(lo * max(n, 1) + hi)
        a, b = codes // max(n, 1), codes % max(n, 1)
    ends = np.concatenate([a, b])
    other = np.concatenate([b, a])
    order = np.argsort(ends, kind="stable")
    nbrs = other[order].tolist()
    deg_arr = np.bincount(ends, minlength=n)
    offsets = np.concatenate([[0], np.cumsum(deg_arr)]).tolist()
    deg = deg_arr.tolist()

    md = max(deg) if deg else 0
    bins = [0] * (md + 1)
    for d in deg:
        bins[d] += 1
    start = 0
    for d in range(md + 1):
        bins[d], start = start, start + bins[d]
    pos = [0] * n
    vert = [0] * n
    for v in range(n):
        pos[v] = bins[deg[v]]
        vert[pos[v]] = v
        bins[deg[v]] += 1
    for d in range(md, 0, -1):
        bins[d] = bins[d - 1]
    if md >= 0 and bins:
        bins[0] = 0
    for i in range(n):
        v = vert[i]
        dv = deg[v]
        for j in range(offsets[v], offsets[v + 1]):
            u = nbrs[j]
            du = deg[u]
            if du > dv:
                pu = pos[u]
                pw = bins[du]
                w = vert[pw]
                if u != w:
                    pos[u], pos[w] = pw, pu
                    vert[pu], vert[pw] = w, u
                bins[du] += 1
                deg[u] = du - 1
    return KCoreResult(g.nodes.copy(), np.asarray(deg, dtype=np.int64))
