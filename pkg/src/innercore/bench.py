"""Synthetic transaction graphs and a timing harness for the core algorithms."""

from __future__ import annotations

import csv
import io
import json
import statistics
import time
from dataclasses import asdict, dataclass
from datetime import date

import numpy as np

from .core import alpha_core, inner_core, k_core
from .errors import InputError
from .graph import SnapshotGraph

ALGORITHMS = ("innercore", "alphacore", "kcore")


@dataclass(frozen=True)
class SyntheticSpec:
    """Directed preferential-attachment multigraph with log-normal weights.

    Node ``t`` arrives after nodes ``0..t-1`` and attaches its share of the
    ``m`` edges to earlier nodes with probability proportional to
    ``(degree + 1) ** exponent``; each edge points old->new or new->old with
    equal odds.
    """

    n: int = 1000
    m: int = 5000
    exponent: float = 1.0
    weight_mu: float = 0.0
    weight_sigma: float = 2.0
    seed: int = 0
    day: date = date(2022, 5, 8)


def generate(spec: SyntheticSpec) -> SnapshotGraph:
    n, m = int(spec.n), int(spec.m)
    if n < 2 or m < 1:
        raise InputError(f"need n >= 2 and m >= 1, got n={n}, m={m}")
    if spec.weight_sigma < 0:
        raise InputError("weight_sigma must be non-negative")
    rng = np.random.default_rng(spec.seed)
    arrivals = n - 1
    per = np.full(arrivals, m // arrivals, dtype=np.int64)
    per[: m % arrivals] += 1

    deg = np.zeros(n, dtype=np.float64)
    new_nodes, old_nodes = [], []
    s = 1
    while s < n:
        e = min(n, s + max(1, s // 8))
        # sampling probabilities frozen per batch; targets come from nodes < s
        k = per[s - 1:e - 1]
        total = int(k.sum())
        if total:
            p = (deg[:s] + 1.0) ** spec.exponent
            p /= p.sum()
            targets = rng.choice(s, size=total, p=p)
            sources = np.repeat(np.arange(s, e), k)
            new_nodes.append(sources)
            old_nodes.append(targets)
            np.add.at(deg, targets, 1)
            np.add.at(deg, sources, 1)
        s = e
    new = np.concatenate(new_nodes)
    old = np.concatenate(old_nodes)
    flip = rng.random(m) < 0.5
    src = np.where(flip, new, old)
    dst = np.where(flip, old, new)
    w = rng.lognormal(spec.weight_mu, spec.weight_sigma, m)
    return SnapshotGraph.from_edges(spec.day, src, dst, w, nodes=np.arange(n))


@dataclass
class Timing:
    algorithm: str
    samples: list[float]
    extra: dict

    @property
    def summary(self) -> dict:
        return {"mean": statistics.fmean(self.samples), "min": min(self.samples),
                "max": max(self.samples), "n": len(self.samples)}


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return time.perf_counter() - t0, out


def run_bench(algos=ALGORITHMS, spec: SyntheticSpec | None = None, epsilon: float = 0.1,
              repetitions: int = 3, step: float = 0.1, props=None, graph: SnapshotGraph | None = None) -> dict:
    """Wall-clock each algorithm ``repetitions`` times on one generated graph.

    Generation happens before any clock starts.  When both depth algorithms
    run, the InnerCore member set is compared with the innermost AlphaCore
    level and the outcome is recorded, not asserted.
    """
    spec = spec or SyntheticSpec()
    algos = [a.lower() for a in algos]
    bad = [a for a in algos if a not in ALGORITHMS]
    if bad:
        raise InputError(f"unknown algorithm(s) {bad}; choose from {ALGORITHMS}")
    if repetitions < 1:
        raise InputError("repetitions must be >= 1")
    g = graph if graph is not None else generate(spec)
    runs = {
        "innercore": lambda: inner_core(g, props, epsilon),
        "alphacore": lambda: alpha_core(g, props, 1.0, step),
        "kcore": lambda: k_core(g),
    }
    timings, last = {}, {}
    for algo in algos:
        samples = []
        for _ in range(repetitions):
            dt, out = _timed(runs[algo])
            samples.append(dt)
        last[algo] = out
        extra = {}
        if algo == "innercore":
            extra = {"members": len(out), "iterations": out.iterations}
        elif algo == "alphacore":
            extra = {"innermost": len(out.innermost()), "iterations": out.iterations}
        else:
            extra = {"max_core": out.max_core}
        timings[algo] = Timing(algo, samples, extra)

    report = {
        "spec": {k: (v.isoformat() if isinstance(v, date) else v) for k, v in asdict(spec).items()},
        "graph": {"nodes": g.num_nodes, "edges": g.num_edges},
        "epsilon": epsilon,
        "step": step,
        "repetitions": repetitions,
        "results": {a: {"samples": t.samples, **t.summary, **t.extra} for a, t in timings.items()},
    }
    if "innercore" in last and "alphacore" in last:
        ic = last["innercore"].member_set()
        ac = set(last["alphacore"].innermost().tolist())
        report["innercore_vs_alphacore"] = {
            "match": ic == ac,
            "only_innercore": len(ic - ac),
            "only_alphacore": len(ac - ic),
            "alpha_level": 1.0 - last["alphacore"].levels[-1],
        }
        ia = report["results"]["innercore"]["mean"]
        aa = report["results"]["alphacore"]["mean"]
        report["innercore_vs_alphacore"]["time_ratio"] = ia / aa if aa > 0 else None
    return report


def report_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["algorithm", "repetition", "seconds"])
    for algo, r in report["results"].items():
        for k, s in enumerate(r["samples"]):
            w.writerow([algo, k, f"{s:.6f}"])
    return buf.getvalue()


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
