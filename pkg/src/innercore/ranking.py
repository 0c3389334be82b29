"""NF-IAF scoring of motif centers, percentile ranks and label partitioning.

NF is a node's share of a motif's occurrences on one day; IAF is
``log10(|T| / df)`` where df counts the days on which the node is a center of
that motif.  Only present (count > 0) entries are stored.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Hashable, Sequence

import numpy as np

from .graph import AddressBook, LabelSet
from .motif import CenterRole, MotifCounts, role_sort_key

COMBINED_M5 = "C5"


@dataclass(frozen=True)
class ScoreEntry:
    role: Hashable
    day: Hashable
    node: int
    count: int
    nf: float
    iaf: float
    nf_iaf: float


@dataclass
class NfIafTable:
    days: list
    entries: list[ScoreEntry]
    df: dict[tuple[Hashable, int], int]
    totals: dict[tuple[Hashable, Hashable], int]

    @property
    def window(self) -> int:
        return len(self.days)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def entry(self, role, day, node) -> ScoreEntry | None:
        return self._index.get((role, day, node))

    def score(self, role, day, node) -> float | None:
        """NF-IAF, 0 for absent nodes on a day with occurrences, None when the day has none."""
        e = self.entry(role, day, node)
        if e is not None:
            return e.nf_iaf
        return 0.0 if self.totals.get((role, day), 0) > 0 else None

    @cached_property
    def _index(self):
        return {(e.role, e.day, e.node): e for e in self.entries}

    def roles(self) -> list:
        return sorted({e.role for e in self.entries}, key=role_sort_key)


def _merge_role(role, combine_m5: bool):
    if combine_m5 and role in (CenterRole.C5A, CenterRole.C5B):
        return COMBINED_M5
    return role


def nf_iaf(counts: Sequence[MotifCounts], combine_m5: bool = False) -> NfIafTable:
    """Score every (role, day, node) with a positive count over the window ``counts``.

    With ``combine_m5`` the two transitive-triad roles are pooled into one
    motif population before scoring.
    """
    if not counts:
        raise ValueError("window T must contain at least one day")
    days = [c.day for c in counts]
    if len(set(days)) != len(days):
        raise ValueError("duplicate day in motif window")
    merged: list[dict] = []
    for mc in counts:
        d: dict = defaultdict(int)
        for (role, node), c in mc.counts.items():
            if c > 0:
                d[(_merge_role(role, combine_m5), node)] += c
        merged.append(d)

    df: dict = defaultdict(int)
    totals: dict = defaultdict(int)
    for day, d in zip(days, merged):
        for (role, node), c in d.items():
            df[(role, node)] += 1
            totals[(role, day)] += c

    T = len(days)
    entries = []
    for day, d in zip(days, merged):
        for (role, node) in sorted(d, key=lambda k: (role_sort_key(k[0]), k[1])):
            c = d[(role, node)]
            nf = c / totals[(role, day)]
            iaf = math.log10(T / df[(role, node)])
            entries.append(ScoreEntry(role, day, node, c, nf, iaf, nf * iaf))
    day_pos = {d: k for k, d in enumerate(days)}
    entries.sort(key=lambda e: (role_sort_key(e.role), day_pos[e.day], e.node))
    return NfIafTable(days, entries, dict(df), dict(totals))


def midrank_percentiles(population: Sequence[float], values: Sequence[float] | None = None) -> np.ndarray:
    """``100 * (#below + 0.5 * #equal) / N`` of each value within ``population``."""
    pop = np.sort(np.asarray(population, dtype=np.float64))
    vals = pop if values is None else np.asarray(values, dtype=np.float64)
    below = np.searchsorted(pop, vals, side="left")
    upto = np.searchsorted(pop, vals, side="right")
    return 100.0 * (below + 0.5 * (upto - below)) / len(pop)


@dataclass
class PercentileTable:
    ranks: dict[tuple[Hashable, Hashable, int], float] = field(default_factory=dict)

    def get(self, role, day, node) -> float | None:
        return self.ranks.get((role, day, node))

    def __len__(self) -> int:
        return len(self.ranks)


def percentile_ranks(table: NfIafTable, decimals: int = 1) -> PercentileTable:
    """Rank each entry against all entries of its role across the window."""
    if len(table) == 0:
        raise ValueError("empty NF-IAF table")
    by_role: dict = defaultdict(list)
    for e in table.entries:
        by_role[e.role].append(e)
    ranks = {}
    for role, es in by_role.items():
        scores = [e.nf_iaf for e in es]
        pct = midrank_percentiles(scores, scores)
        for e, p in zip(es, pct):
            ranks[(e.role, e.day, e.node)] = round(float(p), decimals)
    return PercentileTable(ranks)


@dataclass
class LabelSummary:
    unique: int
    exchanges: int


def partition_by_label(table: NfIafTable, labels: LabelSet | None, book: AddressBook):
    """Split entries by whether the center address carries a label.

    Returns ``(labeled_entries, unlabeled_entries, {role: LabelSummary})``;
    summary counts are over unique center addresses per role.
    """
    labels = labels or LabelSet()
    exch, other = [], []
    uniq: dict = defaultdict(set)
    hits: dict = defaultdict(set)
    for e in table.entries:
        addr = book.raw(e.node)
        uniq[e.role].add(e.node)
        if addr in labels:
            exch.append(e)
            hits[e.role].add(e.node)
        else:
            other.append(e)
    summary = {r: LabelSummary(len(uniq[r]), len(hits[r])) for r in sorted(uniq, key=role_sort_key)}
    return exch, other, summary
