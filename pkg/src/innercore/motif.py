"""Centered 3-node motifs.

A center is a node whose two motif edges both leave it (sell) or both enter it
(buy), never both directions with the same partner.  The edge between the
other two nodes then picks the motif::

    partners a, b      sell center (v->a, v->b)   buy center (a->v, b->v)
    not connected      C1                         C4
    one direction      C5a                        C5b
    mutual             C11                        C6

Counting runs on the simple direction projection of the multigraph, so edge
multiplicity and self-loops never change a count.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Hashable

import numpy as np

from .graph import SnapshotGraph


class CenterRole(str, Enum):
    C1 = "C1"
    C4 = "C4"
    C5A = "C5a"
    C5B = "C5b"
    C6 = "C6"
    C11 = "C11"

    @property
    def behavior(self) -> str:
        return "sell" if self in SELL_ROLES else "buy"

    @classmethod
    def parse(cls, s: str) -> "CenterRole":
        for r in cls:
            if r.value.lower() == s.strip().lower():
                return r
        raise ValueError(f"unknown center role {s!r}")


SELL_ROLES = frozenset({CenterRole.C1, CenterRole.C5A, CenterRole.C11})
BUY_ROLES = frozenset({CenterRole.C4, CenterRole.C5B, CenterRole.C6})
ROLE_ORDER = (CenterRole.C1, CenterRole.C4, CenterRole.C5A, CenterRole.C5B, CenterRole.C6, CenterRole.C11)

_SELL_BY_LINK = (CenterRole.C1, CenterRole.C5A, CenterRole.C11)
_BUY_BY_LINK = (CenterRole.C4, CenterRole.C5B, CenterRole.C6)


@dataclass
class MotifCounts:
    """c(v, role, day); only nonzero counts are stored."""

    day: Hashable
    counts: dict[tuple[Hashable, int], int] = field(default_factory=dict)

    def get(self, role, node: int) -> int:
        return self.counts.get((role, node), 0)

    def totals(self) -> dict:
        out: dict = defaultdict(int)
        for (role, _), c in self.counts.items():
            out[role] += c
        return dict(out)

    def roles(self) -> list:
        return sorted({r for r, _ in self.counts}, key=role_sort_key)

    def rows(self):
        """(role, node, count) sorted by role order then node id."""
        for (role, node) in sorted(self.counts, key=lambda k: (role_sort_key(k[0]), k[1])):
            yield role, node, self.counts[(role, node)]


def role_sort_key(role):
    try:
        return (ROLE_ORDER.index(role), "")
    except ValueError:
        return (len(ROLE_ORDER), str(role))


def induced_subgraph(g: SnapshotGraph, members) -> SnapshotGraph:
    """Edges with both endpoints in ``members``; parallel edges kept."""
    return g.induced(members)


def direction_sets(g: SnapshotGraph) -> tuple[dict[int, set], dict[int, set]]:
    """Out- and in-neighbor sets of the simple projection, self-loops dropped."""
    out: dict[int, set] = {int(v): set() for v in g.nodes}
    inn: dict[int, set] = {int(v): set() for v in g.nodes}
    keep = g.src != g.dst
    for a, b in zip(g.src[keep].tolist(), g.dst[keep].tolist()):
        out[a].add(b)
        inn[b].add(a)
    return out, inn


def enumerate_centers(g: SnapshotGraph) -> MotifCounts:
    """Credit each node with the centered motifs it anchors.

    For a pure-sell partner set P (out-only neighbors) the C(|P|, 2) pairs
    split by how the partners are linked to each other; pure-buy likewise.
    Pairs that mix a sell and a buy partner, or involve a reciprocal partner,
    have no center at v.
    """
    out, inn = direction_sets(g)
    counts: dict[tuple[CenterRole, int], int] = {}
    for v in out:
        o, i = out[v], inn[v]
        sell = o - i
        buy = i - o
        for partners, roles in ((sell, _SELL_BY_LINK), (buy, _BUY_BY_LINK)):
            k = len(partners)
            if k < 2:
                continue
            one_way = mutual = 0
            for a in partners:
                for b in out[a] & partners:
                    if a in out[b]:
                        mutual += 1
                    else:
                        one_way += 1
            mutual //= 2
            none = k * (k - 1) // 2 - one_way - mutual
            for role, c in zip(roles, (none, one_way, mutual)):
                if c:
                    counts[(role, v)] = c
    return MotifCounts(g.day, counts)


def core_motifs(g: SnapshotGraph, members) -> MotifCounts:
    """Motif centers inside the subgraph induced by ``members``."""
    members = np.asarray(sorted(members), dtype=np.int64)
    return enumerate_centers(induced_subgraph(g, members))
