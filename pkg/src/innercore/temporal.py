"""Expansion/decay of daily InnerCores and the behavioral patterns built on them."""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from enum import Enum
from typing import Hashable, Mapping, Sequence


class Pattern(str, Enum):
    HOPE = "Hope"
    DESPAIR = "Despair"
    UNCERTAINTY = "Uncertainty"
    FAITH = "Faith"
    NEUTRAL = "Neutral"


HIGH, MID, LOW = "HIGH", "MID", "LOW"
ZERO_MEDIAN_HIGH = 5

_QUADRANTS = {
    (HIGH, LOW): Pattern.HOPE,
    (LOW, HIGH): Pattern.DESPAIR,
    (HIGH, HIGH): Pattern.UNCERTAINTY,
    (LOW, LOW): Pattern.FAITH,
}


def _back(t, j):
    return t - timedelta(days=j) if isinstance(t, date) else t - j


def _history(cores: Mapping[Hashable, set], t, i: int) -> set | None:
    if i < 1:
        raise ValueError("history i must be >= 1")
    union: set = set()
    for j in range(1, i + 1):
        prev = cores.get(_back(t, j))
        if prev is None:
            return None
        union |= set(prev)
    return union


def expansion(cores: Mapping[Hashable, set], t, i: int = 1) -> int | None:
    """Members of day t's core absent from the previous i days; None without history."""
    hist = _history(cores, t, i)
    if hist is None:
        return None
    return len(set(cores[t]) - hist)


def decay(cores: Mapping[Hashable, set], t, i: int = 1) -> int | None:
    """Members of the previous i days' cores absent from day t's core."""
    hist = _history(cores, t, i)
    if hist is None:
        return None
    return len(hist - set(cores[t]))


@dataclass
class DayRecord:
    day: Hashable
    inner_size: int
    expansion: int | None
    decay: int | None
    pattern: Pattern | None = None
    anomaly: bool = False

    @property
    def normalized_expansion(self) -> float | None:
        if self.expansion is None or self.inner_size == 0:
            return None
        return self.expansion / self.inner_size

    @property
    def normalized_decay(self) -> float | None:
        if self.decay is None or self.inner_size == 0:
            return None
        return self.decay / self.inner_size


@dataclass
class ExpansionDecaySeries:
    records: list[DayRecord]
    history: int = 1
    epsilon: float | None = None
    window: int = 7
    tau: float = 0.25
    lag: int = 7
    pairs: list[tuple] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, k):
        return self.records[k]

    @property
    def days(self) -> list:
        return [r.day for r in self.records]

    def record(self, day) -> DayRecord:
        for r in self.records:
            if r.day == day:
                return r
        raise KeyError(day)


def build_series(cores: Mapping[Hashable, set], days: Sequence | None = None,
                 history: int = 1, epsilon: float | None = None) -> ExpansionDecaySeries:
    """E_t/D_t for each day; the first ``history`` days carry None."""
    days = sorted(cores) if days is None else list(days)
    full = {d: set(cores.get(d, ())) for d in days}
    recs = [DayRecord(d, len(full[d]), expansion(full, d, history), decay(full, d, history))
            for d in days]
    return ExpansionDecaySeries(recs, history=history, epsilon=epsilon)


def level(value: float, median: float, tau: float) -> str:
    if median == 0:
        return HIGH if value >= ZERO_MEDIAN_HIGH else MID
    if value > (1 + tau) * median:
        return HIGH
    if value < (1 - tau) * median:
        return LOW
    return MID


def levels(series: ExpansionDecaySeries, window: int = 7, tau: float = 0.25) -> list[tuple[str, str] | None]:
    """(E level, D level) per day against the median of the preceding ``window`` valid days."""
    out: list[tuple[str, str] | None] = []
    valid = [r for r in series.records if r.expansion is not None and r.decay is not None]
    pos = {id(r): k for k, r in enumerate(valid)}
    for r in series.records:
        k = pos.get(id(r))
        if k is None or k < window:
            out.append(None)
            continue
        prior = valid[k - window:k]
        me = statistics.median(p.expansion for p in prior)
        md = statistics.median(p.decay for p in prior)
        out.append((level(r.expansion, me, tau), level(r.decay, md, tau)))
    return out


def classify_patterns(series: ExpansionDecaySeries, window: int = 7, tau: float = 0.25) -> list[Pattern]:
    """Label every day; days without a full baseline window are Neutral."""
    if window < 1:
        raise ValueError("window must be >= 1")
    labels = []
    for lv in levels(series, window, tau):
        labels.append(Pattern.NEUTRAL if lv is None else _QUADRANTS.get(lv, Pattern.NEUTRAL))
    return labels


def anomaly_candidates(series: ExpansionDecaySeries, window: int = 7, tau: float = 0.25,
                       lag: int = 7) -> list[tuple]:
    """(expansion day, decay day) pairs: a HIGH-E day followed within ``lag`` days by a HIGH-D day.

    For each HIGH-E day the paired decay day is the largest-decay HIGH-D day
    in the lag window (earliest on ties).
    """
    lv = levels(series, window, tau)
    recs = series.records
    pairs = []
    for k, r in enumerate(recs):
        if lv[k] is None or lv[k][0] != HIGH:
            continue
        best = None
        for j in range(k + 1, len(recs)):
            gap = _gap(r.day, recs[j].day)
            if gap > lag:
                break
            if lv[j] is not None and lv[j][1] == HIGH and (best is None or recs[j].decay > recs[best].decay):
                best = j
        if best is not None:
            pairs.append((r.day, recs[best].day))
    return pairs


def _gap(a, b) -> int:
    d = b - a
    return d.days if isinstance(d, timedelta) else int(d)


def annotate(series: ExpansionDecaySeries, window: int = 7, tau: float = 0.25,
             lag: int = 7) -> ExpansionDecaySeries:
    """Copy of ``series`` with patterns, anomaly flags and candidate pairs filled in."""
    labels = classify_patterns(series, window, tau)
    pairs = anomaly_candidates(series, window, tau, lag)
    flagged = {d for p in pairs for d in p}
    recs = [replace(r, pattern=lab, anomaly=r.day in flagged) for r, lab in zip(series.records, labels)]
    return replace(series, records=recs, window=window, tau=tau, lag=lag, pairs=pairs)


def anomaly_window_days(series: ExpansionDecaySeries) -> list:
    """Every day lying between an expansion day and its paired decay day, inclusive."""
    keep = set()
    for a, b in series.pairs:
        for r in series.records:
            if _gap(a, r.day) >= 0 and _gap(r.day, b) >= 0:
                keep.add(r.day)
    return [r.day for r in series.records if r.day in keep]
