"""Temporal transaction multigraph model and CSV ingestion.

Each snapshot holds one calendar day of address-to-address transfers as
parallel numpy arrays (``src``, ``dst``, ``weight``, ``timestamp``).  Node
identities are integer handles interned by an :class:`AddressBook` shared by
all snapshots of a :class:`TemporalGraph`, so the same address keeps the same
id across days.
"""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from decimal import Decimal, InvalidOperation
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import IngestError, InputError

log = logging.getLogger(__name__)

EPOCH = date(1970, 1, 1)
SECONDS_PER_DAY = 86400
_HEX = re.compile(r"^0x[0-9a-f]+$")


def normalize_address(raw: str) -> str:
    """Lowercase an address and make sure it carries the ``0x`` prefix."""
    s = raw.strip().lower()
    if not s.startswith("0x"):
        s = "0x" + s
    if not _HEX.match(s):
        raise ValueError(f"not a hex address: {raw!r}")
    return s


class AddressBook:
    """Bijective interning of hex addresses to dense integer ids."""

    def __init__(self, addresses: Iterable[str] = ()):
        self._ids: dict[str, int] = {}
        self._raw: list[str] = []
        for a in addresses:
            self.intern(a)

    def intern(self, raw: str) -> int:
        key = normalize_address(raw)
        idx = self._ids.get(key)
        if idx is None:
            idx = len(self._raw)
            self._ids[key] = idx
            self._raw.append(key)
        return idx

    def get(self, raw: str) -> int | None:
        try:
            return self._ids.get(normalize_address(raw))
        except ValueError:
            return None

    def raw(self, idx: int) -> str:
        return self._raw[idx]

    def __len__(self) -> int:
        return len(self._raw)

    def __contains__(self, raw: str) -> bool:
        return self.get(raw) is not None

    @property
    def addresses(self) -> list[str]:
        return list(self._raw)


class Edge(NamedTuple):
    src: int
    dst: int
    weight: float
    timestamp: int


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SnapshotGraph:
    """One day's directed weighted multigraph.

    ``nodes`` is sorted and unique; every edge endpoint is contained in it.
    Parallel edges and self-loops are kept as given.
    """

    day: date
    nodes: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    timestamp: np.ndarray

    @classmethod
    def from_edges(cls, day, src, dst, weight, timestamp=None, nodes=None) -> "SnapshotGraph":
        src = _frozen(src, np.int64)
        dst = _frozen(dst, np.int64)
        weight = _frozen(weight, np.float64)
        if not (len(src) == len(dst) == len(weight)):
            raise InputError("src, dst and weight must have equal length")
        if timestamp is None:
            base = (day - EPOCH).days * SECONDS_PER_DAY
            timestamp = np.full(len(src), base, dtype=np.int64)
        timestamp = _frozen(timestamp, np.int64)
        if len(timestamp) != len(src):
            raise InputError("timestamp length does not match edges")
        if np.any(weight < 0) or not np.all(np.isfinite(weight)):
            raise InputError("edge weights must be finite and non-negative")
        endpoints = np.union1d(src, dst)
        if nodes is None:
            node_arr = endpoints
        else:
            node_arr = np.unique(np.asarray(nodes, dtype=np.int64))
            if not np.all(np.isin(endpoints, node_arr)):
                raise InputError("edge endpoint missing from node set")
        return cls(day, _frozen(node_arr, np.int64), src, dst, weight, timestamp)

    @classmethod
    def empty(cls, day) -> "SnapshotGraph":
        return cls.from_edges(day, [], [], [])

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_edges(self) -> int:
        return len(self.src)

    def __len__(self) -> int:
        return self.num_nodes

    def edges(self) -> Iterator[Edge]:
        for s, d, w, t in zip(self.src.tolist(), self.dst.tolist(),
                              self.weight.tolist(), self.timestamp.tolist()):
            yield Edge(s, d, w, t)

    def local_index(self, ids) -> np.ndarray:
        """Positions of global node ids within ``nodes``."""
        ids = np.asarray(ids, dtype=np.int64)
        pos = np.searchsorted(self.nodes, ids)
        if ids.size and (np.any(pos >= len(self.nodes)) or np.any(self.nodes[np.minimum(pos, len(self.nodes) - 1)] != ids)):
            raise KeyError("node id not in snapshot")
        return pos

    @cached_property
    def local_src(self) -> np.ndarray:
        return self.local_index(self.src)

    @cached_property
    def local_dst(self) -> np.ndarray:
        return self.local_index(self.dst)

    @cached_property
    def _out_csr(self):
        return _csr(self.local_src, self.num_nodes)

    @cached_property
    def _in_csr(self):
        return _csr(self.local_dst, self.num_nodes)

    def out_edges(self, node: int) -> np.ndarray:
        """Indices of edges leaving ``node`` (a global id)."""
        offsets, order = self._out_csr
        i = int(self.local_index([node])[0])
        return order[offsets[i]:offsets[i + 1]]

    def in_edges(self, node: int) -> np.ndarray:
        offsets, order = self._in_csr
        i = int(self.local_index([node])[0])
        return order[offsets[i]:offsets[i + 1]]

    def induced(self, members) -> "SnapshotGraph":
        """Subgraph on ``members``; edges with any endpoint outside vanish."""
        if not isinstance(members, np.ndarray):
            members = list(members)
        members = np.unique(np.asarray(members, dtype=np.int64))
        if not np.all(np.isin(members, self.nodes)):
            raise InputError("members must be a subset of the snapshot's nodes")
        keep = np.isin(self.src, members) & np.isin(self.dst, members)
        return SnapshotGraph.from_edges(
            self.day, self.src[keep], self.dst[keep], self.weight[keep],
            self.timestamp[keep], nodes=members,
        )


def _csr(keys: np.ndarray, n: int):
    order = np.argsort(keys, kind="stable")
    counts = np.bincount(keys, minlength=n)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    return offsets, order


@dataclass
class IngestReport:
    rows: int = 0
    edges: int = 0
    zero_weight_dropped: int = 0
    malformed: int = 0
    malformed_rows: list[int] = field(default_factory=list)
    precision_loss: int = 0

    def as_dict(self) -> dict:
        return {
            "rows": self.rows,
            "edges": self.edges,
            "zero_weight_dropped": self.zero_weight_dropped,
            "malformed": self.malformed,
            "malformed_rows": list(self.malformed_rows),
            "precision_loss": self.precision_loss,
        }


@dataclass(frozen=True, eq=False)
class TemporalGraph:
    """Daily snapshots sharing one address book, ordered by day."""

    snapshots: tuple[SnapshotGraph, ...]
    book: AddressBook
    report: IngestReport | None = None

    def __post_init__(self):
        days = [s.day for s in self.snapshots]
        if any(b <= a for a, b in zip(days, days[1:])):
            raise InputError("snapshot days must be strictly increasing")
        object.__setattr__(self, "_index", {d: i for i, d in enumerate(days)})

    @property
    def days(self) -> list[date]:
        return [s.day for s in self.snapshots]

    def day_range(self) -> list[date]:
        """Every calendar day from the first to the last snapshot, gaps included."""
        if not self.snapshots:
            return []
        first, last = self.snapshots[0].day, self.snapshots[-1].day
        return [first + timedelta(days=k) for k in range((last - first).days + 1)]

    def snapshot(self, day: date) -> SnapshotGraph:
        i = self._index.get(day)
        return SnapshotGraph.empty(day) if i is None else self.snapshots[i]

    def __len__(self) -> int:
        return len(self.snapshots)

    def __iter__(self):
        return iter(self.snapshots)


# --------------------------------------------------------------------------
# node properties

PROPERTIES = ("N", "N_out", "N_in", "deg", "deg_out", "deg_in", "S", "S_out", "S_in")
DEFAULT_PROPS = ("deg_in", "deg_out", "S_in", "S_out")
_PROP_LOOKUP = {p.lower(): p for p in PROPERTIES}


def resolve_props(props: Sequence[str] | None) -> tuple[str, ...]:
    if props is None:
        return DEFAULT_PROPS
    if isinstance(props, str):
        props = [p for p in props.split(",") if p.strip()]
    if len(props) == 0:
        raise InputError("at least one node property is required")
    out = []
    for p in props:
        key = _PROP_LOOKUP.get(p.strip().lower())
        if key is None:
            raise InputError(f"unknown node property {p!r}; choose from {', '.join(PROPERTIES)}")
        out.append(key)
    return tuple(out)


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    node_ids: np.ndarray
    values: np.ndarray
    props: tuple[str, ...] = DEFAULT_PROPS

    def __len__(self) -> int:
        return len(self.node_ids)

    def row(self, node_id: int) -> np.ndarray:
        i = int(np.searchsorted(self.node_ids, node_id))
        if i >= len(self.node_ids) or self.node_ids[i] != node_id:
            raise KeyError(node_id)
        return self.values[i]


class FeatureKernel:
    """Recomputes node properties of a snapshot restricted to alive nodes.

    Self-loops count toward ``deg_in``, ``deg_out``, ``S_in`` and ``S_out``
    but only once toward ``deg`` and ``S``; a node is never its own neighbor.
    """

    def __init__(self, g: SnapshotGraph, props: Sequence[str] | None = None):
        self.props = resolve_props(props)
        self.n = g.num_nodes
        self.src = g.local_src
        self.dst = g.local_dst
        self.weight = g.weight
        loop = self.src == self.dst
        self._loop = loop
        wanted = set(self.props)
        if wanted & {"N_out", "N_in"}:
            codes = np.unique(self.src[~loop] * self.n + self.dst[~loop])
            self._dpairs = (codes // self.n, codes % self.n)
        if "N" in wanted:
            a = np.minimum(self.src[~loop], self.dst[~loop])
            b = np.maximum(self.src[~loop], self.dst[~loop])
            codes = np.unique(a * self.n + b)
            self._upairs = (codes // self.n, codes % self.n)

    def compute(self, alive: np.ndarray | None = None) -> np.ndarray:
        n = self.n
        cols = []
        if alive is None:
            emask = None
        else:
            emask = alive[self.src] & alive[self.dst]

        def count(idx, w=None, mask=emask):
            if mask is not None:
                idx = idx[mask]
                w = None if w is None else w[mask]
            return np.bincount(idx, weights=w, minlength=n).astype(np.float64)

        cache: dict[str, np.ndarray] = {}

        def get(p):
            if p in cache:
                return cache[p]
            if p == "deg_out":
                v = count(self.src)
            elif p == "deg_in":
                v = count(self.dst)
            elif p == "S_out":
                v = count(self.src, self.weight)
            elif p == "S_in":
                v = count(self.dst, self.weight)
            elif p == "deg":
                lm = self._loop if emask is None else self._loop & emask
                v = get("deg_out") + get("deg_in") - np.bincount(self.src[lm], minlength=n)
            elif p == "S":
                lm = self._loop if emask is None else self._loop & emask
                v = get("S_out") + get("S_in") - np.bincount(self.src[lm], weights=self.weight[lm], minlength=n)
            elif p in ("N_out", "N_in"):
                a, b = self._dpairs
                pm = None if alive is None else alive[a] & alive[b]
                v = count(a if p == "N_out" else b, mask=pm)
            elif p == "N":
                a, b = self._upairs
                pm = None if alive is None else alive[a] & alive[b]
                v = count(a, mask=pm) + count(b, mask=pm)
            else:  # pragma: no cover - resolve_props guards this
                raise InputError(p)
            cache[p] = v
            return v

        for p in self.props:
            cols.append(get(p))
        if not cols or n == 0:
            return np.zeros((n, len(self.props)))
        return np.column_stack(cols)


def compute_features(g: SnapshotGraph, props: Sequence[str] | None = None) -> FeatureMatrix:
    """Feature matrix with one row per node, in ``g.nodes`` order."""
    kernel = FeatureKernel(g, props)
    return FeatureMatrix(g.nodes, kernel.compute(), kernel.props)


# --------------------------------------------------------------------------
# ingestion

@dataclass(frozen=True)
class CsvSchema:
    src: str = "from_address"
    dst: str = "to_address"
    value: str = "value"
    timestamp: str = "timestamp"
    token: str | None = None

    @classmethod
    def from_mapping(cls, m: Mapping[str, str] | None) -> "CsvSchema":
        if not m:
            return cls()
        return cls(**{k: v for k, v in m.items() if k in cls.__dataclass_fields__})


def _parse_timestamp(s: str) -> int:
    s = s.strip()
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return int(float(s))
    except ValueError:
        pass
    dt = datetime.fromisoformat(s.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


_EXACT_FLOAT_LIMIT = 2 ** 53


def _parse_value(s: str, decimals: int) -> tuple[float, bool]:
    """Scale a raw subunit value; returns (weight, lost_precision)."""
    s = s.strip()
    try:
        raw = int(s)
    except ValueError:
        try:
            d = Decimal(s)
        except InvalidOperation:
            raise ValueError(f"bad value {s!r}") from None
        if not d.is_finite() or d < 0:
            raise ValueError(f"bad value {s!r}")
        if d == d.to_integral_value():
            raw = int(d)
        else:
            return float(d.scaleb(-decimals)), False
    if raw < 0:
        raise ValueError(f"negative value {s!r}")
    return raw / 10 ** decimals, raw > _EXACT_FLOAT_LIMIT


def day_of(ts: int, tz_offset_minutes: int = 0) -> date:
    return EPOCH + timedelta(days=(ts + tz_offset_minutes * 60) // SECONDS_PER_DAY)


def ingest_csv(
    path,
    schema: CsvSchema | Mapping[str, str] | None = None,
    tz_offset: int = 0,
    decimals: int | Mapping[str, int] = 18,
    *,
    default_decimals: int = 18,
    keep_zero_weight: bool = False,
    max_malformed_fraction: float = 0.05,
    normalize_tokens: bool = False,
    book: AddressBook | None = None,
) -> TemporalGraph:
    """Read a transfer CSV into daily snapshots.

    Days are ``[00:00, 24:00)`` in the timezone ``UTC + tz_offset`` minutes.
    ``decimals`` is either one exponent for every row or a per-token mapping
    (keyed by the normalized token column value; unknown tokens fall back to
    ``default_decimals``).
    """
    if not isinstance(schema, CsvSchema):
        schema = CsvSchema.from_mapping(schema)
    paths = [Path(path)] if isinstance(path, (str, Path)) else [Path(p) for p in path]
    book = AddressBook() if book is None else book
    report = IngestReport()
    per_token = isinstance(decimals, Mapping)
    token_dec = {k.strip().lower(): int(v) for k, v in decimals.items()} if per_token else {}
    token_map: dict[str, int] = {}

    srcs, dsts, ws, tss, toks = [], [], [], [], []
    for one in paths:
        _read_one(one, schema, per_token, token_dec, default_decimals, decimals,
                  keep_zero_weight, book, report, token_map, (srcs, dsts, ws, tss, toks))

    if report.rows and report.malformed / report.rows > max_malformed_fraction:
        raise IngestError(
            f"{', '.join(map(str, paths))}: {report.malformed} of {report.rows} rows malformed "
            f"(tolerance {max_malformed_fraction:.2%})",
            report.malformed_rows,
        )
    if report.malformed:
        log.warning("skipped %d malformed row(s)", report.malformed)
    if report.precision_loss:
        log.info("%d value(s) exceed 2^53 subunits; weights rounded to double",
                 report.precision_loss)

    src = np.asarray(srcs, dtype=np.int64)
    dst = np.asarray(dsts, dtype=np.int64)
    w = np.asarray(ws, dtype=np.float64)
    ts = np.asarray(tss, dtype=np.int64)
    if normalize_tokens and len(w):
        tok = np.asarray(toks)
        for t in np.unique(tok):
            m = tok == t
            sd = w[m].std()
            if sd > 0:
                w[m] = w[m] / sd
    report.edges = len(src)
    return TemporalGraph(_bucket(src, dst, w, ts, tz_offset), book, report)


def _read_one(path, schema, per_token, token_dec, default_decimals, decimals,
              keep_zero_weight, book, report, token_map, cols):
    srcs, dsts, ws, tss, toks = cols
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        needed = [schema.src, schema.dst, schema.value, schema.timestamp]
        if schema.token:
            needed.append(schema.token)
        missing = [c for c in needed if c not in header]
        if missing and header:
            raise IngestError(f"{path}: missing column(s) {', '.join(missing)}")
        if not header:
            log.warning("%s is empty", path)
        for rowno, row in enumerate(reader, start=2):
            report.rows += 1
            try:
                tok = (row[schema.token] or "").strip().lower() if schema.token else ""
                dec = token_dec.get(tok, default_decimals) if per_token else int(decimals)
                w, lossy = _parse_value(row[schema.value], dec)
                ts = _parse_timestamp(row[schema.timestamp])
                a = normalize_address(row[schema.src])
                b = normalize_address(row[schema.dst])
            except (ValueError, TypeError, AttributeError, KeyError):
                report.malformed += 1
                report.malformed_rows.append(rowno)
                continue
            if w == 0 and not keep_zero_weight:
                report.zero_weight_dropped += 1
                continue
            report.precision_loss += lossy
            srcs.append(book.intern(a))
            dsts.append(book.intern(b))
            ws.append(w)
            tss.append(ts)
            toks.append(token_map.setdefault(tok, len(token_map)))


def _bucket(src, dst, w, ts, tz_offset) -> tuple[SnapshotGraph, ...]:
    if len(src) == 0:
        return ()
    day_no = (ts + tz_offset * 60) // SECONDS_PER_DAY
    order = np.argsort(day_no, kind="stable")
    day_no = day_no[order]
    cuts = np.flatnonzero(np.diff(day_no)) + 1
    out = []
    for chunk in np.split(order, cuts):
        d = EPOCH + timedelta(days=int((ts[chunk[0]] + tz_offset * 60) // SECONDS_PER_DAY))
        out.append(SnapshotGraph.from_edges(d, src[chunk], dst[chunk], w[chunk], ts[chunk]))
    return tuple(out)


def temporal_from_edges(edges: Iterable[tuple], tz_offset: int = 0,
                        book: AddressBook | None = None) -> TemporalGraph:
    """Build a TemporalGraph from ``(src_hex, dst_hex, weight, timestamp)`` tuples."""
    book = AddressBook() if book is None else book
    rows = [(book.intern(a), book.intern(b), float(w), int(t)) for a, b, w, t in edges]
    if not rows:
        return TemporalGraph((), book)
    src, dst, w, ts = (np.asarray(c) for c in zip(*rows))
    return TemporalGraph(_bucket(src.astype(np.int64), dst.astype(np.int64),
                                 w.astype(np.float64), ts.astype(np.int64), tz_offset), book)


def write_edges_csv(tg: TemporalGraph, path) -> None:
    """Re-serialize edges as ``src,dst,weight,day`` rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["src", "dst", "weight", "day"])
        for g in tg.snapshots:
            for e in g.edges():
                w.writerow([tg.book.raw(e.src), tg.book.raw(e.dst), repr(e.weight), g.day.isoformat()])


# --------------------------------------------------------------------------
# labels

class LabelSet:
    """Address -> label lookup; unlabeled addresses map to ``None``."""

    def __init__(self, labels: Mapping[str, str] | None = None):
        self._labels: dict[str, str] = {}
        for a, lab in (labels or {}).items():
            self._labels[normalize_address(a)] = lab

    def get(self, address: str) -> str | None:
        try:
            return self._labels.get(normalize_address(address))
        except ValueError:
            return None

    def __contains__(self, address: str) -> bool:
        return self.get(address) is not None

    def __len__(self) -> int:
        return len(self._labels)


def load_labels(path) -> LabelSet:
    labels = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not {"address", "label"} <= set(reader.fieldnames):
            raise InputError(f"{path}: labels CSV needs 'address' and 'label' columns")
        for rowno, row in enumerate(reader, start=2):
            try:
                labels[normalize_address(row["address"])] = row["label"].strip()
            except (ValueError, AttributeError):
                log.warning("%s:%d: skipping bad label row", path, rowno)
    return LabelSet(labels)


# --------------------------------------------------------------------------
# binary cache

CACHE_VERSION = 1


def save_cache(tg: TemporalGraph, path) -> None:
    """Versioned little-endian ``.npz`` snapshot cache."""
    parts = [(g, np.full(g.num_edges, (g.day - EPOCH).days, dtype="<i8")) for g in tg.snapshots]
    cat = (lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt))
    with open(path, "wb") as fh:
        np.savez_compressed(
            fh,
            version=np.array([CACHE_VERSION], dtype="<i8"),
            addresses=np.array(tg.book.addresses, dtype="U"),
            day=cat([d for _, d in parts], "<i8"),
            src=cat([g.src for g, _ in parts], "<i8"),
            dst=cat([g.dst for g, _ in parts], "<i8"),
            weight=cat([g.weight for g, _ in parts], "<f8"),
            timestamp=cat([g.timestamp for g, _ in parts], "<i8"),
        )


def load_cache(path) -> TemporalGraph:
    with np.load(path, allow_pickle=False) as z:
        version = int(z["version"][0])
        if version != CACHE_VERSION:
            raise InputError(f"{path}: cache version {version}, expected {CACHE_VERSION}")
        book = AddressBook(z["addresses"].tolist())
        day, src, dst = z["day"], z["src"], z["dst"]
        weight, ts = z["weight"], z["timestamp"]
    snaps = []
    if len(day):
        cuts = np.flatnonzero(np.diff(day)) + 1
        for chunk in np.split(np.arange(len(day)), cuts):
            d = EPOCH + timedelta(days=int(day[chunk[0]]))
            snaps.append(SnapshotGraph.from_edges(d, src[chunk], dst[chunk], weight[chunk], ts[chunk]))
    return TemporalGraph(tuple(snaps), book)
