"""Run configuration, pipeline stages and deterministic report writers."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import os
import shutil
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Any, Mapping

from . import __version__
from .core import InnerCoreResult, inner_core
from .errors import InnerCoreError, InputError, InvariantViolation
from .graph import (AddressBook, CsvSchema, LabelSet, TemporalGraph, ingest_csv, load_cache,
                    load_labels, resolve_props)
from .motif import CenterRole, MotifCounts, core_motifs, role_sort_key
from .ranking import COMBINED_M5, NfIafTable, nf_iaf, partition_by_label, percentile_ranks
from .temporal import DayRecord, ExpansionDecaySeries, annotate, anomaly_window_days, build_series

log = logging.getLogger(__name__)

CONFIG_ENV = "INNERCORE_CONFIG"
# fields that never change a result; kept out of the provenance echo
_NON_RESULT = {"output", "threads", "json", "timestamp", "cache"}


@dataclass
class RunConfig:
    inputs: list[str] = field(default_factory=list)
    cache: str | None = None
    schema: dict[str, str] = field(default_factory=lambda: dataclasses.asdict(CsvSchema()))
    tz_offset: int = 0
    decimals: int | dict[str, int] = 18
    default_decimals: int = 18
    keep_zero_weight: bool = False
    max_malformed_fraction: float = 0.05
    normalize_tokens: bool = False
    props: list[str] = field(default_factory=lambda: list(resolve_props(None)))
    epsilon: float = 0.1
    reestimate_cov: bool = False
    history: int = 1
    window: int = 7
    tau: float = 0.25
    lag: int = 7
    motif_days: str = "anomalous"
    combine_m5: bool = False
    labels: str | None = None
    output: str = "out"
    threads: int = 1
    seed: int = 0
    json: bool = False
    timestamp: bool = True

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        cfg = cls(**dict(d))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path=None, overrides: Mapping[str, Any] | None = None) -> "RunConfig":
        """File values (``path`` or $INNERCORE_CONFIG), then non-None ``overrides``."""
        path = path or os.environ.get(CONFIG_ENV)
        data: dict[str, Any] = {}
        if path:
            try:
                data = json.loads(Path(path).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise InputError(f"cannot read config {path}: {exc}") from exc
            if not isinstance(data, dict):
                raise InputError(f"config {path} must be a JSON object")
        for k, v in (overrides or {}).items():
            if v is not None:
                data[k] = v
        return cls.from_dict(data)

    def validate(self) -> None:
        if not 0 < self.epsilon <= 1:
            raise InputError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if self.history < 1:
            raise InputError("history must be >= 1")
        if self.window < 1 or self.lag < 1:
            raise InputError("window and lag must be >= 1")
        if self.threads < 1:
            raise InputError("threads must be >= 1")
        if self.motif_days not in ("anomalous", "all"):
            raise InputError("motif_days must be 'anomalous' or 'all'")
        self.props = list(resolve_props(self.props))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def provenance(self) -> dict:
        return {k: v for k, v in sorted(self.to_dict().items()) if k not in _NON_RESULT}


class StageError(InnerCoreError):
    def __init__(self, stage: str, exc: Exception):
        self.stage = stage
        self.cause = exc
        self.exit_code = getattr(exc, "exit_code", 3)
        super().__init__(f"[{stage}] {exc}")


# --------------------------------------------------------------------------
# stages

def load_graph(cfg: RunConfig) -> TemporalGraph:
    if cfg.cache and Path(cfg.cache).exists() and not cfg.inputs:
        return load_cache(cfg.cache)
    if not cfg.inputs:
        raise InputError("no input CSV given (and no cache to read)")
    return ingest_csv(
        cfg.inputs, CsvSchema.from_mapping(cfg.schema), cfg.tz_offset, cfg.decimals,
        default_decimals=cfg.default_decimals, keep_zero_weight=cfg.keep_zero_weight,
        max_malformed_fraction=cfg.max_malformed_fraction, normalize_tokens=cfg.normalize_tokens,
    )


def compute_cores(tg: TemporalGraph, cfg: RunConfig) -> dict[date, InnerCoreResult]:
    """InnerCore of every day in the graph's day range, gaps included."""
    days = tg.day_range()

    def one(day):
        res = inner_core(tg.snapshot(day), cfg.props, cfg.epsilon, reestimate_cov=cfg.reestimate_cov)
        if sum(r for r, _ in res.per_iteration) != tg.snapshot(day).num_nodes - len(res):
            raise InvariantViolation(f"{day}: removal trace does not add up")
        return res

    if cfg.threads > 1 and len(days) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(one, days))
    else:
        results = [one(d) for d in days]
    return dict(zip(days, results))


def core_sets(cores: Mapping[date, InnerCoreResult]) -> dict[date, set]:
    return {d: r.member_set() for d, r in cores.items()}


def series_for(sets: Mapping[Any, set], cfg: RunConfig, days=None) -> ExpansionDecaySeries:
    s = build_series(sets, days, cfg.history, cfg.epsilon)
    return annotate(s, cfg.window, cfg.tau, cfg.lag)


def motif_stage(tg: TemporalGraph, sets: Mapping[date, set], days) -> list[MotifCounts]:
    return [core_motifs(tg.snapshot(d), sets.get(d, ())) for d in days]


@dataclass
class RankedRow:
    role: Any
    day: Any
    address: str
    count: int
    nf: float
    iaf: float
    nf_iaf: float
    percentile: float
    label: str


def rank_stage(counts: list[MotifCounts], book: AddressBook, labels: LabelSet | None = None,
               combine_m5: bool = False) -> tuple[NfIafTable | None, list[RankedRow]]:
    if not counts:
        return None, []
    table = nf_iaf(counts, combine_m5=combine_m5)
    if len(table) == 0:
        return table, []
    pct = percentile_ranks(table)
    labels = labels or LabelSet()
    rows = []
    for e in table.entries:
        addr = book.raw(e.node)
        rows.append(RankedRow(e.role, e.day, addr, e.count, e.nf, e.iaf, e.nf_iaf,
                              pct.get(e.role, e.day, e.node), labels.get(addr) or ""))
    return table, rows


# --------------------------------------------------------------------------
# formatting and IO

def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return format(x, ".10g")
    if isinstance(x, (date, datetime)):
        return x.isoformat()
    if isinstance(x, CenterRole):
        return x.value
    return str(x)


def _header(cfg: RunConfig | None) -> list[str]:
    if cfg is None:
        return []
    lines = [f"# innercore {__version__}",
             "# config: " + json.dumps(cfg.provenance(), sort_keys=True, default=str)]
    if cfg.timestamp:
        lines.append("# generated: " + datetime.now(timezone.utc).isoformat(timespec="seconds"))
    return lines


def render_csv(columns: list[str], rows, cfg: RunConfig | None = None) -> str:
    buf = io.StringIO()
    for line in _header(cfg):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def render_json(columns: list[str], rows, cfg: RunConfig | None = None) -> str:
    doc: dict[str, Any] = {"rows": [dict(zip(columns, (_jsonable(v) for v in r))) for r in rows]}
    if cfg is not None:
        doc["config"] = cfg.provenance()
        doc["version"] = __version__
        if cfg.timestamp:
            doc["generated"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n"


def _jsonable(v):
    if isinstance(v, (date, datetime)):
        return v.isoformat()
    if isinstance(v, CenterRole):
        return v.value
    return v


def read_table(path) -> list[dict]:
    """CSV rows as dicts, skipping ``#`` provenance lines."""
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


class OutputSet:
    """Stage files in a private directory, then move them into place together."""

    def __init__(self, outdir, cfg: RunConfig | None = None):
        self.outdir = Path(outdir)
        self.cfg = cfg
        self.files: dict[str, str] = {}

    def table(self, stem: str, columns, rows):
        as_json = self.cfg is not None and self.cfg.json
        name = f"{stem}.json" if as_json else f"{stem}.csv"
        render = render_json if as_json else render_csv
        self.files[name] = render(list(columns), list(rows), self.cfg)
        return name

    def text(self, name: str, content: str):
        self.files[name] = content
        return name

    def commit(self) -> list[Path]:
        self.outdir.mkdir(parents=True, exist_ok=True)
        staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=self.outdir))
        try:
            for name, content in self.files.items():
                (staging / name).write_text(content, encoding="utf-8")
            written = []
            for name in self.files:
                os.replace(staging / name, self.outdir / name)
                written.append(self.outdir / name)
            return written
        finally:
            shutil.rmtree(staging, ignore_errors=True)


SERIES_COLUMNS = ["day", "inner_size", "expansion", "decay", "pattern", "anomaly",
                  "norm_expansion", "norm_decay"]
MEMBERSHIP_COLUMNS = ["day", "address"]
MOTIF_COLUMNS = ["day", "center_role", "address", "count"]
RANK_COLUMNS = ["center_role", "day", "address", "count", "nf", "iaf", "nf_iaf", "percentile", "label"]


def series_rows(series: ExpansionDecaySeries):
    for r in series:
        yield [r.day, r.inner_size, r.expansion, r.decay,
               r.pattern.value if r.pattern is not None else None,
               r.anomaly if r.pattern is not None else None,
               r.normalized_expansion, r.normalized_decay]


def membership_rows(cores: Mapping[date, InnerCoreResult], book: AddressBook):
    for d in sorted(cores):
        members = sorted(cores[d].members.tolist(), key=book.raw)
        if not members:
            # keeps empty days visible to readers of this table
            yield [d, None]
        for node in members:
            yield [d, book.raw(node)]


def motif_rows(counts: list[MotifCounts], book: AddressBook):
    for mc in counts:
        for role, node, c in sorted(mc.rows(), key=lambda t: (role_sort_key(t[0]), book.raw(t[1]))):
            yield [mc.day, role, book.raw(node), c]


def ranked_rows(rows: list[RankedRow]):
    for r in sorted(rows, key=lambda r: (role_sort_key(r.role), fmt(r.day), r.address)):
        yield [r.role, r.day, r.address, r.count, r.nf, r.iaf, r.nf_iaf, r.percentile, r.label]


def anomaly_report(series: ExpansionDecaySeries, cfg: RunConfig, motif_days, summary=None) -> str:
    doc = {
        "pairs": [{"expansion_day": fmt(a), "decay_day": fmt(b)} for a, b in series.pairs],
        "motif_days": [fmt(d) for d in motif_days],
        "config": cfg.provenance(),
    }
    if summary is not None:
        doc["label_summary"] = {fmt(r): {"unique": s.unique, "exchanges": s.exchanges}
                                for r, s in summary.items()}
    return json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n"


# --------------------------------------------------------------------------
# readers for chained subcommands

def parse_day(s: str):
    s = s.strip()
    try:
        return date.fromisoformat(s)
    except ValueError:
        return int(s)


def read_membership(path, book: AddressBook) -> dict:
    sets: dict = {}
    for row in read_table(path):
        d = parse_day(row["day"])
        sets.setdefault(d, set())
        if row.get("address"):
            sets[d].add(book.intern(row["address"]))
    return sets


def read_motif_counts(path, book: AddressBook) -> list[MotifCounts]:
    by_day: dict = {}
    for row in read_table(path):
        d = parse_day(row["day"])
        mc = by_day.setdefault(d, MotifCounts(d))
        role_s = row["center_role"]
        try:
            role: Any = CenterRole.parse(role_s)
        except ValueError:
            role = COMBINED_M5 if role_s.strip().upper() == COMBINED_M5 else role_s.strip()
        c = int(row["count"])
        node = book.intern(row["address"])
        mc.counts[(role, node)] = mc.counts.get((role, node), 0) + c
    return [by_day[d] for d in sorted(by_day)]


def read_series(path, history: int = 1, epsilon=None) -> ExpansionDecaySeries:
    def opt(s):
        return int(s) if s not in ("", None) else None

    recs = []
    for row in read_table(path):
        recs.append(DayRecord(parse_day(row["day"]), int(row["inner_size"]),
                              opt(row["expansion"]), opt(row["decay"])))
    return ExpansionDecaySeries(recs, history=history, epsilon=epsilon)


def load_label_set(cfg: RunConfig) -> LabelSet | None:
    return load_labels(cfg.labels) if cfg.labels else None


# --------------------------------------------------------------------------
# whole pipeline

def run_pipeline(cfg: RunConfig, tg: TemporalGraph | None = None) -> list[Path]:
    """Ingest -> daily InnerCores -> series and anomalies -> motifs -> NF-IAF ranks."""
    def stage(name, fn, *args):
        try:
            return fn(*args)
        except StageError:
            raise
        except (InnerCoreError, ValueError, OSError, KeyError) as exc:
            raise StageError(name, exc) from exc

    if tg is None:
        tg = stage("ingest", load_graph, cfg)
    labels = stage("labels", load_label_set, cfg)
    cores = stage("innercore", compute_cores, tg, cfg)
    sets = core_sets(cores)
    series = stage("series", series_for, sets, cfg, sorted(sets))
    days = list(series.days) if cfg.motif_days == "all" else anomaly_window_days(series)
    counts = stage("motifs", motif_stage, tg, sets, days)
    table, rows = stage("rank", rank_stage, counts, tg.book, labels, cfg.combine_m5)
    summary = None
    if table is not None and len(table):
        summary = partition_by_label(table, labels, tg.book)[2]

    out = OutputSet(cfg.output, cfg)
    out.table("innercore", MEMBERSHIP_COLUMNS, membership_rows(cores, tg.book))
    out.table("series", SERIES_COLUMNS, series_rows(series))
    out.table("motifs", MOTIF_COLUMNS, motif_rows(counts, tg.book))
    out.table("nfiaf", RANK_COLUMNS, ranked_rows(rows))
    out.text("anomalies.json", anomaly_report(series, cfg, days, summary))
    return stage("write", out.commit)
