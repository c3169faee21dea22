"""Reproducible Monte Carlo orchestration.

Paths are split into fixed batches ``[k * batch_size, (k + 1) * batch_size)``
that do not depend on the worker count, so every per-path result is a function
of (config, path index) alone. Completed batches are appended to a CSV log
(the checkpoint); a resumed run skips batches already present in the log and
recomputes the aggregate from it.
"""

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import io, pipelines
from .config import config_hash, validate
from .errors import MRLError, ValidationError

STATUSES = ("ok", "alarm", "excluded")


@dataclass
class ExperimentPlan:
    config: dict
    out_dir: str = None

    def __post_init__(self):
        self.config = validate(self.config)
        if self.config["pipeline"] not in pipelines.PIPELINES:
            raise ValidationError(f"pipeline {self.config['pipeline']!r} is not a Monte Carlo pipeline")

    @property
    def plan_id(self):
        return config_hash(self.config)

    @property
    def n_paths(self):
        return self.config["n_paths"]

    def columns(self):
        return pipelines.get(self.config["pipeline"])[0](self.config)

    def batches(self):
        b = self.config["batch_size"]
        return [(lo, min(lo + b, self.n_paths)) for lo in range(0, self.n_paths, b)]


@dataclass
class PathSummary:
    path_index: int
    status: str
    metrics: dict
    alarm_codes: tuple = ()

    def row(self):
        out = {"path_index": self.path_index, "status": self.status, "alarm_codes": ";".join(self.alarm_codes)}
        out.update(self.metrics)
        return out


def _summaries(cfg, columns, indices, metrics, codes, excluded):
    out = []
    for b, i in enumerate(indices):
        vals = {c: float(metrics[c][b]) for c in columns}
        status = "excluded" if excluded[b] else "ok"
        bad = [c for c, v in vals.items() if not math.isfinite(v)]
        cds = list(codes[b])
        if status == "ok" and bad:
            status = "alarm"
            cds.append("nonfinite:" + ",".join(bad))
        out.append(PathSummary(int(i), status, vals, tuple(cds)))
    return out


def run_batch(cfg, lo, hi):
    """Summaries for paths lo..hi-1. A failing batch is retried path by path;
    a path that still raises becomes an alarm carrying the exception name."""
    columns, compute, _ = pipelines.get(cfg["pipeline"])
    cols = columns(cfg)
    idx = np.arange(lo, hi)
    try:
        m, codes, excl = compute(cfg, idx)
        return _summaries(cfg, cols, idx, m, codes, excl)
    except (MRLError, ArithmeticError, np.linalg.LinAlgError, FloatingPointError) as exc:
        if hi - lo == 1:
            nan = {c: float("nan") for c in cols}
            return [PathSummary(int(lo), "alarm", nan, (type(exc).__name__,))]
    out = []
    for i in range(lo, hi):
        out.extend(run_batch(cfg, i, i + 1))
    return out


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


@dataclass
class Aggregate:
    """Order-independent reducer: ok rows kept sorted by path index.

    Means use ``math.fsum`` (exactly rounded), so any merge order gives
    bitwise identical results.
    """

    plan_id: str
    columns: tuple
    index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    values: np.ndarray = None
    n_alarm: int = 0
    n_excluded: int = 0
    excluded_index: tuple = ()

    def __post_init__(self):
        if self.values is None:
            self.values = np.zeros((0, len(self.columns)))

    @property
    def n_ok(self):
        return int(self.index.size)

    @property
    def n_total(self):
        return self.n_ok + self.n_alarm + self.n_excluded

    def column(self, name):
        return self.values[:, self.columns.index(name)]

    def mean(self, name):
        v = self.column(name)
        return math.fsum(v.tolist()) / v.size if v.size else float("nan")

    def sum(self, name):
        return math.fsum(self.column(name).tolist())

    def sorted_column(self, name):
        return np.sort(self.column(name))

    @classmethod
    def from_summaries(cls, plan_id, columns, summaries):
        columns = tuple(columns)
        ok = sorted((s for s in summaries if s.status == "ok"), key=lambda s: s.path_index)
        idx = np.array([s.path_index for s in ok], dtype=np.int64)
        vals = np.array([[s.metrics[c] for c in columns] for s in ok], dtype=float).reshape(len(ok), len(columns))
        alarm = sum(s.status == "alarm" for s in summaries)
        excl = sorted(s.path_index for s in summaries if s.status != "ok")
        return cls(plan_id, columns, idx, vals, alarm, len(excl) - alarm, tuple(excl))


def merge_reports(a, b):
    """Associative, commutative merge of two partial aggregates of one plan."""
    if a.plan_id != b.plan_id or a.columns != b.columns:
        raise ValidationError("cannot merge aggregates of different plans")
    idx = np.concatenate([a.index, b.index])
    if np.unique(idx).size != idx.size:
        raise ValidationError("aggregates overlap in path indices")
    order = np.argsort(idx, kind="stable")
    vals = np.concatenate([a.values, b.values])[order]
    excl = tuple(sorted(a.excluded_index + b.excluded_index))
    return Aggregate(a.plan_id, a.columns, idx[order], vals, a.n_alarm + b.n_alarm,
                     a.n_excluded + b.n_excluded, excl)


# ---------------------------------------------------------------------------
# Checkpoint log
# ---------------------------------------------------------------------------


def _log_columns(columns):
    return ["path_index", "status", "alarm_codes"] + list(columns)


def read_log(path, plan_id, columns):
    """Summaries of complete batches in a log; a foreign or torn log is rejected/trimmed."""
    if not os.path.exists(path):
        return []
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    lines = text.split("\r\n")
    if not lines or not lines[0].startswith("#"):
        raise ValidationError(f"{path}: not a summary log")
    if f"config_sha256={plan_id}" not in lines[0]:
        raise ValidationError(f"{path}: log belongs to a different plan; refusing to resume")
    body = [ln for ln in lines[1:] if ln]
    if text and not text.endswith("\r\n") and body:
        body = body[:-1]  # torn final line
    out = []
    cols = list(columns)
    for rec in csv.DictReader(body):
        if any(rec.get(c) in (None, "") for c in ["path_index", "status"] + cols):
            continue
        codes = tuple(c for c in rec["alarm_codes"].split(";") if c)
        out.append(PathSummary(int(rec["path_index"]), rec["status"], {c: float(rec[c]) for c in cols}, codes))
    return out


def _append(path, summaries, columns, plan_id):
    new = not os.path.exists(path)
    with open(path, "a", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        if new:
            fh.write(io.header_line(plan_id) + "\r\n")
            w.writerow(_log_columns(columns))
        for s in summaries:
            r = s.row()
            w.writerow([io.fmt(r[c]) for c in _log_columns(columns)])
        fh.flush()
        os.fsync(fh.fileno())


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------


@dataclass
class RunResult:
    plan: ExperimentPlan
    aggregate: Aggregate
    summaries: list
    degraded: bool
    report: dict
    tables: dict
    checks: dict

    @property
    def alarm_fraction(self):
        return self.aggregate.n_alarm / max(1, self.aggregate.n_total)


def default_workers():
    try:
        return max(1, int(os.environ.get("MRL_WORKERS", "1")))
    except ValueError:
        raise ValidationError("MRL_WORKERS must be an integer") from None


def run_plan(plan, workers=None, resume=True, max_batches=None):
    """Run all batches of a plan; returns a :class:`RunResult`.

    With ``plan.out_dir`` set, batches are appended to ``paths.log.csv`` as
    they finish and the final artifacts are written there. ``max_batches``
    stops after that many new batches (used to test resumption).
    """
    if not isinstance(plan, ExperimentPlan):
        plan = ExperimentPlan(plan)
    workers = default_workers() if workers is None else int(workers)
    if workers < 1:
        raise ValidationError("workers must be >= 1")
    cfg = plan.config
    cols = plan.columns()
    log = os.path.join(plan.out_dir, "paths.log.csv") if plan.out_dir else None
    if log:
        os.makedirs(plan.out_dir, exist_ok=True)
        if not resume and os.path.exists(log):
            os.remove(log)
    logged = {s.path_index: s for s in (read_log(log, plan.plan_id, cols) if log else [])}
    todo, done = [], []
    for lo, hi in plan.batches():
        if all(i in logged for i in range(lo, hi)):
            done.extend(logged[i] for i in range(lo, hi))
        else:
            todo.append((lo, hi))
    if max_batches is not None:
        todo = todo[:max_batches]
    results = list(done)

    def consume(batch):
        results.extend(batch)
        if log:
            _append(log, batch, cols, plan.plan_id)

    if workers == 1 or len(todo) <= 1:
        for lo, hi in todo:
            consume(run_batch(cfg, lo, hi))
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futs = [ex.submit(run_batch, cfg, lo, hi) for lo, hi in todo]
            for f in futs:
                consume(f.result())
    results.sort(key=lambda s: s.path_index)
    agg = Aggregate.from_summaries(plan.plan_id, cols, results)
    complete = len(results) == plan.n_paths
    report, tables, checks = ({}, {}, {})
    if complete and agg.n_ok:
        report, tables, checks = pipelines.get(cfg["pipeline"])[2](cfg, agg)
    degraded = agg.n_alarm > cfg["alarm_fraction"] * max(1, agg.n_total)
    res = RunResult(plan, agg, results, degraded, report, tables, checks)
    if plan.out_dir and complete:
        write_artifacts(res)
    return res


def write_artifacts(res):
    plan = res.plan
    h = plan.plan_id
    cols = _log_columns(plan.columns())
    io.write_csv(os.path.join(plan.out_dir, "paths.csv"), [s.row() for s in res.summaries], cols, h)
    for name, (tcols, rows) in res.tables.items():
        io.write_csv(os.path.join(plan.out_dir, f"{name}.csv"), rows, tcols, h)
    agg = res.aggregate
    io.write_json(
        os.path.join(plan.out_dir, "report.json"),
        {
            "pipeline": plan.config["pipeline"],
            "config": plan.config,
            "n_paths": plan.n_paths,
            "n_ok": agg.n_ok,
            "n_alarm": agg.n_alarm,
            "n_excluded": agg.n_excluded,
            "excluded_paths": list(agg.excluded_index),
            "degraded": res.degraded,
            "checks": res.checks,
            "report": res.report,
        },
        h,
    )
