import os

import numpy as np
import pytest

from mrl import pipelines
from mrl.errors import ValidationError
from mrl.io import read_csv
from mrl.mc_harness import Aggregate, ExperimentPlan, PathSummary, merge_reports, run_plan

pytestmark = pytest.mark.filterwarnings("ignore::mrl.errors.NumericalDegradationWarning")


def _cfg(**kw):
    cfg = {"version": 1, "pipeline": "simulate", "seed": 11, "n_paths": 20, "N": 32, "N_coarse": 32,
           "batch_size": 4, "diffusion": {"catalog_id": "trig_perturbed", "d": 2}}
    cfg.update(kw)
    return cfg


def _summaries(indices, rng):
    return [PathSummary(int(i), "ok", {"a": float(rng.standard_normal()), "b": float(i)}) for i in indices]


# ---------------------------------------------------------------------------
# merge
# ---------------------------------------------------------------------------


def test_merge_identity_and_commutativity():
    rng = np.random.default_rng(0)
    a = Aggregate.from_summaries("p", ("a", "b"), _summaries(range(0, 10), rng))
    b = Aggregate.from_summaries("p", ("a", "b"), _summaries(range(10, 25), rng))
    empty = Aggregate("p", ("a", "b"))
    ab, ba = merge_reports(a, b), merge_reports(b, a)
    assert np.array_equal(ab.index, ba.index) and ab.values.tobytes() == ba.values.tobytes()
    assert merge_reports(a, empty).values.tobytes() == a.values.tobytes()
    assert ab.mean("a") == ba.mean("a")


def test_merge_tree_of_shards_is_bitwise_stable():
    rng = np.random.default_rng(1)
    summaries = _summaries(range(1600), rng)
    shards = [Aggregate.from_summaries("p", ("a", "b"), summaries[k::16]) for k in range(16)]
    linear = shards[0]
    for s in shards[1:]:
        linear = merge_reports(linear, s)
    level = shards[::-1]
    while len(level) > 1:
        level = [merge_reports(level[i], level[i + 1]) for i in range(0, len(level), 2)]
    tree = level[0]
    assert tree.values.tobytes() == linear.values.tobytes()
    assert tree.mean("a") == linear.mean("a")
    assert np.array_equal(tree.index, np.arange(1600))


def test_merge_rejects_foreign_or_overlapping():
    rng = np.random.default_rng(2)
    a = Aggregate.from_summaries("p", ("a", "b"), _summaries(range(5), rng))
    with pytest.raises(ValidationError):
        merge_reports(a, Aggregate.from_summaries("q", ("a", "b"), _summaries(range(5, 8), rng)))
    with pytest.raises(ValidationError):
        merge_reports(a, a)


# ---------------------------------------------------------------------------
# run_plan
# ---------------------------------------------------------------------------


def test_single_path_run(tmp_path):
    res = run_plan(ExperimentPlan(_cfg(n_paths=1), str(tmp_path)), workers=1)
    assert res.aggregate.n_total == 1
    header, rows = read_csv(tmp_path / "paths.csv")
    assert header.startswith("# config_sha256=") and "code_version=" in header
    assert len(rows) == 1 and rows[0]["path_index"] == "0"


def test_resume_matches_uninterrupted(tmp_path):
    full = run_plan(ExperimentPlan(_cfg(), str(tmp_path / "full")), workers=1)
    part = ExperimentPlan(_cfg(), str(tmp_path / "part"))
    first = run_plan(part, workers=1, max_batches=2)
    assert len(first.summaries) == 8 and not first.report
    done = run_plan(part, workers=1)
    assert done.aggregate.values.tobytes() == full.aggregate.values.tobytes()
    a = (tmp_path / "full" / "paths.csv").read_bytes()
    b = (tmp_path / "part" / "paths.csv").read_bytes()
    assert a == b


def test_resume_drops_torn_line(tmp_path):
    plan = ExperimentPlan(_cfg(), str(tmp_path))
    run_plan(plan, workers=1, max_batches=2)
    log = tmp_path / "paths.log.csv"
    text = log.read_bytes()
    log.write_bytes(text[: len(text) - 7])  # cut the last record mid-line
    res = run_plan(plan, workers=1)
    ref = run_plan(ExperimentPlan(_cfg(), None), workers=1)
    assert res.aggregate.values.tobytes() == ref.aggregate.values.tobytes()
    assert res.aggregate.n_total == 20


def test_foreign_log_refused(tmp_path):
    run_plan(ExperimentPlan(_cfg(), str(tmp_path)), workers=1, max_batches=1)
    with pytest.raises(ValidationError):
        run_plan(ExperimentPlan(_cfg(seed=12), str(tmp_path)), workers=1)
    res = run_plan(ExperimentPlan(_cfg(seed=12), str(tmp_path)), workers=1, resume=False)
    assert res.aggregate.n_total == 20


def test_worker_count_does_not_change_artifacts(tmp_path):
    run_plan(ExperimentPlan(_cfg(), str(tmp_path / "w1")), workers=1)
    run_plan(ExperimentPlan(_cfg(), str(tmp_path / "w2")), workers=2)
    for name in ("paths.csv", "report.json"):
        assert (tmp_path / "w1" / name).read_bytes() == (tmp_path / "w2" / name).read_bytes()


def test_alarm_accounting_and_degraded(tmp_path, monkeypatch):
    columns, compute, finalize = pipelines.PIPELINES["simulate"]

    def flaky(cfg, idx):
        m, codes, excl = compute(cfg, idx)
        m["phi_sup"] = np.where(np.isin(idx, [3, 17]), np.nan, m["phi_sup"])
        excl = np.asarray(excl) | (idx == 5)
        return m, codes, excl

    monkeypatch.setitem(pipelines.PIPELINES, "simulate", (columns, flaky, finalize))
    res = run_plan(ExperimentPlan(_cfg(), str(tmp_path / "a")), workers=1)
    agg = res.aggregate
    assert (agg.n_ok, agg.n_alarm, agg.n_excluded) == (17, 2, 1)
    assert agg.excluded_index == (3, 5, 17)
    assert res.degraded
    status = {s.path_index: s for s in res.summaries}
    assert status[3].status == "alarm" and status[3].alarm_codes[-1].startswith("nonfinite:")
    assert status[5].status == "excluded"
    tolerant = run_plan(ExperimentPlan(_cfg(alarm_fraction=0.2), None), workers=1)
    assert not tolerant.degraded


def test_plan_rejects_non_mc_pipeline():
    with pytest.raises(ValidationError):
        ExperimentPlan({"version": 1, "pipeline": "hormander_check"})
    with pytest.raises(ValidationError):
        run_plan(ExperimentPlan(_cfg()), workers=0)
