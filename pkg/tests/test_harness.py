import csv
import json
from dataclasses import replace
from pathlib import Path

import jsonschema
import numpy as np
import pytest

import irlteach.harness as harness
from irlteach.config import PROVENANCE, ConfigError, ExperimentConfig, child_rng, derive_seed
from irlteach.harness import (
    emit_outputs,
    read_losses,
    run_experiments,
    summarize,
    summarize_dir,
    summarize_thresholds,
)
from irlteach.teaching import IterationRecord, SessionRecord

SESSION_SCHEMA = json.loads((Path(harness.__file__).parent / "schemas" / "session.schema.json").read_text())

TINY = ExperimentConfig(
    n_seeds=2, roads_per_type=1, n_weight_samples=30, mce_iters=3, max_iters=4, variants=["Agn", "Var", "Cur"]
)


@pytest.fixture(scope="module")
def tiny_run():
    return run_experiments(TINY)


def fake_record(variant, seed, losses, status="ok"):
    rec = SessionRecord(variant, seed, [2.0, 1.0], 5)
    rec.status = status
    rec.iterations = [IterationRecord(i + 1, None, None, None, None, x, 0.0) for i, x in enumerate(losses)]
    return rec


# --- config ------------------------------------------------------------------

def test_derive_seed():
    assert derive_seed(0, "env") == 0x9E3779B97F4A7C15
    assert derive_seed(5, 2) == (5 + 2 * 0x9E3779B97F4A7C15) % 2**64
    assert child_rng(1, "env").random() != child_rng(1, "learner").random()


def test_config_defaults_and_quick():
    cfg = ExperimentConfig()
    assert (cfg.n_seeds, cfg.n_weight_samples, cfg.sphere_radius, cfg.alpha, cfg.lam) == (16, 5000, 24.0, 0.95, 0.4)
    q = cfg.quick()
    assert (q.roads_per_type * 8, q.n_weight_samples, q.n_seeds, q.max_iters) == (8, 500, 4, 60)
    assert cfg.c == cfg.beta
    assert replace(cfg, softmax_c=3.0).c == 3.0


@pytest.mark.parametrize(
    "doc",
    [{"variants": ["Foo"]}, {"n_seeds": 0}, {"gamma": 1.5}, {"eps": []}, {"unknown_key": 1}, {"pool_policy": "x"}],
)
def test_config_errors(doc):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(doc)


def test_config_file_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(bad)
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(bad)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(tmp_path / "missing.json")


def test_resolved_config_has_provenance():
    resolved = ExperimentConfig().resolved()
    assert set(resolved) == set(ExperimentConfig().to_dict())
    assert all(v["source"] in {"paper", "decision", "run"} for v in resolved.values())
    assert resolved["n_weight_samples"]["source"] == "paper"
    assert resolved["beta"]["source"] == "decision"
    assert set(PROVENANCE) <= set(resolved)


# --- aggregation ---------------------------------------------------------------

def test_thresholds_with_censoring():
    recs = [fake_record("Cur", 0, [3, 1.5, 0.4]), fake_record("Cur", 1, [3, 2.5, 2.2, 2.1, 2.05])]
    table = summarize_thresholds(recs, [2.0, 1.0], 5)
    assert table["Cur"][2.0] == {"mean_iters": 3.5, "stderr": pytest.approx(1.5), "n_censored": 1}
    assert table["Cur"][1.0]["mean_iters"] == 4.0 and table["Cur"][1.0]["n_censored"] == 1


def test_failed_sessions_count_as_censored():
    recs = [fake_record("Var", 0, [0.1]), fake_record("Var", 1, [], status="failed")]
    row = summarize_thresholds(recs, [1.0], 7)["Var"][1.0]
    assert row["mean_iters"] == 4.0 and row["n_censored"] == 1


def test_aggregation_is_permutation_invariant():
    rng = np.random.default_rng(0)
    recs = [fake_record("Rnd", s, list(rng.uniform(0, 3, 5))) for s in range(6)]
    cfg = replace(ExperimentConfig(), max_iters=5, eps=[2.0, 1.0])
    a = summarize(recs, cfg)
    b = summarize(list(reversed(recs)), cfg)
    assert a.thresholds == b.thresholds
    np.testing.assert_array_equal(a.learner_curves["Rnd"][0], b.learner_curves["Rnd"][0])


def test_curves_pad_with_last_value():
    recs = [fake_record("Cur", 0, [3.0, 0.2]), fake_record("Cur", 1, [3.0, 2.0, 1.0, 0.5])]
    cfg = replace(ExperimentConfig(), max_iters=4, eps=[2.0, 1.0])
    mean, se = summarize(recs, cfg).learner_curves["Cur"]
    np.testing.assert_allclose(mean, [3.0, 1.1, 0.6, 0.35])
    assert se[0] == 0.0


# --- full pipeline -------------------------------------------------------------

def test_run_counts_and_sharing(tiny_run):
    summary, records = tiny_run
    assert len(records) == 6
    assert [(r.variant, r.seed) for r in records] == [
        ("Agn", 0), ("Agn", 1), ("Var", 0), ("Var", 1), ("Cur", 0), ("Cur", 1)
    ]
    assert all(r.status == "ok" for r in records)
    assert set(summary.thresholds) == {"Agn", "Var", "Cur"}
    # same seed: same starting learner, so the first pre-update evaluation agrees
    first = {r.variant: r for r in records if r.seed == 0}
    assert first["Agn"].iterations[0].teacher_estimate_loss >= 0


def test_run_is_deterministic(tiny_run):
    summary, records = run_experiments(TINY)
    assert summary.thresholds == tiny_run[0].thresholds
    assert [r.learner_theta for r in records] == [r.learner_theta for r in tiny_run[1]]


def test_outputs(tmp_path, tiny_run):
    summary, records = tiny_run
    paths = emit_outputs(summary, records, tmp_path / "a", TINY)
    rows = list(csv.DictReader(paths["losses.csv"].open()))
    assert len(rows) == sum(len(r.iterations) for r in records)
    assert list(rows[0]) == harness.LOSS_COLUMNS
    srows = list(csv.DictReader(paths["summary.csv"].open()))
    assert len(srows) == 3 * 3
    cfg = json.loads(paths["config.json"].read_text())
    assert cfg["max_iters"] == {"value": 4, "source": "decision"}

    lines = [json.loads(x) for x in paths["sessions.jsonl"].read_text().splitlines()]
    for line in lines:
        jsonschema.validate(line, SESSION_SCHEMA)
    assert sum(x["kind"] == "session" for x in lines) == 6

    again = emit_outputs(summary, records, tmp_path / "b", TINY)
    for name in paths:
        assert paths[name].read_bytes() == again[name].read_bytes()


def test_losses_parse_back(tmp_path, tiny_run):
    summary, records = tiny_run
    paths = emit_outputs(summary, records, tmp_path, TINY)
    curves = read_losses(paths["losses.csv"])
    for rec in records:
        back = curves[(rec.variant, rec.seed)]
        expected = np.array([float(format(x, ".9g")) for x in rec.learner_losses])
        np.testing.assert_array_equal(back["learner"], expected)


def test_summarize_dir_reproduces_summary(tmp_path, tiny_run):
    summary, records = tiny_run
    emit_outputs(summary, records, tmp_path, TINY)
    table, cfg = summarize_dir(tmp_path)
    assert table == summary.thresholds
    assert cfg == TINY


def test_failing_session_is_recorded(monkeypatch):
    real = harness.run_session

    def flaky(env, learner, variant, config, seed):
        if variant == "Var" and seed == 1:
            raise FloatingPointError("boom")
        return real(env, learner, variant, config, seed)

    monkeypatch.setattr(harness, "run_session", flaky)
    _, records = run_experiments(replace(TINY, variants=["Var"]))
    failed = [r for r in records if r.status == "failed"]
    assert len(failed) == 1 and "boom" in failed[0].error


def test_emit_reports_path_on_io_error(tmp_path, tiny_run):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        emit_outputs(*tiny_run, blocker / "out", TINY)


def test_parallel_matches_serial(tiny_run):
    summary, records = run_experiments(replace(TINY, n_workers=2, variants=["Agn", "Var", "Cur"]))
    assert summary.thresholds == tiny_run[0].thresholds
    assert [r.learner_theta for r in records] == [r.learner_theta for r in tiny_run[1]]
