"""Multi-seed experiment runner, aggregation and file output."""

from __future__ import annotations

import csv
import json
import logging
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import VARIANTS, ExperimentConfig, derive_seed
from .env import build_env
from .teaching import SessionRecord, first_crossings, make_learner, run_session

log = logging.getLogger(__name__)

LOSS_COLUMNS = [
    "variant",
    "seed",
    "iteration",
    "learner_loss",
    "teacher_estimate_loss",
    "query_state",
    "demo_pool_index",
]
SUMMARY_COLUMNS = ["variant", "eps", "mean_iters", "stderr", "n_censored"]


def fmt(x) -> str:
    """Fixed 9-significant-digit rendering used in every output file."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".9g")


def session_seed(config: ExperimentConfig, k: int) -> int:
    return config.master_seed + k


def _run_job(job) -> SessionRecord:
    config, variant, k = job
    seed = session_seed(config, k)
    env = build_env(derive_seed(seed, "env"), config.roads_per_type, config.densities, config.gamma)
    learner = make_learner(env, config, seed)
    try:
        return run_session(env, learner, variant, config, seed)
    except Exception as exc:  # noqa: BLE001 - one failed session must not abort the batch
        log.error("session %s seed=%d failed: %s", variant, seed, exc)
        rec = SessionRecord(variant, seed, list(config.eps), config.max_iters)
        rec.status, rec.error = "failed", "".join(traceback.format_exception_only(type(exc), exc)).strip()
        return rec


def _stderr(x: np.ndarray, axis=0) -> np.ndarray:
    n = x.shape[axis]
    if n < 2:
        return np.zeros(np.delete(x.shape, axis))
    return x.std(axis=axis, ddof=1) / np.sqrt(n)


def padded_curve(values, length: int) -> np.ndarray:
    """Extend a curve to ``length`` by holding its last value (sessions may stop early)."""
    values = np.asarray(values, dtype=float)
    if len(values) >= length:
        return values[:length]
    return np.r_[values, np.full(length - len(values), values[-1])]


@dataclass
class RunSummary:
    variants: list
    n_seeds: int
    max_iters: int
    eps: list
    learner_curves: dict = field(default_factory=dict)  # variant -> (mean, stderr)
    teacher_curves: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)  # variant -> eps -> row

    def mean_iters(self, variant: str, eps: float) -> float:
        return self.thresholds[variant][eps]["mean_iters"]


def summarize_thresholds(records, eps_list, max_iters: int) -> dict:
    """Mean first-crossing iteration per variant and threshold; censored sessions count as ``max_iters``."""
    table = {}
    by_variant: dict[str, list] = {}
    for rec in records:
        by_variant.setdefault(rec.variant, []).append(rec)
    for variant, recs in by_variant.items():
        table[variant] = {}
        for e in eps_list:
            its, censored = [], 0
            for rec in recs:
                c = first_crossings(rec.learner_losses, [e])[e] if rec.status == "ok" else None
                if c is None:
                    censored += 1
                    c = max_iters
                its.append(c)
            its = np.array(its, dtype=float)
            table[variant][e] = {
                "mean_iters": float(its.mean()),
                "stderr": float(_stderr(its)),
                "n_censored": censored,
            }
    return table


def summarize(records, config: ExperimentConfig) -> RunSummary:
    records = sort_records(records)
    variants = [v for v in VARIANTS if any(r.variant == v for r in records)]
    summary = RunSummary(variants, config.n_seeds, config.max_iters, list(config.eps))
    for v in variants:
        ok = [r for r in records if r.variant == v and r.status == "ok" and r.iterations]
        if not ok:
            continue
        learner = np.stack([padded_curve(r.learner_losses, config.max_iters) for r in ok])
        teacher = np.stack([padded_curve(r.teacher_losses, config.max_iters) for r in ok])
        summary.learner_curves[v] = (learner.mean(axis=0), _stderr(learner))
        summary.teacher_curves[v] = (teacher.mean(axis=0), _stderr(teacher))
    summary.thresholds = summarize_thresholds(records, config.eps, config.max_iters)
    return summary


def sort_records(records):
    order = {v: i for i, v in enumerate(VARIANTS)}
    return sorted(records, key=lambda r: (order[r.variant], r.seed))


def run_experiments(config: ExperimentConfig):
    """Run every (seed, variant) session; returns ``(RunSummary, records)``.

    Within one seed all variants share the environment and the learner's
    initial weights; sessions are independent and may run in parallel.
    """
    jobs = [(config, v, k) for v in config.variants for k in range(config.n_seeds)]
    if config.n_workers > 1:
        with ProcessPoolExecutor(max_workers=config.n_workers) as pool:
            records = list(pool.map(_run_job, jobs))
    else:
        records = []
        for job in jobs:
            records.append(_run_job(job))
            log.info("finished %s seed %d", job[1], job[2])
    records = sort_records(records)
    return summarize(records, config), records


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _rounded(obj):
    if isinstance(obj, float):
        return float(fmt(obj))
    if isinstance(obj, list):
        return [_rounded(x) for x in obj]
    if isinstance(obj, dict):
        return {k: _rounded(v) for k, v in obj.items()}
    return obj


def emit_outputs(summary: RunSummary, records, out_dir, config: ExperimentConfig) -> dict:
    """Write losses.csv, summary.csv, config.json and sessions.jsonl; returns the paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = {name: out / name for name in ("losses.csv", "summary.csv", "config.json", "sessions.jsonl")}
        records = sort_records(records)

        rows = []
        for rec in records:
            for it in rec.iterations:
                rows.append(
                    [
                        rec.variant,
                        rec.seed,
                        it.iteration,
                        fmt(it.learner_loss),
                        fmt(it.teacher_estimate_loss),
                        fmt(it.query_state),
                        fmt(it.demo_index),
                    ]
                )
        _write_csv(paths["losses.csv"], LOSS_COLUMNS, rows)
        _write_csv(paths["summary.csv"], SUMMARY_COLUMNS, summary_rows(summary.thresholds, summary.eps))

        paths["config.json"].write_text(json.dumps(config.resolved(), indent=2, sort_keys=True) + "\n")

        with paths["sessions.jsonl"].open("w") as fh:
            for rec in records:
                fh.write(json.dumps(_rounded({"kind": "session", **rec.header()}), sort_keys=True) + "\n")
                for line in rec.to_lines():
                    fh.write(json.dumps(_rounded({"kind": "iteration", **line}), sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write outputs to {out}: {exc}") from exc
    return paths


def summary_rows(thresholds: dict, eps_list) -> list:
    rows = []
    for v in [v for v in VARIANTS if v in thresholds]:
        for e in eps_list:
            row = thresholds[v][e]
            rows.append([v, fmt(e), fmt(row["mean_iters"]), fmt(row["stderr"]), row["n_censored"]])
    return rows


def read_losses(path) -> dict:
    """Parse losses.csv back into ``{(variant, seed): {"learner": array, "teacher": array}}``."""
    curves: dict = {}
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["variant"], int(row["seed"]))
            c = curves.setdefault(key, {"learner": [], "teacher": []})
            c["learner"].append(float(row["learner_loss"]))
            c["teacher"].append(float(row["teacher_estimate_loss"]))
    return {k: {n: np.array(v) for n, v in c.items()} for k, c in curves.items()}


def summarize_dir(in_dir) -> tuple[dict, ExperimentConfig]:
    """Recompute the threshold table from a previous run's output directory."""
    in_dir = Path(in_dir)
    resolved = json.loads((in_dir / "config.json").read_text())
    config = ExperimentConfig.from_dict({k: v["value"] for k, v in resolved.items()})
    curves = read_losses(in_dir / "losses.csv")
    records = []
    for (variant, seed), c in curves.items():
        rec = SessionRecord(variant, seed, list(config.eps), config.max_iters)
        rec.iterations = [_Loss(x) for x in c["learner"]]
        records.append(rec)
    return summarize_thresholds(records, config.eps, config.max_iters), config


@dataclass
class _Loss:
    learner_loss: float
