"""Ablation grid runner and report generation.

A grid is setups x seeds; every cell trains one model, evaluates it on the
test split and contributes one row to metrics.csv. Cells are independent
and deterministic, so rerunning a spec reproduces every output file byte
for byte. Result files are written atomically (temp file then rename).
"""

from __future__ import annotations

import csv
import os
import shutil
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import metrics as M
from .features import KernelSpec
from .fusion import CANONICAL_SETUPS, EmbeddingTable, FeatureConfig, load_embeddings
from .nn import BackboneSpec, TrainConfig, predict_scores, save_checkpoint, train, write_history_csv
from .pipeline import AugmentPolicy, Manifest, load_manifest, split_train_val

METRICS_HEADER = ["setup", "seed", "auc", "f1", "prc", "rec", "acc"]
AGGREGATE_HEADER = ["setup", "n_seeds"] + [
    f"{name}_{stat}" for name in M.METRIC_NAMES for stat in ("mean", "std")
]
ROC_HEADER = ["setup", "fpr", "tpr_mean", "tpr_std"]


@dataclass(frozen=True)
class ExperimentSpec:
    """One ablation request: which setups, seeds, data and output layout."""

    manifest_path: str
    out_dir: str
    setups: tuple[str, ...] = tuple(CANONICAL_SETUPS)
    seeds: tuple[int, ...] = (0, 1, 2, 3)
    embeddings_path: str | None = None
    train_config: TrainConfig = field(default_factory=TrainConfig)
    policy: AugmentPolicy = field(default_factory=AugmentPolicy)
    arch: BackboneSpec = field(default_factory=BackboneSpec)
    kspec: KernelSpec = field(default_factory=KernelSpec)
    threshold: float | str = 0.5
    val_frac: float = 0.8

    def __post_init__(self):
        unknown = [s for s in self.setups if s not in CANONICAL_SETUPS]
        if unknown:
            raise ValueError(f"unknown setups: {', '.join(unknown)}")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if isinstance(self.threshold, str) and self.threshold != "tune":
            raise ValueError("threshold must be a number or 'tune'")
        object.__setattr__(self, "setups", tuple(self.setups))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))


def _atomic_write(path: Path, write_fn) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", newline="") as fh:
        write_fn(fh)
    os.replace(tmp, path)


def _prepare_manifest(manifest: Manifest, seed: int, frac: float) -> Manifest:
    # Respect a preassigned train/val split; otherwise split per seed.
    if manifest.split_indices("val"):
        return manifest
    return split_train_val(manifest, frac=frac, seed=seed)


def run_single(
    spec: ExperimentSpec,
    manifest: Manifest,
    setup: str,
    seed: int,
    emb: EmbeddingTable | None,
):
    """Train one (setup, seed) cell and score it on the test split."""
    cfg = FeatureConfig.from_name(setup)
    tc = TrainConfig(**{**_config_as_dict(spec.train_config), "seed": seed})
    prepared = _prepare_manifest(manifest, seed, spec.val_frac)
    result = train(prepared, cfg, tc, spec.policy, spec.arch, emb, spec.kspec)
    test_scored = predict_scores(
        result.params, prepared, "test", cfg, spec.policy, tc.batch_size, emb, spec.kspec
    )
    if spec.threshold == "tune":
        val_scored = predict_scores(
            result.params, prepared, "val", cfg, spec.policy, tc.batch_size, emb, spec.kspec
        )
        thr = M.best_f1_threshold(val_scored)
    else:
        thr = float(spec.threshold)
    run_metrics = M.evaluate_scores(test_scored, thr)
    return run_metrics, result


def _config_as_dict(tc: TrainConfig) -> dict:
    return {f.name: getattr(tc, f.name) for f in fields(TrainConfig)}


@dataclass
class GridOutcome:
    rows: list[dict]
    failures: dict[str, str]

    @property
    def ok(self) -> bool:
        return not self.failures


def run_grid(spec: ExperimentSpec, log=print) -> GridOutcome:
    """Run every (setup, seed) cell; a failing cell aborts its setup only.

    Writes metrics.csv, aggregate.csv, roc/<setup>.csv, history and
    checkpoint files under spec.out_dir.
    """
    out_dir = Path(spec.out_dir)
    (out_dir / "roc").mkdir(parents=True, exist_ok=True)
    (out_dir / "checkpoints").mkdir(exist_ok=True)
    (out_dir / "history").mkdir(exist_ok=True)
    manifest = load_manifest(spec.manifest_path)
    emb = load_embeddings(spec.embeddings_path) if spec.embeddings_path else None
    needs_emb = [s for s in spec.setups if CANONICAL_SETUPS[s][4]]
    if needs_emb and emb is None:
        raise ValueError(f"setups {', '.join(needs_emb)} need --embeddings")

    rows: list[dict] = []
    aggregates: list[tuple[str, M.AggregateMetrics]] = []
    failures: dict[str, str] = {}
    for setup in spec.setups:
        runs: list[M.RunMetrics] = []
        for seed in spec.seeds:
            try:
                run_metrics, result = run_single(spec, manifest, setup, seed, emb)
            except Exception as exc:  # noqa: BLE001 - one cell must not kill the grid
                failures[setup] = f"seed {seed}: {exc}"
                log(f"[{setup}] FAILED at seed {seed}: {exc}", file=sys.stderr)
                break
            runs.append(run_metrics)
            rows.append({"setup": setup, "seed": seed, **run_metrics.as_row()})
            save_checkpoint(result, out_dir / "checkpoints" / f"{setup}_{seed}.bin")
            write_history_csv(result.history, out_dir / "history" / f"{setup}_{seed}.csv")
            log(
                f"[{setup}] seed {seed}: auc={run_metrics.auc:.3f} f1={run_metrics.f1:.3f}"
                f" (best epoch {result.best_epoch})"
            )
        if setup not in failures and runs:
            aggregates.append((setup, M.aggregate(runs)))

    _atomic_write(out_dir / "metrics.csv", lambda fh: _write_metrics(fh, rows))
    _atomic_write(out_dir / "aggregate.csv", lambda fh: _write_aggregates(fh, aggregates))
    for setup, agg in aggregates:
        _atomic_write(
            out_dir / "roc" / f"{setup}.csv", lambda fh, s=setup, a=agg: _write_roc(fh, s, a)
        )
    return GridOutcome(rows=rows, failures=failures)


def _write_metrics(fh, rows: list[dict]) -> None:
    writer = csv.writer(fh)
    writer.writerow(METRICS_HEADER)
    for row in rows:
        writer.writerow(
            [row["setup"], row["seed"]] + [f"{row[m]:.6f}" for m in M.METRIC_NAMES]
        )


def _write_aggregates(fh, aggregates) -> None:
    writer = csv.writer(fh)
    writer.writerow(AGGREGATE_HEADER)
    for setup, agg in aggregates:
        cells = [setup, agg.n_runs]
        for name in M.METRIC_NAMES:
            cells += [f"{agg.mean[name]:.6f}", f"{agg.std[name]:.6f}"]
        writer.writerow(cells)


def _write_roc(fh, setup: str, agg: M.AggregateMetrics) -> None:
    writer = csv.writer(fh)
    writer.writerow(ROC_HEADER)
    for fpr, mean, std in zip(agg.fpr_grid, agg.tpr_mean, agg.tpr_std):
        writer.writerow([setup, f"{fpr:.2f}", f"{mean:.6f}", f"{std:.6f}"])


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def load_metrics_csv(path: str | Path) -> list[dict]:
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != METRICS_HEADER:
            raise ValueError(f"malformed metrics CSV header in {path}")
        for row in reader:
            try:
                rows.append(
                    {
                        "setup": row["setup"],
                        "seed": int(row["seed"]),
                        **{m: float(row[m]) for m in M.METRIC_NAMES},
                    }
                )
            except (TypeError, ValueError) as exc:
                raise ValueError(f"malformed metrics row in {path}: {row}") from exc
    if not rows:
        raise ValueError(f"metrics CSV has no rows: {path}")
    return rows


def _setup_means(rows: list[dict]) -> dict[str, dict[str, float]]:
    by_setup: dict[str, list[dict]] = {}
    for row in rows:
        by_setup.setdefault(row["setup"], []).append(row)
    return {
        setup: {m: float(np.mean([r[m] for r in group])) for m in M.METRIC_NAMES}
        for setup, group in by_setup.items()
    }


def _ranked(means: dict[str, dict[str, float]], key: str) -> list[str]:
    # Descending metric; ties broken by setup name for a stable order.
    return sorted(means, key=lambda s: (-means[s][key], s))


def _format_table(means: dict[str, dict[str, float]], order: list[str]) -> str:
    lines = [f"{'setup':<10} {'AUC':>6} {'F1':>6} {'PRC':>6} {'REC':>6} {'ACC':>6}"]
    for setup in order:
        m = means[setup]
        lines.append(
            f"{setup:<10} {m['auc']:>6.3f} {m['f1']:>6.3f} {m['prc']:>6.3f}"
            f" {m['rec']:>6.3f} {m['acc']:>6.3f}"
        )
    return "\n".join(lines) + "\n"


def write_report(
    metrics_path: str | Path,
    out_dir: str | Path,
    roc_dir: str | Path | None = None,
    top_k: int = 3,
    log=print,
) -> dict[str, list[str]]:
    """Ranked tables (by AUC and by F1) plus ROC band files for the leaders.

    Band files for the top_k setups of each ranking (plus baseline, when
    present) are copied from roc_dir. Returns the two rankings.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = load_metrics_csv(metrics_path)
    means = _setup_means(rows)
    rankings = {}
    for key in ("auc", "f1"):
        order = _ranked(means, key)
        rankings[key] = order
        _atomic_write(
            out_dir / f"report_by_{key}.csv",
            lambda fh, o=order: _write_report_csv(fh, means, o),
        )
        (out_dir / f"report_by_{key}.txt").write_text(_format_table(means, order))
    selected: list[str] = []
    for key in ("auc", "f1"):
        for setup in rankings[key][:top_k]:
            if setup not in selected:
                selected.append(setup)
    if "baseline" in means and "baseline" not in selected:
        selected.append("baseline")
    if roc_dir is not None:
        band_dir = out_dir / "bands"
        band_dir.mkdir(exist_ok=True)
        for setup in selected:
            src = Path(roc_dir) / f"{setup}.csv"
            if src.exists():
                shutil.copyfile(src, band_dir / f"{setup}.csv")
            else:
                log(f"no ROC band file for {setup!r} in {roc_dir}", file=sys.stderr)
    return rankings


def _write_report_csv(fh, means, order) -> None:
    writer = csv.writer(fh)
    writer.writerow(["setup", "auc", "f1", "prc", "rec", "acc"])
    for setup in order:
        writer.writerow([setup] + [f"{means[setup][m]:.6f}" for m in M.METRIC_NAMES])
