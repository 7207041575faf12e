"""Command-line interface: ingest, embed-import, run, report, synth."""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .experiments import ExperimentSpec, run_grid, write_report
from .features import KernelSpec
from .fusion import CANONICAL_SETUPS, EmbeddingTable, load_embeddings, save_embeddings
from .imagecore import load_gray
from .nn import BackboneSpec, TrainConfig
from .pipeline import (
    AugmentPolicy,
    LABEL_NAMES,
    Manifest,
    ManifestRecord,
    generate_synthetic_dataset,
    load_manifest,
    save_manifest,
    write_class_embeddings,
)

CONFIG_SCHEMA_VERSION = 1
_IMAGE_SUFFIXES = (".pgm", ".pnm", ".png")

_TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"seed"}
_POLICY_KEYS = {f.name for f in fields(AugmentPolicy)}
_ARCH_KEYS = {"stem_channels", "stage_channels"}
_OTHER_KEYS = {"tau", "val_frac"}


def parse_config_file(path: str | Path) -> dict:
    """Flat key = value config with a mandatory schema_version line.

    Supported keys: any TrainConfig field except seed, any AugmentPolicy
    field, stem_channels, stage_channels, tau and val_frac. Lists are
    comma-separated; '#' starts a comment.
    """
    raw: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in raw:
            raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
        raw[key] = value
    if raw.get("schema_version") is None:
        raise ValueError(f"{path}: missing schema_version")
    if int(raw.pop("schema_version")) != CONFIG_SCHEMA_VERSION:
        raise ValueError(f"{path}: unsupported schema_version")
    known = _TRAIN_KEYS | _POLICY_KEYS | _ARCH_KEYS | _OTHER_KEYS
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"{path}: unknown config keys: {', '.join(sorted(unknown))}")
    return raw


def _coerce(value: str, like):
    if isinstance(like, bool):
        return value.lower() in ("1", "true", "yes")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    if isinstance(like, tuple):
        items = [v.strip() for v in value.split(",") if v.strip()]
        elem = like[0] if like else 0.0
        return tuple(type(elem)(v) for v in items)
    return value


def build_spec_pieces(raw: dict) -> tuple[TrainConfig, AugmentPolicy, BackboneSpec, KernelSpec, float]:
    """Materialize config-file overrides on top of the defaults."""
    tc_kwargs, pol_kwargs, arch_kwargs = {}, {}, {}
    defaults_tc = TrainConfig()
    defaults_pol = AugmentPolicy()
    defaults_arch = BackboneSpec()
    for key, value in raw.items():
        if key in _TRAIN_KEYS:
            tc_kwargs[key] = _coerce(value, getattr(defaults_tc, key))
        elif key in _POLICY_KEYS:
            pol_kwargs[key] = _coerce(value, getattr(defaults_pol, key))
        elif key in _ARCH_KEYS:
            arch_kwargs[key] = _coerce(value, getattr(defaults_arch, key))
    tau = float(raw.get("tau", 0.5))
    val_frac = float(raw.get("val_frac", 0.8))
    return (
        TrainConfig(**tc_kwargs),
        AugmentPolicy(**pol_kwargs),
        BackboneSpec(**arch_kwargs),
        KernelSpec(tau=tau),
        val_frac,
    )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_ingest(args) -> int:
    src = Path(args.src)
    records: list[ManifestRecord] = []
    skipped: list[str] = []

    def scan_class_dir(class_dir: Path, label: int, split: str) -> None:
        for path in sorted(class_dir.rglob("*")):
            if path.suffix.lower() not in _IMAGE_SUFFIXES or not path.is_file():
                continue
            try:
                load_gray(path)
            except (OSError, ValueError) as exc:
                skipped.append(f"{path}: {exc}")
                continue
            rel = path.relative_to(src).with_suffix("")
            rec_id = "_".join(rel.parts)
            records.append(
                ManifestRecord(id=rec_id, path=str(path), label=label, split=split)
            )

    split_dirs = [d for d in ("train", "val", "test") if (src / d).is_dir()]
    if split_dirs:
        for split in split_dirs:
            for label, name in enumerate(LABEL_NAMES):
                class_dir = src / split / name
                if class_dir.is_dir():
                    # Records under train/ stay unsplit so the stratified
                    # train/val split happens at run time.
                    scan_class_dir(class_dir, label, "" if split == "train" else split)
    else:
        for label, name in enumerate(LABEL_NAMES):
            class_dir = src / name
            if class_dir.is_dir():
                scan_class_dir(class_dir, label, "")

    for line in skipped:
        print(f"skipped unreadable file: {line}", file=sys.stderr)
    if not records:
        print(f"error: no benign/malignant images found under {src}", file=sys.stderr)
        return 1
    records.sort(key=lambda r: r.path)
    manifest = Manifest(tuple(records))
    save_manifest(manifest, args.out)
    counts = manifest.counts()
    summary = ", ".join(f"{split}/{label}: {n}" for (split, label), n in sorted(counts.items()))
    print(f"wrote {args.out} with {len(records)} records ({summary})")
    return 0


def cmd_embed_import(args) -> int:
    src = Path(args.file)
    if src.suffix == ".npz":
        if not args.out:
            print("error: converting .npz requires --out", file=sys.stderr)
            return 2
        with np.load(src, allow_pickle=False) as data:
            ids = [str(v) for v in data["ids"]]
            vectors = np.asarray(data["vectors"], dtype=np.float32)
        if vectors.ndim != 2 or len(ids) != vectors.shape[0]:
            print("error: npz needs 'ids' (n) and 'vectors' (n, dim)", file=sys.stderr)
            return 1
        table = EmbeddingTable(vectors.shape[1])
        for sample_id, vec in zip(ids, vectors):
            table.add(sample_id, vec)
        save_embeddings(table, args.out)
        print(f"wrote {args.out}: {len(table)} embeddings of dim {table.dim}")
        return 0
    table = load_embeddings(src)
    print(f"{src}: valid EMB1 file, {len(table)} embeddings of dim {table.dim}")
    return 0


def _parse_seeds(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _parse_setups(text: str) -> tuple[str, ...]:
    if text == "all-setups":
        return tuple(CANONICAL_SETUPS)
    return tuple(s.strip() for s in text.split(",") if s.strip())


def cmd_run(args) -> int:
    overrides = parse_config_file(args.config) if args.config else {}
    tc, pol, arch, kspec, val_frac = build_spec_pieces(overrides)
    threshold: float | str = args.threshold
    if threshold != "tune":
        threshold = float(threshold)
    spec = ExperimentSpec(
        manifest_path=args.manifest,
        out_dir=args.out,
        setups=_parse_setups(args.setups),
        seeds=_parse_seeds(args.seeds),
        embeddings_path=args.embeddings,
        train_config=tc,
        policy=pol,
        arch=arch,
        kspec=kspec,
        threshold=threshold,
        val_frac=val_frac,
    )
    outcome = run_grid(spec)
    if outcome.failures:
        for setup, msg in outcome.failures.items():
            print(f"setup {setup!r} failed: {msg}", file=sys.stderr)
        return 1
    print(f"all {len(spec.setups) * len(spec.seeds)} cells completed; outputs in {args.out}")
    return 0


def cmd_report(args) -> int:
    metrics_path = Path(args.metrics)
    roc_dir = Path(args.roc_dir) if args.roc_dir else metrics_path.parent / "roc"
    rankings = write_report(metrics_path, args.out, roc_dir if roc_dir.is_dir() else None)
    print(f"top by AUC: {', '.join(rankings['auc'][:3])}")
    print(f"top by F1:  {', '.join(rankings['f1'][:3])}")
    print(f"report written to {args.out}")
    return 0


def cmd_synth(args) -> int:
    manifest_path = generate_synthetic_dataset(
        args.out,
        variant=args.kind,
        per_class=args.per_class,
        size=args.size,
        test_frac=args.test_frac,
        seed=args.seed,
    )
    print(f"wrote {manifest_path}")
    if args.embeddings_out:
        manifest = load_manifest(manifest_path)
        write_class_embeddings(manifest, args.embeddings_out, dim=args.embed_dim, seed=args.seed)
        print(f"wrote {args.embeddings_out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mammofuse",
        description="Handcrafted-feature fusion experiments for ROI classification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build a manifest CSV from class-labeled image folders")
    p.add_argument("src", help="directory with benign/ and malignant/ (optionally under train/ test/)")
    p.add_argument("--out", required=True, help="manifest CSV to write")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("embed-import", help="validate an EMB1 file or convert an .npz to EMB1")
    p.add_argument("file", help=".emb1 file to validate, or .npz with 'ids' and 'vectors'")
    p.add_argument("--out", help="EMB1 output path (required for conversion)")
    p.set_defaults(fn=cmd_embed_import)

    p = sub.add_parser("run", help="train and evaluate a grid of setups x seeds")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument(
        "--setups",
        default="all-setups",
        help=f"comma-separated setup names (default: all 16: {', '.join(CANONICAL_SETUPS)})",
    )
    p.add_argument(
        "--seeds",
        default="0,1,2,3",
        help="comma-separated seeds; each setup is trained once per seed (default: 0,1,2,3)",
    )
    p.add_argument("--embeddings", help="EMB1 file (required for dino_* setups)")
    p.add_argument("--config", help="key = value overrides file (see README)")
    p.add_argument(
        "--threshold",
        default="0.5",
        help="operating threshold for PRC/REC/F1/ACC, or 'tune' to pick the best-F1 "
        "threshold on the validation split (default: 0.5)",
    )
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("report", help="ranked tables and ROC band files from a metrics CSV")
    p.add_argument("metrics", help="metrics.csv produced by run")
    p.add_argument("--out", required=True, help="report output directory")
    p.add_argument("--roc-dir", help="directory with per-setup ROC CSVs (default: sibling roc/)")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("synth", help="generate a synthetic PGM dataset plus manifest")
    p.add_argument("--kind", choices=("texture", "edges"), default="texture")
    p.add_argument("--out", required=True, help="dataset directory")
    p.add_argument("--per-class", type=int, default=500)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--test-frac", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--embeddings-out", help="also write a class-informative EMB1 file here")
    p.add_argument("--embed-dim", type=int, default=384)
    p.set_defaults(fn=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
