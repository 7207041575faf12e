"""Mini-batch training loop with staged unfreezing and checkpointing.

Training is bit-reproducible: initialization, epoch shuffles, augmentation
and dropout all derive from independent seeded streams, so two runs with
the same config and data produce identical parameters and history.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..features import DEFAULT_KERNELS, KernelSpec
from ..fusion import EmbeddingTable, FeatureConfig
from ..metrics import ScoredSet, auc, roc_curve
from ..pipeline import AugmentPolicy, Manifest, assemble_batch, batches
from .model import (
    BackboneSpec,
    ConvParams,
    HeadParams,
    ModelParams,
    backward_batch,
    forward_batch,
    init_params,
)
from .optim import AdamState, TrainConfig, adam_step, bce_with_logits, lr_at, sigmoid, smooth_label, unfreeze_plan

_TAG_INIT = 21
_TAG_DROPOUT = 22

CHECKPOINT_MAGIC = b"MFCK"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_auc: float
    lr: float
    trainable_params: int


@dataclass(eq=False)
class TrainResult:
    params: ModelParams  # checkpoint with the best validation AUC
    history: list[EpochStats]
    best_epoch: int
    best_val_auc: float
    setup_name: str
    train_config: TrainConfig


def _check_embedding_coverage(manifest: Manifest, splits: tuple[str, ...], emb: EmbeddingTable):
    for split in splits:
        for i in manifest.split_indices(split):
            rec = manifest.records[i]
            if rec.id not in emb:
                raise KeyError(f"no embedding for id {rec.id!r} (split {split!r})")


def trainable_param_count(mp: ModelParams, plan: dict[str, float]) -> int:
    return sum(mp.group_size(g) for g, mult in plan.items() if mult > 0.0)


def train(
    manifest: Manifest,
    cfg: FeatureConfig,
    tc: TrainConfig,
    pol: AugmentPolicy | None = None,
    arch: BackboneSpec | None = None,
    emb: EmbeddingTable | None = None,
    kspec: KernelSpec = DEFAULT_KERNELS,
) -> TrainResult:
    """Train on the manifest's train split, keeping the best-val-AUC checkpoint."""
    pol = pol or AugmentPolicy()
    arch = arch or BackboneSpec()
    for split in ("train", "val"):
        idxs = manifest.split_indices(split)
        if not idxs:
            raise ValueError(f"manifest has an empty {split!r} split")
    val_labels = {manifest.records[i].label for i in manifest.split_indices("val")}
    if val_labels != {0, 1}:
        raise ValueError("validation split needs both classes for AUC selection")
    emb_dim = 0
    if cfg.use_dino:
        if emb is None:
            raise KeyError(f"setup {cfg.setup_name!r} needs an embedding table")
        _check_embedding_coverage(manifest, ("train", "val"), emb)
        emb_dim = emb.dim

    rng_init = np.random.default_rng([tc.seed, _TAG_INIT])
    mp = init_params(arch, emb_dim=emb_dim, rng=rng_init)
    adam_states: dict[str, AdamState] = {}
    history: list[EpochStats] = []
    best_auc = -1.0
    best_epoch = -1
    best_params = mp.copy()

    for epoch in range(tc.epochs):
        lr = lr_at(epoch, tc)
        plan = unfreeze_plan(epoch, tc, arch.n_stages, cfg.setup_name)
        loss_sum = 0.0
        n_seen = 0
        for batch_idx, idxs in enumerate(
            batches(manifest, "train", tc.batch_size, tc.seed, epoch)
        ):
            x, e, y = assemble_batch(manifest, idxs, cfg, pol, "train", tc.seed, epoch, emb, kspec)
            drop_rng = np.random.default_rng([tc.seed, _TAG_DROPOUT, epoch, batch_idx])
            logits, cache = forward_batch(mp, x, e, train_mode=True, rng=drop_rng)
            targets = np.array([smooth_label(int(v), tc.label_smooth) for v in y])
            losses = bce_with_logits(logits, targets)
            batch_loss = float(np.mean(losses))
            if not np.isfinite(batch_loss):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}, batch {batch_idx}")
            loss_sum += float(np.sum(losses))
            n_seen += len(idxs)
            dlogits = (sigmoid(logits) - targets) / len(idxs)
            trainable = {g for g, mult in plan.items() if mult > 0.0}
            grads = backward_batch(mp, cache, dlogits, needed=trainable)
            for group, mult in plan.items():
                if mult <= 0.0:
                    continue
                group_params = mp.group_arrays(group)
                if group not in adam_states:
                    adam_states[group] = AdamState.zeros_like(group_params)
                group_grads = {k: grads[k] for k in group_params}
                adam_step(group_params, group_grads, adam_states[group], lr * mult, tc)
        val_auc = _split_auc(mp, manifest, "val", cfg, pol, tc, emb, kspec)
        history.append(
            EpochStats(
                epoch=epoch,
                train_loss=loss_sum / n_seen,
                val_auc=val_auc,
                lr=lr,
                trainable_params=trainable_param_count(mp, plan),
            )
        )
        if val_auc > best_auc:
            best_auc = val_auc
            best_epoch = epoch
            best_params = mp.copy()

    return TrainResult(
        params=best_params,
        history=history,
        best_epoch=best_epoch,
        best_val_auc=best_auc,
        setup_name=cfg.setup_name,
        train_config=tc,
    )


def predict_scores(
    mp: ModelParams,
    manifest: Manifest,
    split: str,
    cfg: FeatureConfig,
    pol: AugmentPolicy,
    batch_size: int = 32,
    emb: EmbeddingTable | None = None,
    kspec: KernelSpec = DEFAULT_KERNELS,
) -> ScoredSet:
    """Eval-mode sigmoid probabilities over a split, in manifest order."""
    scores, labels = [], []
    for idxs in batches(manifest, split, batch_size, shuffle=False):
        x, e, y = assemble_batch(manifest, idxs, cfg, pol, "eval", emb=emb, kspec=kspec)
        logits, _ = forward_batch(mp, x, e, train_mode=False)
        scores.append(sigmoid(logits))
        labels.append(y)
    return ScoredSet(np.concatenate(scores), np.concatenate(labels))


def _split_auc(mp, manifest, split, cfg, pol, tc, emb, kspec) -> float:
    scored = predict_scores(mp, manifest, split, cfg, pol, tc.batch_size, emb, kspec)
    return auc(roc_curve(scored))


# ---------------------------------------------------------------------------
# Checkpoint and history files
# ---------------------------------------------------------------------------


def save_checkpoint(result: TrainResult, path: str | Path) -> None:
    """Versioned binary blob: header JSON plus raw little-endian float64 arrays."""
    mp = result.params
    arrays = mp.as_dict()
    header = {
        "version": CHECKPOINT_VERSION,
        "setup": result.setup_name,
        "best_epoch": result.best_epoch,
        "best_val_auc": result.best_val_auc,
        "train_config": asdict(result.train_config),
        "backbone": {
            "stem_channels": mp.arch.stem_channels,
            "stage_channels": list(mp.arch.stage_channels),
        },
        "emb_dim": mp.emb_dim,
        "dropout_rate": mp.head.dropout_rate,
        "arrays": [{"name": k, "shape": list(v.shape)} for k, v in arrays.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(blob)), blob]
    parts.extend(np.ascontiguousarray(v, dtype="<f8").tobytes() for v in arrays.values())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path: str | Path) -> tuple[ModelParams, dict]:
    """Rebuild ModelParams from a checkpoint; returns (params, header dict)."""
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"not a checkpoint file: {path}")
    version, hlen = struct.unpack_from("<II", data, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}: {path}")
    header = json.loads(data[12 : 12 + hlen].decode("utf-8"))
    off = 12 + hlen
    arrays: dict[str, np.ndarray] = {}
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape).copy()
        arrays[spec["name"]] = arr
        off += count * 8
    if off != len(data):
        raise ValueError(f"checkpoint has trailing bytes: {path}")
    arch = BackboneSpec(
        stem_channels=header["backbone"]["stem_channels"],
        stage_channels=tuple(header["backbone"]["stage_channels"]),
    )
    stages = [
        ConvParams(arrays[f"stage{i}.w"], arrays[f"stage{i}.b"]) for i in range(arch.n_stages)
    ]
    mp = ModelParams(
        stem=ConvParams(arrays["stem.w"], arrays["stem.b"]),
        stages=stages,
        head=HeadParams(
            arrays["head.w1"],
            arrays["head.b1"],
            arrays["head.w2"],
            arrays["head.b2"],
            header["dropout_rate"],
        ),
        arch=arch,
        emb_dim=header["emb_dim"],
    )
    return mp, header


def write_history_csv(history: list[EpochStats], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_auc", "lr", "trainable_param_count"])
        for row in history:
            writer.writerow(
                [
                    row.epoch,
                    f"{row.train_loss:.6f}",
                    f"{row.val_auc:.6f}",
                    f"{row.lr:.8g}",
                    row.trainable_params,
                ]
            )
