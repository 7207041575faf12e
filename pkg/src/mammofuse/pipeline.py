"""Dataset manifests, stratified splitting, and batch assembly.

A manifest is a CSV with header ``id,path,label,split``; labels are
serialized as benign/malignant and mapped to 0/1, split is one of
train/val/test or empty for not-yet-assigned records. Example assembly is
a pure function of (seed, record index, epoch), so any parallel loading
scheme reproduces the single-threaded stream exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .features import DEFAULT_KERNELS, KernelSpec
from .fusion import EmbeddingTable, FeatureConfig, pack_early
from .imagecore import (
    IMAGENET_MEAN,
    IMAGENET_STD,
    GrayImage,
    NormalizedImage,
    hflip,
    load_gray,
    normalize,
    random_resized_crop,
    resize_bilinear,
    save_gray,
)

LABEL_NAMES = ("benign", "malignant")
SPLITS = ("train", "val", "test")

# Seed-stream tags keep the independent rng streams from colliding.
_TAG_SPLIT = 11
_TAG_SHUFFLE = 12
_TAG_AUGMENT = 13
_TAG_SYNTH = 31


@dataclass(frozen=True)
class ManifestRecord:
    id: str
    path: str
    label: int
    split: str = ""

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")
        if self.split not in SPLITS and self.split != "":
            raise ValueError(f"split must be train/val/test or empty, got {self.split!r}")


@dataclass(frozen=True)
class Manifest:
    records: tuple[ManifestRecord, ...]

    def __post_init__(self):
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValueError("manifest ids must be unique")
        paths = [r.path for r in self.records]
        if len(set(paths)) != len(paths):
            raise ValueError("manifest paths must be distinct")
        object.__setattr__(self, "records", tuple(self.records))

    def __len__(self) -> int:
        return len(self.records)

    def split_indices(self, split: str) -> list[int]:
        return [i for i, r in enumerate(self.records) if r.split == split]

    def counts(self) -> dict[tuple[str, str], int]:
        out: dict[tuple[str, str], int] = {}
        for r in self.records:
            key = (r.split or "unsplit", LABEL_NAMES[r.label])
            out[key] = out.get(key, 0) + 1
        return out


def load_manifest(path: str | Path) -> Manifest:
    path = Path(path)
    records = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        expected = ["id", "path", "label", "split"]
        if reader.fieldnames != expected:
            raise ValueError(f"manifest header must be {','.join(expected)}: {path}")
        for row in reader:
            if row["label"] not in LABEL_NAMES:
                raise ValueError(f"unknown label {row['label']!r} in {path}")
            records.append(
                ManifestRecord(
                    id=row["id"],
                    path=row["path"],
                    label=LABEL_NAMES.index(row["label"]),
                    split=row["split"],
                )
            )
    return Manifest(tuple(records))


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "path", "label", "split"])
        for r in manifest.records:
            writer.writerow([r.id, r.path, LABEL_NAMES[r.label], r.split])


def split_train_val(manifest: Manifest, frac: float = 0.8, seed: int = 0) -> Manifest:
    """Assign train/val to the unsplit records, stratified per class.

    Each class is shuffled with the seed; the first floor(frac * n) records
    go to train, the remainder to val. Records already marked test are
    untouched.
    """
    if not 0.0 < frac < 1.0:
        raise ValueError("frac must lie strictly between 0 and 1")
    unsplit = [i for i, r in enumerate(manifest.records) if r.split == ""]
    if any(manifest.records[i].split not in ("", "test") for i in range(len(manifest))):
        raise ValueError("manifest already has train/val assignments")
    rng = np.random.default_rng([seed, _TAG_SPLIT])
    assignment: dict[int, str] = {}
    for label in (0, 1):
        members = [i for i in unsplit if manifest.records[i].label == label]
        if len(members) < 2:
            raise ValueError(f"class {LABEL_NAMES[label]!r} has fewer than 2 unsplit records")
        order = rng.permutation(len(members))
        n_train = int(frac * len(members))
        for rank, j in enumerate(order):
            assignment[members[j]] = "train" if rank < n_train else "val"
    new_records = [
        replace(r, split=assignment.get(i, r.split)) for i, r in enumerate(manifest.records)
    ]
    return Manifest(tuple(new_records))


@dataclass(frozen=True)
class AugmentPolicy:
    """Sizes, crop scale range, flip probability and channel statistics."""

    train_resize: int = 600
    eval_resize: int = 512
    crop: int = 512
    scale_lo: float = 0.9
    scale_hi: float = 1.0
    flip_p: float = 0.5
    mean: tuple[float, float, float] = IMAGENET_MEAN
    std: tuple[float, float, float] = IMAGENET_STD

    def __post_init__(self):
        if self.crop > self.train_resize:
            raise ValueError("crop must not exceed train_resize")
        if not 0.0 < self.scale_lo <= self.scale_hi <= 1.0:
            raise ValueError("need 0 < scale_lo <= scale_hi <= 1")
        if not 0.0 <= self.flip_p <= 1.0:
            raise ValueError("flip_p must lie in [0, 1]")


def make_example(
    rec: ManifestRecord,
    cfg: FeatureConfig,
    pol: AugmentPolicy,
    mode: str,
    rng: np.random.Generator | None = None,
    emb: EmbeddingTable | None = None,
    kspec: KernelSpec = DEFAULT_KERNELS,
) -> tuple[NormalizedImage, np.ndarray | None, int]:
    """Load, augment (train mode), pack and normalize one record.

    Train mode: resize to train_resize, random resized crop to crop size,
    horizontal flip, then pack and normalize. Eval mode: resize to
    eval_resize, pack, normalize. The rng is consumed only in train mode.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be train or eval, got {mode!r}")
    img = load_gray(rec.path)
    if mode == "train":
        if rng is None:
            raise ValueError("train mode requires an rng")
        img = resize_bilinear(img, pol.train_resize, pol.train_resize)
        img = random_resized_crop(img, pol.crop, pol.scale_lo, pol.scale_hi, rng=rng)
        img = hflip(img, pol.flip_p, rng=rng)
    else:
        img = resize_bilinear(img, pol.eval_resize, pol.eval_resize)
    packed = pack_early(img, cfg, kspec)
    norm = normalize(packed, pol.mean, pol.std)
    vec = None
    if cfg.use_dino:
        if emb is None:
            raise KeyError(f"setup {cfg.setup_name!r} needs embeddings but none were given")
        vec = emb.lookup(rec.id)
    return norm, vec, rec.label


def example_rng(seed: int, epoch: int, record_index: int) -> np.random.Generator:
    """The augmentation stream for one record in one epoch."""
    return np.random.default_rng([seed, _TAG_AUGMENT, epoch, record_index])


def batches(
    manifest: Manifest,
    split: str,
    batch_size: int = 32,
    seed: int = 0,
    epoch: int = 0,
    shuffle: bool | None = None,
) -> list[list[int]]:
    """Record-index batches; train splits shuffle per (seed, epoch).

    The final partial batch is kept. Eval splits preserve manifest order.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    idxs = manifest.split_indices(split)
    if not idxs:
        raise ValueError(f"split {split!r} is empty")
    if shuffle is None:
        shuffle = split == "train"
    if shuffle:
        rng = np.random.default_rng([seed, _TAG_SHUFFLE, epoch])
        idxs = [idxs[j] for j in rng.permutation(len(idxs))]
    return [idxs[i : i + batch_size] for i in range(0, len(idxs), batch_size)]


def assemble_batch(
    manifest: Manifest,
    idxs: list[int],
    cfg: FeatureConfig,
    pol: AugmentPolicy,
    mode: str,
    seed: int = 0,
    epoch: int = 0,
    emb: EmbeddingTable | None = None,
    kspec: KernelSpec = DEFAULT_KERNELS,
) -> tuple[np.ndarray, np.ndarray | None, np.ndarray]:
    """Stack records into (X, E, y); X is (B, 3, S, S) float64, y is (B,) int."""
    images, vecs, labels = [], [], []
    for i in idxs:
        rng = example_rng(seed, epoch, i) if mode == "train" else None
        norm, vec, label = make_example(manifest.records[i], cfg, pol, mode, rng, emb, kspec)
        images.append(norm.channels)
        labels.append(label)
        if vec is not None:
            vecs.append(vec)
    x = np.stack(images)
    e = np.stack(vecs).astype(np.float64) if vecs else None
    return x, e, np.asarray(labels, dtype=np.int64)


# ---------------------------------------------------------------------------
# Synthetic datasets (desk-scale stand-ins used by tests and the synth command)
# ---------------------------------------------------------------------------


def _box_blur(arr: np.ndarray, radius: int) -> np.ndarray:
    """Box filter with replicate padding via a summed-area table."""
    if radius < 1:
        return arr
    k = 2 * radius + 1
    pad = np.pad(arr, radius, mode="edge")
    sat = np.zeros((pad.shape[0] + 1, pad.shape[1] + 1))
    sat[1:, 1:] = pad.cumsum(axis=0).cumsum(axis=1)
    h, w = arr.shape
    sums = sat[k : k + h, k : k + w] - sat[:h, k : k + w] - sat[k : k + h, :w] + sat[:h, :w]
    return sums / (k * k)


def _standardize(arr: np.ndarray, mean: float = 0.5, std: float = 0.12) -> np.ndarray:
    arr = arr - arr.mean()
    scale = arr.std()
    if scale > 0:
        arr = arr / scale * std
    return np.clip(arr + mean, 0.0, 1.0)


def _texture_image(rng: np.random.Generator, size: int, label: int) -> np.ndarray:
    """Classes differ only in rank-order micro-texture.

    Both classes share a posterized smooth field (flat plateaus, crisp
    level steps) with per-image mean fixed at 0.5 and a class-independent
    contrast jitter that drowns any residual contrast cue. Class 1 adds
    sparse sub-step bumps: they barely move pixel statistics but flip the
    neighbor-vs-center comparisons that local binary patterns encode.
    """
    base = _standardize(_box_blur(rng.random((size, size)), 3))
    base = np.round(base * 24.0) / 24.0
    bumps = (rng.random((size, size)) < 0.25) * (5.0 / 255.0)
    contrast = 0.12 * rng.uniform(0.92, 1.08)
    if label == 1:
        base = base + bumps
    return _standardize(base, std=contrast)


def _edge_image(rng: np.random.Generator, size: int, label: int) -> np.ndarray:
    """Classes differ in edge density: few large vs many small rectangles."""
    if label == 0:
        n_shapes, lo = 3, max(3, size // 5)
        hi = max(lo, size // 3)
    else:
        n_shapes, lo = 14, 2
        hi = max(3, size // 8)
    img = np.full((size, size), 0.45)
    for k in range(n_shapes):
        w = int(rng.integers(lo, hi + 1))
        h = int(rng.integers(lo, hi + 1))
        y = int(rng.integers(0, size - h + 1))
        x = int(rng.integers(0, size - w + 1))
        img[y : y + h, x : x + w] += 0.18 if k % 2 == 0 else -0.18
    return _standardize(np.clip(img, 0.0, 1.0), std=0.08)


_VARIANTS = {"texture": (_texture_image, 1), "edges": (_edge_image, 2)}


def generate_synthetic_dataset(
    out_dir: str | Path,
    variant: str = "texture",
    per_class: int = 500,
    size: int = 64,
    test_frac: float = 0.2,
    seed: int = 0,
) -> Path:
    """Write per_class PGM images per label plus a manifest; returns its path.

    The last test_frac of each class is marked test; the rest is left
    unsplit for split_train_val. Generation is deterministic in the seed.
    """
    try:
        make_image, variant_tag = _VARIANTS[variant]
    except KeyError:
        raise ValueError(f"unknown variant {variant!r}; choose from {sorted(_VARIANTS)}") from None
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    n_test = int(round(per_class * test_frac))
    records = []
    for label in (0, 1):
        for i in range(per_class):
            rng = np.random.default_rng([seed, _TAG_SYNTH, variant_tag, label, i])
            img = GrayImage(make_image(rng, size, label))
            name = f"{LABEL_NAMES[label]}_{i:04d}"
            path = images_dir / f"{name}.pgm"
            save_gray(img, path)
            split = "test" if i >= per_class - n_test else ""
            records.append(ManifestRecord(id=name, path=str(path), label=label, split=split))
    manifest_path = out_dir / "manifest.csv"
    save_manifest(Manifest(tuple(records)), manifest_path)
    return manifest_path


def write_class_embeddings(
    manifest: Manifest,
    path: str | Path,
    dim: int = 384,
    seed: int = 0,
    signal: float = 0.5,
) -> None:
    """EMB1 table covering every manifest id: noise plus a class-mean shift.

    Desk-scale stand-in for an external feature extractor, handy for
    exercising the late-fusion path end to end.
    """
    from .fusion import save_embeddings

    table = EmbeddingTable(dim)
    for i, rec in enumerate(manifest.records):
        rng = np.random.default_rng([seed, _TAG_SYNTH, 9, i])
        vec = rng.normal(rec.label * signal, 1.0, dim).astype(np.float32)
        table.add(rec.id, vec)
    save_embeddings(table, path)
