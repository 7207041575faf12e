"""Early fusion (channel packing), late fusion, and embedding tables.

Early fusion replaces channels of the gray-triplicated RGB image: selected
derivative/threshold maps are averaged into the red channel, the LBP map
goes to the blue channel, and the green channel always keeps the original
gray image. Late fusion appends an external per-image embedding vector to
the backbone feature vector just before the classification head.

Embeddings are precomputed and file-backed (EMB1 format below); computing
them is an external step (see docs/embeddings.md).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import DEFAULT_KERNELS, KernelSpec, d1_map, d2_map, lbp_map, threshold_map
from .imagecore import GrayImage, RgbImage

# The 16 canonical ablation setups: name -> (use_d1, use_d2, use_t, use_lbp, use_dino).
# "frozen" packs like baseline; it differs only in the training schedule
# (nothing but the head ever trains).
CANONICAL_SETUPS: dict[str, tuple[bool, bool, bool, bool, bool]] = {
    "baseline": (False, False, False, False, False),
    "frozen": (False, False, False, False, False),
    "d1": (True, False, False, False, False),
    "d2": (False, True, False, False, False),
    "t": (False, False, True, False, False),
    "LBP": (False, False, False, True, False),
    "d1_LBP": (True, False, False, True, False),
    "d2_LBP": (False, True, False, True, False),
    "t_LBP": (False, False, True, True, False),
    "all": (True, True, True, True, False),
    "dino": (False, False, False, False, True),
    "dino_d1": (True, False, False, False, True),
    "dino_d2": (False, True, False, False, True),
    "dino_t": (False, False, True, False, True),
    "dino_LBP": (False, False, False, True, True),
    "dino_all": (True, True, True, True, True),
}

EMB1_MAGIC = b"EMB1"


class EmbeddingFormatError(ValueError):
    """Raised for malformed EMB1 embedding files."""


@dataclass(frozen=True)
class FeatureConfig:
    """Which handcrafted/embedding features a setup uses (the ablation axis)."""

    setup_name: str
    use_d1: bool = False
    use_d2: bool = False
    use_t: bool = False
    use_lbp: bool = False
    use_dino: bool = False

    def __post_init__(self):
        expected = CANONICAL_SETUPS.get(self.setup_name)
        if expected is not None and self.flags != expected:
            raise ValueError(
                f"setup {self.setup_name!r} requires flags {expected}, got {self.flags}"
            )

    @property
    def flags(self) -> tuple[bool, bool, bool, bool, bool]:
        return (self.use_d1, self.use_d2, self.use_t, self.use_lbp, self.use_dino)

    @classmethod
    def from_name(cls, name: str) -> "FeatureConfig":
        try:
            d1, d2, t, lbp, dino = CANONICAL_SETUPS[name]
        except KeyError:
            raise ValueError(
                f"unknown setup {name!r}; canonical setups: {', '.join(CANONICAL_SETUPS)}"
            ) from None
        return cls(name, d1, d2, t, lbp, dino)


def gray_to_rgb(img: GrayImage) -> RgbImage:
    """Triplicate the gray channel into R, G and B."""
    return RgbImage(np.stack([img.data, img.data, img.data]))


def pack_early(img: GrayImage, cfg: FeatureConfig, k: KernelSpec = DEFAULT_KERNELS) -> RgbImage:
    """Pack the configured feature maps into the RGB channels.

    Selected derivative/threshold maps are averaged and replace the red
    channel; the LBP map replaces the blue channel; green always stays the
    gray image. use_dino has no effect here (it is a late-fusion flag).
    """
    red = img.data
    selected = []
    if cfg.use_d1:
        selected.append(d1_map(img, k).data)
    if cfg.use_d2:
        selected.append(d2_map(img, k).data)
    if cfg.use_t:
        selected.append(threshold_map(img, k.tau).data)
    if selected:
        red = np.mean(selected, axis=0)
    blue = lbp_map(img).data if cfg.use_lbp else img.data
    return RgbImage(np.stack([red, img.data, blue]))


def concat_late(backbone: np.ndarray, emb: np.ndarray) -> np.ndarray:
    """Concatenate backbone features and an embedding, backbone first."""
    backbone = np.asarray(backbone, dtype=np.float64).ravel()
    emb = np.asarray(emb, dtype=np.float64).ravel()
    return np.concatenate([backbone, emb])


class EmbeddingTable:
    """Read-only map from sample id to a fixed-length float32 vector."""

    def __init__(self, dim: int, entries: dict[str, np.ndarray] | None = None):
        if dim < 0:
            raise ValueError("embedding dim must be nonnegative")
        self.dim = int(dim)
        self._entries: dict[str, np.ndarray] = {}
        for sample_id, vec in (entries or {}).items():
            self.add(sample_id, vec)

    def add(self, sample_id: str, vec: np.ndarray) -> None:
        vec = np.ascontiguousarray(np.asarray(vec, dtype=np.float32))
        if vec.shape != (self.dim,):
            raise ValueError(
                f"embedding for {sample_id!r} has shape {vec.shape}, want ({self.dim},)"
            )
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"embedding for {sample_id!r} has non-finite values")
        if sample_id in self._entries:
            raise ValueError(f"duplicate embedding id {sample_id!r}")
        self._entries[sample_id] = vec

    def lookup(self, sample_id: str) -> np.ndarray:
        try:
            return self._entries[sample_id]
        except KeyError:
            raise KeyError(f"no embedding for id {sample_id!r}") from None

    def __contains__(self, sample_id: str) -> bool:
        return sample_id in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def ids(self) -> list[str]:
        return list(self._entries)


def load_embeddings(path: str | Path) -> EmbeddingTable:
    """Load an EMB1 file.

    Layout: magic "EMB1", u32le count, u32le dim, then per record a u16le id
    length, the UTF-8 id bytes, and dim little-endian float32 values.
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 12 or data[:4] != EMB1_MAGIC:
        raise EmbeddingFormatError(f"bad magic, not an EMB1 file: {path}")
    count, dim = struct.unpack_from("<II", data, 4)
    table = EmbeddingTable(dim)
    off = 12
    rec_bytes = 4 * dim
    for i in range(count):
        if off + 2 > len(data):
            raise EmbeddingFormatError(f"truncated record {i} (id length): {path}")
        (id_len,) = struct.unpack_from("<H", data, off)
        off += 2
        if off + id_len + rec_bytes > len(data):
            raise EmbeddingFormatError(
                f"truncated record {i}; header dim {dim} may not match records: {path}"
            )
        sample_id = data[off : off + id_len].decode("utf-8")
        off += id_len
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=off).copy()
        off += rec_bytes
        try:
            table.add(sample_id, vec)
        except ValueError as exc:
            raise EmbeddingFormatError(f"{exc}: {path}") from None
    if off != len(data):
        raise EmbeddingFormatError(
            f"{len(data) - off} trailing bytes; header dim {dim} may not match records: {path}"
        )
    return table


def save_embeddings(table: EmbeddingTable, path: str | Path) -> None:
    """Write an EmbeddingTable in the EMB1 format (see load_embeddings)."""
    path = Path(path)
    parts = [EMB1_MAGIC, struct.pack("<II", len(table), table.dim)]
    for sample_id in table.ids():
        raw = sample_id.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValueError(f"embedding id too long: {sample_id!r}")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(table.lookup(sample_id).astype("<f4").tobytes())
    path.write_bytes(b"".join(parts))
