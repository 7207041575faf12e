"""The trainable model: a small staged convnet plus the classification head.

The backbone is a stack of 3x3 stride-2 conv/ReLU blocks (a stem followed
by >= 3 stages) ending in global average pooling; the head is a 256-unit
ReLU layer with inverted dropout and a single-logit output. Forward and
backward passes are explicit NumPy so gradients are checkable against
finite differences and training is bit-reproducible.

Parameters live in float64 arrays addressed by group ("stem", "stage0",
..., "head"); the staged-unfreezing schedule in optim.unfreeze_plan gates
which groups receive optimizer updates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HEAD_WIDTH = 256


@dataclass(frozen=True)
class BackboneSpec:
    """Architecture of the staged backbone (channel widths only)."""

    stem_channels: int = 8
    stage_channels: tuple[int, ...] = (16, 24, 32, 32)

    def __post_init__(self):
        if self.stem_channels < 1:
            raise ValueError("stem_channels must be positive")
        if len(self.stage_channels) < 3:
            raise ValueError("need at least 3 stages for the unfreezing schedule")
        if self.stage_channels[-1] < 8:
            raise ValueError("backbone out_dim must be at least 8")
        if any(c < 1 for c in self.stage_channels):
            raise ValueError("stage channel counts must be positive")

    @property
    def n_stages(self) -> int:
        return len(self.stage_channels)

    @property
    def out_dim(self) -> int:
        return self.stage_channels[-1]


@dataclass(eq=False)
class HeadParams:
    """256-unit ReLU + inverted dropout + single-logit linear layer."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    dropout_rate: float = 0.4

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        width = self.w1.shape[0]
        if self.b1.shape != (width,) or self.w2.shape != (width,) or self.b2.shape != (1,):
            raise ValueError("inconsistent head parameter shapes")


@dataclass(eq=False)
class ConvParams:
    w: np.ndarray  # (c_out, c_in, 3, 3)
    b: np.ndarray  # (c_out,)


@dataclass(eq=False)
class ModelParams:
    stem: ConvParams
    stages: list[ConvParams]
    head: HeadParams
    arch: BackboneSpec
    emb_dim: int = 0

    @property
    def feat_dim(self) -> int:
        return self.arch.out_dim + self.emb_dim

    def group_names(self) -> list[str]:
        return ["stem"] + [f"stage{i}" for i in range(len(self.stages))] + ["head"]

    def group_arrays(self, group: str) -> dict[str, np.ndarray]:
        """Named parameter arrays of one group (views, not copies)."""
        if group == "stem":
            return {"stem.w": self.stem.w, "stem.b": self.stem.b}
        if group == "head":
            return {
                "head.w1": self.head.w1,
                "head.b1": self.head.b1,
                "head.w2": self.head.w2,
                "head.b2": self.head.b2,
            }
        if group.startswith("stage"):
            i = int(group[5:])
            return {f"{group}.w": self.stages[i].w, f"{group}.b": self.stages[i].b}
        raise KeyError(f"unknown parameter group {group!r}")

    def as_dict(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for group in self.group_names():
            out.update(self.group_arrays(group))
        return out

    def group_size(self, group: str) -> int:
        return sum(a.size for a in self.group_arrays(group).values())

    def copy(self) -> "ModelParams":
        return ModelParams(
            stem=ConvParams(self.stem.w.copy(), self.stem.b.copy()),
            stages=[ConvParams(c.w.copy(), c.b.copy()) for c in self.stages],
            head=HeadParams(
                self.head.w1.copy(),
                self.head.b1.copy(),
                self.head.w2.copy(),
                self.head.b2.copy(),
                self.head.dropout_rate,
            ),
            arch=self.arch,
            emb_dim=self.emb_dim,
        )


def init_params(
    arch: BackboneSpec,
    emb_dim: int = 0,
    dropout_rate: float = 0.4,
    *,
    rng: np.random.Generator,
) -> ModelParams:
    """He-normal conv/dense weights, zero biases."""

    def conv(c_in: int, c_out: int) -> ConvParams:
        std = np.sqrt(2.0 / (c_in * 9))
        return ConvParams(rng.normal(0.0, std, (c_out, c_in, 3, 3)), np.zeros(c_out))

    stem = conv(3, arch.stem_channels)
    stages = []
    c_in = arch.stem_channels
    for c_out in arch.stage_channels:
        stages.append(conv(c_in, c_out))
        c_in = c_out
    feat = arch.out_dim + emb_dim
    head = HeadParams(
        w1=rng.normal(0.0, np.sqrt(2.0 / feat), (HEAD_WIDTH, feat)),
        b1=np.zeros(HEAD_WIDTH),
        w2=rng.normal(0.0, np.sqrt(1.0 / HEAD_WIDTH), HEAD_WIDTH),
        b2=np.zeros(1),
        dropout_rate=dropout_rate,
    )
    return ModelParams(stem=stem, stages=stages, head=head, arch=arch, emb_dim=emb_dim)


# ---------------------------------------------------------------------------
# Conv block primitives (3x3, stride 2, zero padding 1, via strided views)
# ---------------------------------------------------------------------------

_STRIDE = 2


def _im2col(x_pad: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """(B, C_in * 9, out_h * out_w) patch matrix from a zero-padded input."""
    batch, c_in = x_pad.shape[:2]
    views = []
    for ki in range(3):
        for kj in range(3):
            views.append(
                x_pad[
                    :,
                    :,
                    ki : ki + _STRIDE * (out_h - 1) + 1 : _STRIDE,
                    kj : kj + _STRIDE * (out_w - 1) + 1 : _STRIDE,
                ]
            )
    cols = np.stack(views, axis=2)  # (B, C_in, 9, out_h, out_w)
    return cols.reshape(batch, c_in * 9, out_h * out_w)


def _conv_out_size(size: int) -> int:
    return (size - 1) // _STRIDE + 1


def conv_forward(x: np.ndarray, p: ConvParams) -> np.ndarray:
    batch, c_in, h, w = x.shape
    out_h, out_w = _conv_out_size(h), _conv_out_size(w)
    x_pad = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = _im2col(x_pad, out_h, out_w)
    w2d = p.w.reshape(p.w.shape[0], c_in * 9)
    out = np.matmul(w2d, cols) + p.b[:, None]
    return out.reshape(batch, p.w.shape[0], out_h, out_w)


def conv_backward(
    x: np.ndarray,
    p: ConvParams,
    dout: np.ndarray,
    need_dw: bool = True,
    need_dx: bool = True,
) -> tuple[np.ndarray | None, np.ndarray | None, np.ndarray | None]:
    """Gradients (dx, dw, db) for conv_forward.

    The patch matrix is only rebuilt when parameter gradients are needed,
    and dx is only propagated when a shallower layer still wants gradients;
    frozen-stage training skips most of this work.
    """
    batch, c_in, h, w = x.shape
    out_h, out_w = dout.shape[2], dout.shape[3]
    dflat = dout.reshape(batch, dout.shape[1], out_h * out_w)
    dw = db = dx = None
    if need_dw:
        x_pad = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        cols = _im2col(x_pad, out_h, out_w)
        db = dout.sum(axis=(0, 2, 3))
        dw = np.matmul(dflat, cols.transpose(0, 2, 1)).sum(axis=0).reshape(p.w.shape)
    if need_dx:
        w2d = p.w.reshape(p.w.shape[0], c_in * 9)
        dcols = np.matmul(w2d.T, dflat).reshape(batch, c_in, 3, 3, out_h, out_w)
        dx_pad = np.zeros((batch, c_in, h + 2, w + 2))
        for ki in range(3):
            for kj in range(3):
                dx_pad[
                    :,
                    :,
                    ki : ki + _STRIDE * (out_h - 1) + 1 : _STRIDE,
                    kj : kj + _STRIDE * (out_w - 1) + 1 : _STRIDE,
                ] += dcols[:, :, ki, kj]
        dx = dx_pad[:, :, 1 : 1 + h, 1 : 1 + w]
    return dx, dw, db


# ---------------------------------------------------------------------------
# Full model forward/backward
# ---------------------------------------------------------------------------


def head_forward(
    x: np.ndarray,
    p: HeadParams,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> float:
    """Single-vector head: relu(w1 x + b1), inverted dropout, linear logit."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != p.w1.shape[1]:
        raise ValueError(f"head expects {p.w1.shape[1]} features, got {x.shape[0]}")
    h = np.maximum(p.w1 @ x + p.b1, 0.0)
    if train_mode and p.dropout_rate > 0.0:
        if rng is None:
            raise ValueError("train_mode dropout requires an rng")
        keep = rng.random(h.shape) >= p.dropout_rate
        h = h * keep / (1.0 - p.dropout_rate)
    return float(p.w2 @ h + p.b2[0])


def forward_batch(
    mp: ModelParams,
    x: np.ndarray,
    emb: np.ndarray | None = None,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, dict]:
    """Logits for a batch of packed images; returns an activation cache for backward.

    x is (B, 3, H, W); emb, when the setup late-fuses embeddings, is (B, emb_dim).
    """
    if mp.emb_dim and (emb is None or emb.shape != (x.shape[0], mp.emb_dim)):
        raise ValueError(f"model expects embeddings of shape ({x.shape[0]}, {mp.emb_dim})")
    if not mp.emb_dim and emb is not None:
        raise ValueError("model was built without late-fusion embeddings")
    cache: dict = {"conv_inputs": [], "relu_masks": [], "x_shape": x.shape}
    a = x
    for conv in [mp.stem] + mp.stages:
        z = conv_forward(a, conv)
        mask = z > 0.0
        cache["conv_inputs"].append(a)
        cache["relu_masks"].append(mask)
        a = z * mask
    cache["gap_in_shape"] = a.shape
    feat = a.mean(axis=(2, 3))
    full = np.concatenate([feat, emb], axis=1) if mp.emb_dim else feat
    z1 = full @ mp.head.w1.T + mp.head.b1
    m1 = z1 > 0.0
    a1 = z1 * m1
    if train_mode and mp.head.dropout_rate > 0.0:
        if rng is None:
            raise ValueError("train_mode dropout requires an rng")
        keep = rng.random(a1.shape) >= mp.head.dropout_rate
        a1 = a1 * keep / (1.0 - mp.head.dropout_rate)
        cache["drop_keep"] = keep
    cache.update(full=full, head_mask=m1, head_act=a1)
    logits = a1 @ mp.head.w2 + mp.head.b2[0]
    return logits, cache


def backward_batch(
    mp: ModelParams,
    cache: dict,
    dlogits: np.ndarray,
    needed: set[str] | None = None,
) -> dict[str, np.ndarray]:
    """Gradients keyed like ModelParams.as_dict().

    When ``needed`` names a subset of parameter groups, gradient work for
    the other conv groups is skipped and backpropagation stops below the
    shallowest group that still needs gradients. Head gradients are always
    produced.
    """
    grads: dict[str, np.ndarray] = {}
    a1 = cache["head_act"]
    grads["head.w2"] = a1.T @ dlogits
    grads["head.b2"] = np.array([dlogits.sum()])
    da1 = np.outer(dlogits, mp.head.w2)
    if "drop_keep" in cache:
        da1 = da1 * cache["drop_keep"] / (1.0 - mp.head.dropout_rate)
    dz1 = da1 * cache["head_mask"]
    grads["head.w1"] = dz1.T @ cache["full"]
    grads["head.b1"] = dz1.sum(axis=0)

    conv_names = ["stem"] + [f"stage{i}" for i in range(len(mp.stages))]
    need_params = [needed is None or name in needed for name in conv_names]
    if not any(need_params):
        return grads
    shallowest = need_params.index(True)

    dfull = dz1 @ mp.head.w1
    dfeat = dfull[:, : mp.arch.out_dim]
    _, _, gh, gw = cache["gap_in_shape"]
    da = np.broadcast_to(dfeat[:, :, None, None], cache["gap_in_shape"]) / (gh * gw)
    convs = [mp.stem] + mp.stages
    for idx in range(len(convs) - 1, shallowest - 1, -1):
        dz = da * cache["relu_masks"][idx]
        da, dw, db = conv_backward(
            cache["conv_inputs"][idx],
            convs[idx],
            dz,
            need_dw=need_params[idx],
            need_dx=idx > shallowest,
        )
        if need_params[idx]:
            grads[f"{conv_names[idx]}.w"] = dw
            grads[f"{conv_names[idx]}.b"] = db
    return grads
