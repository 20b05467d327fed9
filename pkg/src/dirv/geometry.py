"""Box arithmetic, anchor grids and regression-delta encoding.

Boxes are kept in center form ``(cx, cy, w, h)``.  Every overlap quantity is
computed from the corner form, with the same operation order in the scalar
functions and in the vectorised ``pairwise_*`` helpers, so both paths agree
bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import ConfigError, NumericError

__all__ = [
    "Box",
    "Anchor",
    "AnchorConfig",
    "iou",
    "coverage",
    "union_box",
    "generate_anchors",
    "anchor_array",
    "encode_deltas",
    "decode_deltas",
    "to_corners",
    "pairwise_intersection",
    "pairwise_iou",
    "pairwise_coverage",
]


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in center form. Width and height must be positive."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self) -> None:
        vals = (self.cx, self.cy, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise NumericError(f"box has non-finite coordinates: {vals}")
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box must have positive width and height, got w={self.w}, h={self.h}")

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> "Box":
        return cls(0.5 * (x1 + x2), 0.5 * (y1 + y2), x2 - x1, y2 - y1)

    @property
    def corners(self) -> tuple[float, float, float, float]:
        hw = 0.5 * self.w
        hh = 0.5 * self.h
        return (self.cx - hw, self.cy - hh, self.cx + hw, self.cy + hh)

    @property
    def center(self) -> tuple[float, float]:
        return (self.cx, self.cy)

    @property
    def area(self) -> float:
        x1, y1, x2, y2 = self.corners
        return (x2 - x1) * (y2 - y1)

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h], dtype=np.float64)


def _intersection(a: tuple, b: tuple) -> float:
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    return iw * ih


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes."""
    ca, cb = a.corners, b.corners
    inter = _intersection(ca, cb)
    area_a = (ca[2] - ca[0]) * (ca[3] - ca[1])
    area_b = (cb[2] - cb[0]) * (cb[3] - cb[1])
    return inter / (area_a + area_b - inter)


def coverage(a: Box, b: Box) -> float:
    """Fraction of ``b`` covered by ``a``: ``area(a & b) / area(b)``."""
    ca, cb = a.corners, b.corners
    return _intersection(ca, cb) / ((cb[2] - cb[0]) * (cb[3] - cb[1]))


def union_box(h: Box, o: Box) -> Box:
    """Smallest box that contains both ``h`` and ``o``."""
    ch, co = h.corners, o.corners
    return Box.from_corners(
        min(ch[0], co[0]), min(ch[1], co[1]), max(ch[2], co[2]), max(ch[3], co[3])
    )


# ---------------------------------------------------------------------------
# vectorised helpers


def to_corners(boxes: np.ndarray) -> np.ndarray:
    """Convert an ``(N, 4)`` center-form array to corner form."""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    hw = 0.5 * boxes[:, 2]
    hh = 0.5 * boxes[:, 3]
    return np.stack(
        [boxes[:, 0] - hw, boxes[:, 1] - hh, boxes[:, 0] + hw, boxes[:, 1] + hh], axis=1
    )


def _areas(corners: np.ndarray) -> np.ndarray:
    return (corners[:, 2] - corners[:, 0]) * (corners[:, 3] - corners[:, 1])


def pairwise_intersection(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Intersection areas between corner-form arrays ``a`` (N, 4) and ``b`` (M, 4)."""
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    ok = (iw > 0.0) & (ih > 0.0)
    return np.where(ok, iw * ih, 0.0)


def pairwise_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    inter = pairwise_intersection(a, b)
    return inter / (_areas(a)[:, None] + _areas(b)[None, :] - inter)


def pairwise_coverage(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``out[i, j]`` is the fraction of ``b[j]`` covered by ``a[i]``."""
    return pairwise_intersection(a, b) / _areas(b)[None, :]


# ---------------------------------------------------------------------------
# anchors


@dataclass(frozen=True)
class Anchor:
    box: Box
    level: int
    index: int


def _default_levels() -> tuple[tuple[float, float], ...]:
    return tuple((float(2**k), float(4 * 2**k)) for k in range(3, 8))


@dataclass(frozen=True)
class AnchorConfig:
    """Dense multi-scale anchor layout.

    ``levels`` holds ``(stride, base_size)`` pairs.  Each grid cell of a level
    receives ``len(scales) * len(aspect_ratios)`` anchors of size
    ``base_size * scale``, with ``aspect_ratio = h / w``.
    """

    image_width: float = 256.0
    image_height: float = 256.0
    levels: tuple[tuple[float, float], ...] = field(default_factory=_default_levels)
    scales: tuple[float, ...] = (1.0, 2 ** (1 / 3), 2 ** (2 / 3))
    aspect_ratios: tuple[float, ...] = (0.5, 1.0, 2.0)

    def __post_init__(self) -> None:
        # normalise lists coming from config files so the config stays hashable
        object.__setattr__(self, "levels", tuple(tuple(map(float, lv)) for lv in self.levels))
        object.__setattr__(self, "scales", tuple(map(float, self.scales)))
        object.__setattr__(self, "aspect_ratios", tuple(map(float, self.aspect_ratios)))
        self.validate()

    def validate(self) -> None:
        if not (self.image_width > 0 and self.image_height > 0):
            raise ConfigError("anchor image size must be positive")
        if not self.levels:
            raise ConfigError("anchor config needs at least one pyramid level")
        for lv in self.levels:
            if len(lv) != 2 or lv[0] <= 0 or lv[1] <= 0:
                raise ConfigError(f"invalid pyramid level {lv!r}; expected (stride, base_size) > 0")
        strides = [lv[0] for lv in self.levels]
        if any(s2 <= s1 for s1, s2 in zip(strides, strides[1:])):
            raise ConfigError(f"strides must be strictly increasing, got {strides}")
        if not self.scales or any(s <= 0 for s in self.scales):
            raise ConfigError("scales must be non-empty and positive")
        if not self.aspect_ratios or any(r <= 0 for r in self.aspect_ratios):
            raise ConfigError("aspect_ratios must be non-empty and positive")

    def grid_shape(self, level: int) -> tuple[int, int]:
        stride = self.levels[level][0]
        return (math.ceil(self.image_height / stride), math.ceil(self.image_width / stride))

    @property
    def num_templates(self) -> int:
        return len(self.scales) * len(self.aspect_ratios)

    @property
    def num_anchors(self) -> int:
        return sum(r * c for r, c in map(self.grid_shape, range(len(self.levels)))) * self.num_templates


@lru_cache(maxsize=16)
def _anchor_arrays(cfg: AnchorConfig) -> tuple[np.ndarray, np.ndarray]:
    boxes, levels = [], []
    for lv, (stride, base) in enumerate(cfg.levels):
        rows, cols = cfg.grid_shape(lv)
        sizes = [
            (base * s / math.sqrt(r), base * s * math.sqrt(r))
            for s in cfg.scales
            for r in cfg.aspect_ratios
        ]
        wh = np.array(sizes, dtype=np.float64)  # (T, 2)
        cy = stride * (np.arange(rows, dtype=np.float64) + 0.5)
        cx = stride * (np.arange(cols, dtype=np.float64) + 0.5)
        # order: row, column, template
        gy, gx, t = np.meshgrid(cy, cx, np.arange(len(sizes)), indexing="ij")
        lvl = np.stack([gx.ravel(), gy.ravel(), wh[t.ravel(), 0], wh[t.ravel(), 1]], axis=1)
        boxes.append(lvl)
        levels.append(np.full(len(lvl), lv, dtype=np.int64))
    out = np.concatenate(boxes, axis=0), np.concatenate(levels)
    for arr in out:
        arr.setflags(write=False)
    return out


def anchor_array(cfg: AnchorConfig) -> tuple[np.ndarray, np.ndarray]:
    """Center-form anchor array ``(N, 4)`` and level ids ``(N,)``, read-only and cached."""
    return _anchor_arrays(cfg)


def generate_anchors(cfg: AnchorConfig) -> list[Anchor]:
    """Enumerate anchors level-major, then row, column and template.

    Anchor centers sit at ``stride * (i + 0.5)``; anchors are not clipped to
    the image.
    """
    boxes, levels = _anchor_arrays(cfg)
    return [
        Anchor(Box(*map(float, b)), int(lv), i) for i, (b, lv) in enumerate(zip(boxes, levels))
    ]


# ---------------------------------------------------------------------------
# regression deltas


def encode_deltas(anchor: Box, target: Box) -> tuple[float, float, float, float]:
    return (
        (target.cx - anchor.cx) / anchor.w,
        (target.cy - anchor.cy) / anchor.h,
        math.log(target.w / anchor.w),
        math.log(target.h / anchor.h),
    )


def decode_deltas(anchor: Box, deltas: Sequence[float]) -> Box:
    dx, dy, dw, dh = deltas
    if not all(math.isfinite(d) for d in (dx, dy, dw, dh)):
        raise NumericError(f"cannot decode non-finite deltas {tuple(deltas)}")
    try:
        w = anchor.w * math.exp(dw)
        h = anchor.h * math.exp(dh)
    except OverflowError as exc:
        raise NumericError(f"deltas {tuple(deltas)} overflow the box size") from exc
    return Box(anchor.cx + dx * anchor.w, anchor.cy + dy * anchor.h, w, h)
