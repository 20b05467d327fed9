"""Input checks shared by the estimators and the command line."""

from __future__ import annotations

from typing import Any, Sequence

import numpy as np
from sklearn.utils.validation import check_array

from .assignment import GtScene
from .errors import InputFormatError
from .voting import InstanceDetection, RegionPrediction


def check_scenes(X: Any, num_verbs: int | None = None, num_noobject_verbs: int = 0) -> list[GtScene]:
    """Return ``X`` as a list of validated :class:`GtScene`.

    Raises:
        InputFormatError: an element is not a scene or fails its index checks.
    """
    if isinstance(X, GtScene):
        X = [X]
    try:
        scenes = list(X)
    except TypeError:
        raise InputFormatError("expected a sequence of GtScene") from None
    for k, s in enumerate(scenes):
        if not isinstance(s, GtScene):
            raise InputFormatError(f"element {k} is {type(s).__name__}, expected GtScene")
        s.validate(num_verbs, num_noobject_verbs)
    return scenes


def check_scene_outputs(X: Any) -> list[tuple[list[InstanceDetection], list[RegionPrediction]]]:
    """Return ``X`` as a list of ``(detections, regions)`` pairs, one per scene."""
    try:
        items = list(X)
    except TypeError:
        raise InputFormatError("expected a sequence of (detections, regions) pairs") from None
    out = []
    for k, item in enumerate(items):
        try:
            dets, regions = item
        except (TypeError, ValueError):
            raise InputFormatError(f"element {k} is not a (detections, regions) pair") from None
        dets, regions = list(dets), list(regions)
        if not all(isinstance(d, InstanceDetection) for d in dets):
            raise InputFormatError(f"element {k}: detections must be InstanceDetection")
        if not all(isinstance(r, RegionPrediction) for r in regions):
            raise InputFormatError(f"element {k}: regions must be RegionPrediction")
        out.append((dets, regions))
    return out


def check_logits(logits: Any, shape: tuple[int, int] | None = None) -> np.ndarray:
    """Finite 2-D float64 logits, optionally of a fixed shape."""
    try:
        arr = check_array(logits, dtype=np.float64, ensure_all_finite=True,
                          ensure_min_samples=0, ensure_min_features=0)
    except ValueError as exc:
        raise InputFormatError(f"invalid logits: {exc}") from exc
    if shape is not None and arr.shape != tuple(shape):
        raise InputFormatError(f"logits have shape {arr.shape}, expected {tuple(shape)}")
    return arr


def check_same_length(*seqs: Sequence, names: Sequence[str]) -> None:
    lengths = [len(s) for s in seqs]
    if len(set(lengths)) > 1:
        pairs = ", ".join(f"{n}={k}" for n, k in zip(names, lengths))
        raise InputFormatError(f"length mismatch: {pairs}")
