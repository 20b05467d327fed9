"""Interaction-region decision and training-target construction.

An anchor becomes an interaction region of a ground-truth interaction when it
overlaps the union box, the human box and the object box enough (three strict
thresholds).  When several interactions claim an anchor, the one with the
highest overlapping level dominates: it supplies the regression targets and
the positive labels, and the verbs of the other claimants are ignored.

Interactions that share the same (human, object) pair are treated as one
multi-label interaction for the positive label set.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import ConfigError, ContractViolation, InputFormatError
from .geometry import (
    Anchor,
    Box,
    coverage,
    encode_deltas,
    iou,
    pairwise_coverage,
    pairwise_iou,
    to_corners,
    union_box,
)

HUMAN_CLASS = 0

POSITIVE = 1
NEGATIVE = 0
IGNORED = -1


class Role(str, enum.Enum):
    HUMAN = "human"
    OBJECT = "object"
    NONE = "none"


@dataclass(frozen=True)
class GtInstance:
    box: Box
    class_id: int

    @property
    def is_human(self) -> bool:
        return self.class_id == HUMAN_CLASS


@dataclass(frozen=True)
class GtInteraction:
    human_idx: int
    object_idx: int | None
    verb_id: int

    @property
    def has_object(self) -> bool:
        return self.object_idx is not None


@dataclass(frozen=True)
class GtScene:
    image_width: float
    image_height: float
    instances: tuple[GtInstance, ...] = ()
    interactions: tuple[GtInteraction, ...] = ()
    scene_id: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "instances", tuple(self.instances))
        object.__setattr__(self, "interactions", tuple(self.interactions))

    def validate(self, num_verbs: int | None = None, num_noobject_verbs: int = 0,
                 num_classes: int | None = None) -> None:
        """Check indices, human roles and the verb space; raise InputFormatError."""
        n = len(self.instances)
        where = f"scene {self.scene_id}"
        for i, inst in enumerate(self.instances):
            if inst.class_id < 0 or (num_classes is not None and inst.class_id >= num_classes):
                raise InputFormatError(f"{where}: instance {i} has class_id {inst.class_id} out of range")
        for k, it in enumerate(self.interactions):
            if not 0 <= it.human_idx < n:
                raise InputFormatError(f"{where}: interaction {k} human_idx {it.human_idx} out of range")
            if not self.instances[it.human_idx].is_human:
                raise InputFormatError(f"{where}: interaction {k} subject is not a human instance")
            if it.object_idx is not None and not 0 <= it.object_idx < n:
                raise InputFormatError(f"{where}: interaction {k} object_idx {it.object_idx} out of range")
            if it.verb_id < 0:
                raise InputFormatError(f"{where}: interaction {k} has negative verb_id")
            if num_verbs is not None:
                if it.has_object and it.verb_id >= num_verbs:
                    raise InputFormatError(
                        f"{where}: interaction {k} verb {it.verb_id} is not an object verb (< {num_verbs})")
                if not it.has_object and not num_verbs <= it.verb_id < num_verbs + num_noobject_verbs:
                    raise InputFormatError(
                        f"{where}: interaction {k} has no object but verb {it.verb_id} is not a no-object verb")

    def human_box(self, k: int) -> Box:
        return self.instances[self.interactions[k].human_idx].box

    def object_box(self, k: int) -> Box:
        idx = self.interactions[k].object_idx
        if idx is None:
            raise ContractViolation(f"interaction {k} has no object")
        return self.instances[idx].box


@dataclass(frozen=True)
class Thresholds:
    t_u: float = 0.25
    t_h: float = 0.25
    t_o: float = 0.25

    def __post_init__(self) -> None:
        for name in ("t_u", "t_h", "t_o"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"threshold {name}={v} must lie in (0, 1)")


@dataclass(frozen=True)
class RegionAssignment:
    anchor_index: int
    matched_interaction: int | None
    class_targets: tuple[int, ...]
    human_deltas: tuple[float, float, float, float] | None
    object_deltas: tuple[float, float, float, float] | None


@dataclass(frozen=True)
class InstanceActionTargets:
    anchor_index: int
    role: Role
    action_targets: tuple[int, ...] = ()


AnchorsLike = Union[Sequence[Anchor], np.ndarray]


def anchor_centers(anchors: AnchorsLike) -> np.ndarray:
    """Center-form ``(N, 4)`` array from a list of anchors or an existing array."""
    if isinstance(anchors, np.ndarray):
        return np.asarray(anchors, dtype=np.float64).reshape(-1, 4)
    return np.array([a.box.as_array() for a in anchors], dtype=np.float64).reshape(-1, 4)


def anchor_corners(anchors: AnchorsLike) -> np.ndarray:
    return to_corners(anchor_centers(anchors))


# ---------------------------------------------------------------------------
# scalar definitions


def _as_box(anchor: Anchor | Box) -> Box:
    return anchor.box if isinstance(anchor, Anchor) else anchor


def overlap_flag(anchor: Anchor | Box, interaction: GtInteraction, scene: GtScene,
                 th: Thresholds) -> int:
    """1 if the anchor qualifies as an interaction region of ``interaction``."""
    if not interaction.has_object:
        raise ContractViolation("no-object interactions have no interaction regions")
    a = _as_box(anchor)
    hb = scene.instances[interaction.human_idx].box
    ob = scene.instances[interaction.object_idx].box
    ok = (
        iou(a, union_box(hb, ob)) > th.t_u
        and coverage(a, hb) > th.t_h
        and coverage(a, ob) > th.t_o
    )
    return int(ok)


def overlap_level(anchor: Anchor | Box, interaction: GtInteraction, scene: GtScene) -> float:
    if not interaction.has_object:
        raise ContractViolation("overlapping level needs an object box")
    a = _as_box(anchor)
    hb = scene.instances[interaction.human_idx].box
    ob = scene.instances[interaction.object_idx].box
    return iou(a, union_box(hb, ob)) + math.sqrt(coverage(a, hb) * coverage(a, ob))


# ---------------------------------------------------------------------------
# vectorised assignment


@dataclass
class AssignmentArrays:
    """Dense per-anchor assignment.

    ``matched`` holds the dominant interaction index or -1, ``labels`` the
    per-verb POSITIVE/NEGATIVE/IGNORED codes, the delta arrays are NaN on
    unmatched anchors, and ``flags`` is the ``(N, num_interactions)``
    overlap-flag matrix (all False for no-object interactions).
    """

    matched: np.ndarray
    labels: np.ndarray
    human_deltas: np.ndarray
    object_deltas: np.ndarray
    flags: np.ndarray = field(repr=False)

    @property
    def foreground(self) -> np.ndarray:
        return self.matched >= 0

    @property
    def num_flagged_pairs(self) -> int:
        return int(self.flags.sum())

    def to_regions(self) -> list[RegionAssignment]:
        out = []
        for j in range(len(self.matched)):
            m = int(self.matched[j])
            out.append(RegionAssignment(
                anchor_index=j,
                matched_interaction=m if m >= 0 else None,
                class_targets=tuple(int(v) for v in self.labels[j]),
                human_deltas=tuple(map(float, self.human_deltas[j])) if m >= 0 else None,
                object_deltas=tuple(map(float, self.object_deltas[j])) if m >= 0 else None,
            ))
        return out


def overlap_matrices(corners: np.ndarray, scene: GtScene,
                     th: Thresholds) -> tuple[np.ndarray, np.ndarray]:
    """Flag and overlapping-level matrices, shape ``(N, len(scene.interactions))``.

    Columns of no-object interactions are never flagged and have level 0.
    """
    n_int = len(scene.interactions)
    flags = np.zeros((len(corners), n_int), dtype=bool)
    levels = np.zeros((len(corners), n_int), dtype=np.float64)
    cols = [k for k, it in enumerate(scene.interactions) if it.has_object]
    if not cols or len(corners) == 0:
        return flags, levels
    hb = [scene.human_box(k) for k in cols]
    ob = [scene.object_box(k) for k in cols]
    ub = [union_box(h, o) for h, o in zip(hb, ob)]
    hc, oc, uc = (to_corners(np.array([b.as_array() for b in bs])) for bs in (hb, ob, ub))
    iou_u = pairwise_iou(corners, uc)
    cov_h = pairwise_coverage(corners, hc)
    cov_o = pairwise_coverage(corners, oc)
    flags[:, cols] = (iou_u > th.t_u) & (cov_h > th.t_h) & (cov_o > th.t_o)
    levels[:, cols] = iou_u + np.sqrt(cov_h * cov_o)
    return flags, levels


def _pair_groups(scene: GtScene) -> np.ndarray:
    """Group id per interaction; interactions on the same (human, object) share one."""
    seen: dict[tuple[int, int | None], int] = {}
    return np.array(
        [seen.setdefault((it.human_idx, it.object_idx), len(seen)) for it in scene.interactions],
        dtype=np.int64,
    )


def assign_arrays(anchors: AnchorsLike, scene: GtScene, th: Thresholds,
                  num_verbs: int) -> AssignmentArrays:
    centers = anchor_centers(anchors)
    corners = to_corners(centers)
    n, n_int = len(corners), len(scene.interactions)
    matched = np.full(n, -1, dtype=np.int64)
    labels = np.zeros((n, num_verbs), dtype=np.int8)
    hd = np.full((n, 4), np.nan)
    od = np.full((n, 4), np.nan)
    flags, levels = overlap_matrices(corners, scene, th)
    if n_int == 0 or not flags.any():
        return AssignmentArrays(matched, labels, hd, od, flags)

    verbs = np.zeros((n_int, num_verbs), dtype=bool)
    for k, it in enumerate(scene.interactions):
        if it.has_object:
            if not 0 <= it.verb_id < num_verbs:
                raise InputFormatError(
                    f"scene {scene.scene_id}: interaction {k} verb {it.verb_id} outside [0, {num_verbs})")
            verbs[k, it.verb_id] = True
    groups = _pair_groups(scene)
    group_verbs = np.zeros((groups.max() + 1, num_verbs), dtype=bool)
    np.logical_or.at(group_verbs, groups, verbs)

    fg = flags.any(axis=1)
    # argmax returns the first maximum, i.e. the lowest interaction index on ties
    dom = np.argmax(np.where(flags, levels, -np.inf), axis=1)
    matched[fg] = dom[fg]

    overlapped = (flags.astype(np.int64) @ verbs.astype(np.int64)) > 0
    positive = np.zeros_like(overlapped)
    positive[fg] = group_verbs[groups[dom[fg]]]
    labels[:] = np.where(positive, POSITIVE, np.where(overlapped, IGNORED, NEGATIVE))

    # regression targets through the scalar encoder (exactly what callers would compute)
    for j in np.flatnonzero(fg):
        a = Box(*map(float, centers[j]))
        k = int(dom[j])
        hd[j] = encode_deltas(a, scene.human_box(k))
        od[j] = encode_deltas(a, scene.object_box(k))
    return AssignmentArrays(matched, labels, hd, od, flags)


def assign_regions(anchors: AnchorsLike, scene: GtScene, th: Thresholds,
                   num_verbs: int) -> list[RegionAssignment]:
    """Per-anchor region assignment, ordered by anchor index."""
    return assign_arrays(anchors, scene, th, num_verbs).to_regions()


# ---------------------------------------------------------------------------
# instance-action targets


def _participation(scene: GtScene, num_verbs: int, num_noobject_verbs: int):
    n = len(scene.instances)
    involved = np.zeros(n, dtype=bool)
    human_side = np.zeros((n, num_verbs + num_noobject_verbs), dtype=np.int8)
    object_side = np.zeros((n, num_verbs), dtype=np.int8)
    for it in scene.interactions:
        involved[it.human_idx] = True
        if it.verb_id < human_side.shape[1]:
            human_side[it.human_idx, it.verb_id] = 1
        if it.object_idx is not None:
            involved[it.object_idx] = True
            if it.verb_id < num_verbs:
                object_side[it.object_idx, it.verb_id] = 1
    return involved, human_side, object_side


def assign_instance_actions(anchors: AnchorsLike, scene: GtScene, pos_iou: float = 0.5, *,
                            num_verbs: int, num_noobject_verbs: int = 0) -> list[InstanceActionTargets]:
    """Instance-action targets for the auxiliary action branch.

    An anchor is positive when its best-IoU instance reaches ``pos_iou`` and
    takes part in at least one interaction.  Humans get a multi-hot vector
    over all verbs (object verbs followed by no-object verbs), objects over
    the object verbs only.
    """
    if not 0.0 < pos_iou < 1.0:
        raise ContractViolation(f"pos_iou must lie in (0, 1), got {pos_iou}")
    corners = anchor_corners(anchors)
    out = []
    if not scene.instances:
        return [InstanceActionTargets(j, Role.NONE) for j in range(len(corners))]
    inst = to_corners(np.array([i.box.as_array() for i in scene.instances]))
    ious = pairwise_iou(corners, inst)
    best = np.argmax(ious, axis=1)
    best_iou = ious[np.arange(len(corners)), best]
    involved, human_side, object_side = _participation(scene, num_verbs, num_noobject_verbs)
    for j in range(len(corners)):
        b = int(best[j])
        if best_iou[j] < pos_iou or not involved[b]:
            out.append(InstanceActionTargets(j, Role.NONE))
        elif scene.instances[b].is_human:
            out.append(InstanceActionTargets(j, Role.HUMAN, tuple(int(v) for v in human_side[b])))
        else:
            out.append(InstanceActionTargets(j, Role.OBJECT, tuple(int(v) for v in object_side[b])))
    return out


def instance_action_matrix(targets: Sequence[InstanceActionTargets],
                           num_actions: int) -> tuple[np.ndarray, np.ndarray]:
    """Dense ``(N, num_actions)`` target and participation-mask matrices.

    Object-role rows only cover the leading object-verb columns.
    """
    t = np.zeros((len(targets), num_actions), dtype=np.float64)
    mask = np.zeros((len(targets), num_actions), dtype=bool)
    for row, tg in enumerate(targets):
        if tg.role is Role.NONE:
            continue
        k = len(tg.action_targets)
        if k > num_actions:
            raise ContractViolation(f"anchor {tg.anchor_index}: {k} action targets exceed {num_actions}")
        t[row, :k] = tg.action_targets
        mask[row, :k] = True
    return t, mask
