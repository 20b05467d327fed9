"""Voting-based inference: fuse per-region predictions into scored triplets.

Each interaction region is matched to a detected human (coverage gate, best
IoU) and then to a detected object (coverage gate, highest Gaussian location
probability).  The location probability compares the detected object's
offset from the detected human with the offset the region regressed, both
scaled by the anchor size.  A pair's fused score is the plain sum of its
regions' weighted localization scores, and the final triplet score multiplies
in the detector's instance and action scores.

The scalar functions below are the reference definitions.  ``vote_scene``
runs the same computation vectorised over all regions of a scene.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .assignment import HUMAN_CLASS
from .errors import ConfigError, ContractViolation, InputFormatError
from .geometry import (
    Anchor,
    Box,
    coverage,
    iou,
    pairwise_intersection,
    pairwise_iou,
    to_corners,
)


@dataclass(frozen=True)
class InstanceDetection:
    """Post-NMS instance detection.

    ``action_scores`` is indexed by verb id: humans carry scores for the
    object verbs followed by the no-object verbs, objects for the object
    verbs only (longer vectors are truncated when used as an object).
    """

    box: Box
    class_id: int
    score: float
    action_scores: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "action_scores", tuple(float(v) for v in self.action_scores))
        if not 0.0 <= self.score <= 1.0:
            raise InputFormatError(f"detection score {self.score} outside [0, 1]")
        if any(not 0.0 <= v <= 1.0 for v in self.action_scores):
            raise InputFormatError("action scores must lie in [0, 1]")

    @property
    def is_human(self) -> bool:
        return self.class_id == HUMAN_CLASS


@dataclass(frozen=True)
class RegionPrediction:
    anchor_index: int
    inter_scores: tuple[float, ...]
    human_box: Box
    object_box: Box

    def __post_init__(self) -> None:
        object.__setattr__(self, "inter_scores", tuple(float(v) for v in self.inter_scores))


@dataclass(frozen=True)
class VotingConfig:
    """Inference hyper-parameters.

    ``region_nms_iou`` switches on the region-NMS ablation; ``None`` or any
    value >= 1 disables it (no two anchors overlap by more than IoU 1).
    """

    sigma: float = 0.9
    t_h: float = 0.25
    t_o: float = 0.25
    region_nms_iou: float | None = None
    score_floor: float = 1e-6

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        for name in ("t_h", "t_o"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1)")
        if self.region_nms_iou is not None and not self.region_nms_iou > 0:
            raise ConfigError("region_nms_iou must be positive or None")
        if self.score_floor < 0:
            raise ConfigError("score_floor must be >= 0")

    @property
    def nms_enabled(self) -> bool:
        return self.region_nms_iou is not None and self.region_nms_iou < 1.0


@dataclass(frozen=True)
class TripletScore:
    human_det: int
    object_det: int | None
    verb_id: int
    score: float


def _anchor_box(anchor: Anchor | Box) -> Box:
    return anchor.box if isinstance(anchor, Anchor) else anchor


# ---------------------------------------------------------------------------
# reference (scalar) definitions


def match_region_to_human(region: RegionPrediction, anchor: Anchor | Box,
                          detections: Sequence[InstanceDetection], t_h: float) -> int | None:
    """Index of the human detection the region belongs to, or None (region abandoned).

    Only human detections are considered.  Candidates must have more than
    ``t_h`` of their box covered by the anchor; the best IoU with the anchor
    wins and ties go to the lowest index.
    """
    a = _anchor_box(anchor)
    best, best_iou = None, -1.0
    for i, det in enumerate(detections):
        if not det.is_human or not coverage(a, det.box) > t_h:
            continue
        v = iou(a, det.box)
        if v > best_iou:
            best, best_iou = i, v
    return best


def location_prob(region: RegionPrediction, anchor: Anchor | Box, matched_human: InstanceDetection,
                  object_center: tuple[float, float], sigma: float) -> float:
    """Gaussian probability that an object sits at ``object_center``."""
    a = _anchor_box(anchor)
    vx = (object_center[0] - matched_human.box.cx) / a.w
    vy = (object_center[1] - matched_human.box.cy) / a.h
    mx = (region.object_box.cx - region.human_box.cx) / a.w
    my = (region.object_box.cy - region.human_box.cy) / a.h
    d2 = (vx - mx) ** 2 + (vy - my) ** 2
    return math.exp(-d2 / (2.0 * sigma * sigma))


def weighted_loc_score(region: RegionPrediction, p: float) -> np.ndarray:
    return np.asarray(region.inter_scores, dtype=np.float64) * p


def match_region_to_object(region: RegionPrediction, anchor: Anchor | Box,
                           detections: Sequence[InstanceDetection], human_idx: int,
                           t_o: float, sigma: float) -> tuple[int | None, float]:
    """Best object detection for a region already matched to ``human_idx``.

    Returns ``(index, probability)``; ``(None, 0.0)`` when no detection
    passes the coverage gate.  Every detection except the matched human is a
    candidate, humans included.
    """
    a = _anchor_box(anchor)
    human = detections[human_idx]
    best, best_p = None, -1.0
    for i, det in enumerate(detections):
        if i == human_idx or not coverage(a, det.box) > t_o:
            continue
        p = location_prob(region, a, human, det.box.center, sigma)
        if p > best_p:
            best, best_p = i, p
    return (best, best_p) if best is not None else (None, 0.0)


def fuse_pairs(regions: Sequence[RegionPrediction], anchors: Sequence[Anchor | Box],
               detections: Sequence[InstanceDetection],
               cfg: VotingConfig) -> dict[tuple[int, int], np.ndarray]:
    """Sum weighted localization scores per (human, object) pair.

    ``anchors`` is indexed by ``region.anchor_index``.  Regions are reduced
    in anchor-index order so the result does not depend on input order.
    """
    fused: dict[tuple[int, int], np.ndarray] = {}
    order = sorted(range(len(regions)), key=lambda r: regions[r].anchor_index)
    for r in order:
        region = regions[r]
        anchor = anchors[region.anchor_index]
        h = match_region_to_human(region, anchor, detections, cfg.t_h)
        if h is None:
            continue
        o, p = match_region_to_object(region, anchor, detections, h, cfg.t_o, cfg.sigma)
        if o is None:
            continue
        s = weighted_loc_score(region, p)
        if (h, o) in fused:
            fused[(h, o)] = fused[(h, o)] + s
        else:
            fused[(h, o)] = s
    return fused


def _sort_key(t: TripletScore):
    return (t.verb_id, -t.score, t.human_det, -1 if t.object_det is None else t.object_det)


def score_triplets(fused: Mapping[tuple[int, int], np.ndarray],
                   detections: Sequence[InstanceDetection], cfg: VotingConfig,
                   num_verbs: int) -> list[TripletScore]:
    """Final triplet scores.

    Pairs: ``s_h * s_o * (act_h[c] + act_o[c]) * fused[c]`` for object verbs
    ``c < num_verbs``.  No-object verbs (human action indices ``>=
    num_verbs``) score every human as ``s_h * act_h[c]``.  Scores below
    ``cfg.score_floor`` are dropped.
    """
    out = []
    for (h, o), f in fused.items():
        hd, od = detections[h], detections[o]
        for c in range(num_verbs):
            act = _act(hd, c) + _act(od, c)
            s = hd.score * od.score * act * float(f[c])
            if s >= cfg.score_floor and s > 0:
                out.append(TripletScore(h, o, c, s))
    for h, hd in enumerate(detections):
        if not hd.is_human:
            continue
        for c in range(num_verbs, len(hd.action_scores)):
            s = hd.score * hd.action_scores[c]
            if s >= cfg.score_floor and s > 0:
                out.append(TripletScore(h, None, c, s))
    out.sort(key=_sort_key)
    return out


def _act(det: InstanceDetection, c: int) -> float:
    return det.action_scores[c] if c < len(det.action_scores) else 0.0


# ---------------------------------------------------------------------------
# vectorised scene inference


@dataclass
class SceneArrays:
    """Column-oriented view of one scene's detections and region predictions."""

    det_boxes: np.ndarray  # (D, 4) center form
    det_classes: np.ndarray  # (D,)
    det_scores: np.ndarray  # (D,)
    det_actions: np.ndarray  # (D, V), zero padded
    anchor_index: np.ndarray  # (R,)
    inter_scores: np.ndarray  # (R, C)
    human_boxes: np.ndarray  # (R, 4)
    object_boxes: np.ndarray  # (R, 4)

    @classmethod
    def build(cls, detections: Sequence[InstanceDetection], regions: Sequence[RegionPrediction],
              num_verbs: int) -> "SceneArrays":
        d = len(detections)
        width = max([num_verbs] + [len(x.action_scores) for x in detections])
        acts = np.zeros((d, width))
        for i, det in enumerate(detections):
            acts[i, : len(det.action_scores)] = det.action_scores
        inter = np.zeros((len(regions), num_verbs))
        for r, reg in enumerate(regions):
            if len(reg.inter_scores) != num_verbs:
                raise InputFormatError(
                    f"region {r} (anchor {reg.anchor_index}) has {len(reg.inter_scores)} "
                    f"interaction scores, expected {num_verbs}")
            inter[r] = reg.inter_scores
        return cls(
            det_boxes=np.array([x.box.as_array() for x in detections]).reshape(-1, 4),
            det_classes=np.array([x.class_id for x in detections], dtype=np.int64),
            det_scores=np.array([x.score for x in detections], dtype=np.float64),
            det_actions=acts,
            anchor_index=np.array([x.anchor_index for x in regions], dtype=np.int64),
            inter_scores=inter,
            human_boxes=np.array([x.human_box.as_array() for x in regions]).reshape(-1, 4),
            object_boxes=np.array([x.object_box.as_array() for x in regions]).reshape(-1, 4),
        )

    def take_regions(self, idx: np.ndarray) -> "SceneArrays":
        return SceneArrays(self.det_boxes, self.det_classes, self.det_scores, self.det_actions,
                           self.anchor_index[idx], self.inter_scores[idx],
                           self.human_boxes[idx], self.object_boxes[idx])


@dataclass
class VoteResult:
    """Outcome of voting on one scene; ``human``/``obj``/``prob`` are per region (-1 = none)."""

    triplets: list[TripletScore]
    fused: dict[tuple[int, int], np.ndarray]
    human: np.ndarray
    obj: np.ndarray
    prob: np.ndarray
    kept: np.ndarray

    @property
    def num_voting_regions(self) -> int:
        return int(np.count_nonzero(self.obj >= 0))


def region_nms(anchor_centers: np.ndarray, scores: np.ndarray, iou_threshold: float) -> np.ndarray:
    """Greedy NMS on region anchors keyed by their best class score.

    Returns the sorted indices of the kept regions; ties in score are broken
    by position.
    """
    n = len(scores)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    key = scores.max(axis=1) if scores.ndim == 2 else scores
    order = np.argsort(-key, kind="stable")
    corners = to_corners(anchor_centers)
    alive = np.ones(n, dtype=bool)
    keep = []
    for i in order:
        if not alive[i]:
            continue
        keep.append(i)
        rest = np.flatnonzero(alive)
        ov = pairwise_iou(corners[i : i + 1], corners[rest])[0]
        alive[rest[ov > iou_threshold]] = False
        alive[i] = False
    return np.sort(np.array(keep, dtype=np.int64))


def _check_anchor_indices(idx: np.ndarray, n_anchors: int, scene_id) -> None:
    bad = np.flatnonzero((idx < 0) | (idx >= n_anchors))
    if bad.size:
        r = int(bad[0])
        raise InputFormatError(
            f"scene {scene_id}: region {r} references anchor {int(idx[r])}, "
            f"valid range is [0, {n_anchors})")


def vote_scene(anchor_centers: np.ndarray, scene: SceneArrays, cfg: VotingConfig,
               num_verbs: int, scene_id=0) -> VoteResult:
    """Vectorised equivalent of the scalar composition for one scene.

    Cost is linear in the number of regions (times the number of detections).
    """
    _check_anchor_indices(scene.anchor_index, len(anchor_centers), scene_id)
    r_all = len(scene.anchor_index)
    kept = np.arange(r_all)
    if cfg.nms_enabled and r_all:
        kept = region_nms(anchor_centers[scene.anchor_index], scene.inter_scores, cfg.region_nms_iou)
    # fixed reduction order: by anchor index, then input position
    kept = kept[np.argsort(scene.anchor_index[kept], kind="stable")]
    sa = scene.take_regions(kept)
    r = len(kept)
    human = np.full(r, -1, dtype=np.int64)
    obj = np.full(r, -1, dtype=np.int64)
    prob = np.zeros(r)
    d = len(sa.det_scores)
    fused: dict[tuple[int, int], np.ndarray] = {}
    if r and d:
        a = anchor_centers[sa.anchor_index]
        ac = to_corners(a)
        dc = to_corners(sa.det_boxes)
        inter = pairwise_intersection(ac, dc)
        det_area = (dc[:, 2] - dc[:, 0]) * (dc[:, 3] - dc[:, 1])
        anc_area = (ac[:, 2] - ac[:, 0]) * (ac[:, 3] - ac[:, 1])
        cov = inter / det_area[None, :]
        ious = inter / (anc_area[:, None] + det_area[None, :] - inter)

        is_h = sa.det_classes == HUMAN_CLASS
        h_ok = (cov > cfg.t_h) & is_h[None, :]
        h_best = np.argmax(np.where(h_ok, ious, -1.0), axis=1)
        has_h = h_ok.any(axis=1)
        human[has_h] = h_best[has_h]

        rows = np.flatnonzero(has_h)
        if rows.size:
            hb = sa.det_boxes[human[rows]]
            aw, ah = a[rows, 2], a[rows, 3]
            vx = (sa.det_boxes[None, :, 0] - hb[:, None, 0]) / aw[:, None]
            vy = (sa.det_boxes[None, :, 1] - hb[:, None, 1]) / ah[:, None]
            mx = (sa.object_boxes[rows, 0] - sa.human_boxes[rows, 0]) / aw
            my = (sa.object_boxes[rows, 1] - sa.human_boxes[rows, 1]) / ah
            d2 = (vx - mx[:, None]) ** 2 + (vy - my[:, None]) ** 2
            p = np.exp(-d2 / (2.0 * cfg.sigma * cfg.sigma))
            o_ok = cov[rows] > cfg.t_o
            o_ok[np.arange(rows.size), human[rows]] = False
            o_best = np.argmax(np.where(o_ok, p, -1.0), axis=1)
            has_o = o_ok.any(axis=1)
            sel = rows[has_o]
            obj[sel] = o_best[has_o]
            prob[sel] = p[np.flatnonzero(has_o), o_best[has_o]]

        voting = np.flatnonzero(obj >= 0)
        if voting.size:
            loc = sa.inter_scores[voting] * prob[voting, None]
            key = human[voting] * d + obj[voting]
            table = np.zeros((d * d, sa.inter_scores.shape[1]))
            np.add.at(table, key, loc)
            for k in np.unique(key):
                fused[(int(k // d), int(k % d))] = table[k]

    triplets = _score_arrays(fused, sa, cfg, num_verbs)
    return VoteResult(triplets, fused, human, obj, prob, kept)


def _score_arrays(fused, sa: SceneArrays, cfg: VotingConfig, num_verbs: int) -> list[TripletScore]:
    out = []
    acts = sa.det_actions
    for (h, o), f in fused.items():
        s = sa.det_scores[h] * sa.det_scores[o] * (acts[h, :num_verbs] + acts[o, :num_verbs]) * f
        for c in np.flatnonzero((s >= cfg.score_floor) & (s > 0)):
            out.append(TripletScore(h, o, int(c), float(s[c])))
    for h in np.flatnonzero(sa.det_classes == HUMAN_CLASS):
        s = sa.det_scores[h] * acts[h, num_verbs:]
        for c in np.flatnonzero((s >= cfg.score_floor) & (s > 0)):
            out.append(TripletScore(int(h), None, int(c) + num_verbs, float(s[c])))
    out.sort(key=_sort_key)
    return out


def run_voting(anchors: Sequence[Anchor] | np.ndarray, detections: Sequence[InstanceDetection],
               regions: Sequence[RegionPrediction], cfg: VotingConfig, num_verbs: int,
               scene_id=0) -> list[TripletScore]:
    """Score all triplets of one scene.

    ``anchors`` is the full anchor list (or its center-form array) that the
    regions' ``anchor_index`` values refer to.
    """
    if isinstance(anchors, np.ndarray):
        centers = np.asarray(anchors, dtype=np.float64).reshape(-1, 4)
    else:
        centers = np.array([a.box.as_array() for a in anchors]).reshape(-1, 4)
    sa = SceneArrays.build(detections, regions, num_verbs)
    return vote_scene(centers, sa, cfg, num_verbs, scene_id).triplets


# ---------------------------------------------------------------------------
# visualisation grid


def fused_distribution(anchor_centers: np.ndarray, detections: Sequence[InstanceDetection],
                       regions: Sequence[RegionPrediction], cfg: VotingConfig, human_det: int,
                       verb_id: int | None, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Human-centric object location map summed over the human's regions.

    Every region whose human match is ``human_det`` contributes, whether or
    not an object later passes its coverage gate.  ``verb_id=None`` sums the
    class scores.  Returns an array of shape ``(len(ys), len(xs))``.
    """
    if not 0 <= human_det < len(detections) or not detections[human_det].is_human:
        raise ContractViolation(f"detection {human_det} is not a human detection")
    _check_anchor_indices(np.array([r.anchor_index for r in regions], dtype=np.int64),
                          len(anchor_centers), "-")
    hd = detections[human_det]
    gx, gy = np.meshgrid(np.asarray(xs, float), np.asarray(ys, float))
    grid = np.zeros_like(gx)
    for region in sorted(regions, key=lambda rg: rg.anchor_index):
        a = Box(*map(float, anchor_centers[region.anchor_index]))
        if match_region_to_human(region, a, detections, cfg.t_h) != human_det:
            continue
        w = sum(region.inter_scores) if verb_id is None else region.inter_scores[verb_id]
        mx = (region.object_box.cx - region.human_box.cx) / a.w
        my = (region.object_box.cy - region.human_box.cy) / a.h
        d2 = ((gx - hd.box.cx) / a.w - mx) ** 2 + ((gy - hd.box.cy) / a.h - my) ** 2
        grid += w * np.exp(-d2 / (2.0 * cfg.sigma * cfg.sigma))
    return grid
