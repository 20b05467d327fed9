"""Role mAP: greedy triplet matching and per-verb average precision."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .assignment import GtScene
from .errors import ConfigError, EvaluationError, InputFormatError
from .geometry import iou
from .voting import InstanceDetection, TripletScore


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation settings.

    A prediction matches when both boxes have IoU strictly above
    ``iou_threshold``.  For no-object verbs only the human box is compared;
    with ``noobject_requires_empty_object`` a prediction that names an object
    for such a verb is a false positive.
    """

    iou_threshold: float = 0.5
    ap_style: str = "continuous"
    noobject_requires_empty_object: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.iou_threshold < 1.0:
            raise ConfigError(f"iou_threshold must lie in (0, 1), got {self.iou_threshold}")
        if self.ap_style != "continuous":
            raise ConfigError(f"unsupported ap_style {self.ap_style!r}; only 'continuous'")


@dataclass(frozen=True)
class VerbAP:
    verb_id: int
    ap: float | None
    tp_count: int
    fp_count: int
    gt_count: int


def _check_refs(preds: Sequence[TripletScore], n_det: int, scene_id) -> None:
    for k, t in enumerate(preds):
        if not 0 <= t.human_det < n_det or (t.object_det is not None and not 0 <= t.object_det < n_det):
            raise InputFormatError(
                f"scene {scene_id}: triplet {k} references a detection outside [0, {n_det})")


def match_triplets(preds: Sequence[TripletScore], detections: Sequence[InstanceDetection],
                   gt: GtScene, cfg: EvalConfig = EvalConfig()) -> list[bool]:
    """True-positive flag for each prediction of one scene, in input order.

    Predictions are processed per verb in descending score order (stable).
    Each prediction claims the unclaimed ground truth of its verb with the
    largest min(human IoU, object IoU) among those above the threshold.
    """
    _check_refs(preds, len(detections), gt.scene_id)
    flags = [False] * len(preds)
    claimed = [False] * len(gt.interactions)
    order = sorted(range(len(preds)), key=lambda k: (preds[k].verb_id, -preds[k].score))
    thr = cfg.iou_threshold
    for k in order:
        t = preds[k]
        hbox = detections[t.human_det].box
        obox = detections[t.object_det].box if t.object_det is not None else None
        best, best_ov = None, -1.0
        for g, it in enumerate(gt.interactions):
            if claimed[g] or it.verb_id != t.verb_id:
                continue
            ov_h = iou(hbox, gt.instances[it.human_idx].box)
            if not ov_h > thr:
                continue
            if it.object_idx is None:
                if obox is not None and cfg.noobject_requires_empty_object:
                    continue
                ov = ov_h
            else:
                if obox is None:
                    continue
                ov_o = iou(obox, gt.instances[it.object_idx].box)
                if not ov_o > thr:
                    continue
                ov = min(ov_h, ov_o)
            if ov > best_ov:
                best, best_ov = g, ov
        if best is not None:
            claimed[best] = True
            flags[k] = True
    return flags


def average_precision(flags: Sequence[bool], scores: Sequence[float], gt_count: int) -> float | None:
    """All-points interpolated AP; ``None`` when there is no ground truth."""
    if gt_count == 0:
        return None
    if len(flags) == 0:
        return 0.0
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    tp = np.asarray(flags, dtype=bool)[order]
    ctp = np.cumsum(tp)
    cfp = np.cumsum(~tp)
    rec = ctp / gt_count
    prec = ctp / (ctp + cfp)
    mrec = np.concatenate([[0.0], rec, [1.0]])
    mpre = np.concatenate([[0.0], prec, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def map_role(verb_aps: Sequence[VerbAP]) -> float:
    """Unweighted mean AP over verbs that have ground truth."""
    vals = [v.ap for v in verb_aps if v.gt_count > 0 and v.ap is not None]
    if not vals:
        raise EvaluationError("no verb has ground-truth interactions; mAP is undefined")
    return float(np.mean(vals))


def evaluate(all_preds: Sequence[Sequence[TripletScore]],
             all_detections: Sequence[Sequence[InstanceDetection]],
             gts: Sequence[GtScene], cfg: EvalConfig = EvalConfig(),
             num_verbs_total: int | None = None) -> list[VerbAP]:
    """Per-verb AP over a set of scenes (predictions pooled across scenes)."""
    if not len(all_preds) == len(all_detections) == len(gts):
        raise InputFormatError("predictions, detections and ground truth cover different scene counts")
    verbs = set()
    for gt in gts:
        verbs.update(it.verb_id for it in gt.interactions)
    for preds in all_preds:
        verbs.update(t.verb_id for t in preds)
    if num_verbs_total is not None:
        verbs.update(range(num_verbs_total))
    pooled: dict[int, tuple[list[bool], list[float]]] = {v: ([], []) for v in verbs}
    gt_counts = dict.fromkeys(verbs, 0)
    for preds, dets, gt in zip(all_preds, all_detections, gts):
        for it in gt.interactions:
            gt_counts[it.verb_id] += 1
        for t, f in zip(preds, match_triplets(preds, dets, gt, cfg)):
            pooled[t.verb_id][0].append(f)
            pooled[t.verb_id][1].append(t.score)
    out = []
    for v in sorted(verbs):
        flags, scores = pooled[v]
        tp = int(sum(flags))
        out.append(VerbAP(v, average_precision(flags, scores, gt_counts[v]), tp,
                          len(flags) - tp, gt_counts[v]))
    return out
