"""Line-delimited JSON readers and writers.

One record per scene and line.  Boxes travel in corner form
``[x1, y1, x2, y2]`` and are converted to center form on load; ground-truth
boxes are clipped to the image.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Iterable, Iterator, Sequence

import numpy as np

from ..assignment import (
    IGNORED,
    NEGATIVE,
    POSITIVE,
    AssignmentArrays,
    GtInstance,
    GtInteraction,
    GtScene,
)
from ..errors import InputFormatError
from ..geometry import Box
from ..voting import InstanceDetection, RegionPrediction, TripletScore


def box_to_json(box: Box) -> list[float]:
    return [float(v) for v in box.corners]


def box_from_json(value: Any, where: str, clip: tuple[float, float] | None = None) -> Box:
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        raise InputFormatError(f"{where}: box must be a list of four numbers")
    try:
        x1, y1, x2, y2 = (float(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise InputFormatError(f"{where}: box has non-numeric entries") from exc
    if not all(math.isfinite(v) for v in (x1, y1, x2, y2)):
        raise InputFormatError(f"{where}: box has non-finite entries")
    if clip is not None:
        w, h = clip
        x1, x2 = min(max(x1, 0.0), w), min(max(x2, 0.0), w)
        y1, y2 = min(max(y1, 0.0), h), min(max(y2, 0.0), h)
    if not (x2 > x1 and y2 > y1):
        raise InputFormatError(f"{where}: box {list(value)} is empty")
    return Box.from_corners(x1, y1, x2, y2)


def _get(record: dict, key: str, where: str):
    try:
        return record[key]
    except (KeyError, TypeError):
        raise InputFormatError(f"{where}: missing field {key!r}") from None


def read_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise InputFormatError(f"cannot open {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputFormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict):
                raise InputFormatError(f"{path}:{lineno}: record must be an object")
            yield lineno, rec


def write_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


# ---------------------------------------------------------------------------
# ground truth


def scene_to_record(scene: GtScene) -> dict:
    return {
        "scene_id": scene.scene_id,
        "width": scene.image_width,
        "height": scene.image_height,
        "instances": [{"box": box_to_json(i.box), "class_id": i.class_id} for i in scene.instances],
        "interactions": [
            {"human_idx": it.human_idx, "object_idx": it.object_idx, "verb_id": it.verb_id}
            for it in scene.interactions
        ],
    }


def scene_from_record(rec: dict, where: str = "ground truth") -> GtScene:
    w, h = float(_get(rec, "width", where)), float(_get(rec, "height", where))
    instances = []
    for i, inst in enumerate(_get(rec, "instances", where)):
        loc = f"{where} instance {i}"
        instances.append(GtInstance(box_from_json(_get(inst, "box", loc), loc, clip=(w, h)),
                                    int(_get(inst, "class_id", loc))))
    interactions = []
    for k, it in enumerate(_get(rec, "interactions", where)):
        loc = f"{where} interaction {k}"
        obj = _get(it, "object_idx", loc)
        interactions.append(GtInteraction(int(_get(it, "human_idx", loc)),
                                          None if obj is None else int(obj),
                                          int(_get(it, "verb_id", loc))))
    scene = GtScene(w, h, tuple(instances), tuple(interactions), int(_get(rec, "scene_id", where)))
    scene.validate()
    return scene


def read_ground_truth(path: str | Path) -> list[GtScene]:
    return [scene_from_record(rec, f"{path}:{n}") for n, rec in read_jsonl(path)]


def write_ground_truth(path: str | Path, scenes: Sequence[GtScene]) -> None:
    write_jsonl(path, (scene_to_record(s) for s in scenes))


# ---------------------------------------------------------------------------
# detections


def detections_to_record(scene_id: int, dets: Sequence[InstanceDetection]) -> dict:
    return {
        "scene_id": scene_id,
        "detections": [
            {"box": box_to_json(d.box), "class_id": d.class_id, "score": d.score,
             "action_scores": list(d.action_scores)}
            for d in dets
        ],
    }


def detections_from_record(rec: dict, where: str = "detections") -> tuple[int, list[InstanceDetection]]:
    out = []
    for i, d in enumerate(_get(rec, "detections", where)):
        loc = f"{where} detection {i}"
        try:
            out.append(InstanceDetection(
                box_from_json(_get(d, "box", loc), loc),
                int(_get(d, "class_id", loc)),
                float(_get(d, "score", loc)),
                tuple(float(v) for v in d.get("action_scores", ())),
            ))
        except (TypeError, ValueError) as exc:
            raise InputFormatError(f"{loc}: {exc}") from exc
    return int(_get(rec, "scene_id", where)), out


def read_detections(path: str | Path) -> dict[int, list[InstanceDetection]]:
    return dict(detections_from_record(rec, f"{path}:{n}") for n, rec in read_jsonl(path))


def write_detections(path: str | Path, dets: dict[int, Sequence[InstanceDetection]]) -> None:
    write_jsonl(path, (detections_to_record(sid, dets[sid]) for sid in sorted(dets)))


# ---------------------------------------------------------------------------
# region predictions


def regions_to_record(scene_id: int, regions: Sequence[RegionPrediction]) -> dict:
    return {
        "scene_id": scene_id,
        "regions": [
            {"anchor_index": r.anchor_index, "inter_scores": list(r.inter_scores),
             "human_box": box_to_json(r.human_box), "object_box": box_to_json(r.object_box)}
            for r in regions
        ],
    }


def regions_from_record(rec: dict, where: str = "regions") -> tuple[int, list[RegionPrediction]]:
    out = []
    for i, r in enumerate(_get(rec, "regions", where)):
        loc = f"{where} region {i}"
        try:
            out.append(RegionPrediction(
                int(_get(r, "anchor_index", loc)),
                tuple(float(v) for v in _get(r, "inter_scores", loc)),
                box_from_json(_get(r, "human_box", loc), loc),
                box_from_json(_get(r, "object_box", loc), loc),
            ))
        except (TypeError, ValueError) as exc:
            raise InputFormatError(f"{loc}: {exc}") from exc
    return int(_get(rec, "scene_id", where)), out


def read_regions(path: str | Path) -> dict[int, list[RegionPrediction]]:
    return dict(regions_from_record(rec, f"{path}:{n}") for n, rec in read_jsonl(path))


def write_regions(path: str | Path, regions: dict[int, Sequence[RegionPrediction]]) -> None:
    write_jsonl(path, (regions_to_record(sid, regions[sid]) for sid in sorted(regions)))


# ---------------------------------------------------------------------------
# triplets


def triplets_to_record(scene_id: int, triplets: Sequence[TripletScore]) -> dict:
    return {
        "scene_id": scene_id,
        "triplets": [
            {"human_det": t.human_det, "object_det": t.object_det, "verb_id": t.verb_id,
             "score": t.score}
            for t in triplets
        ],
    }


def triplets_from_record(rec: dict, where: str = "triplets") -> tuple[int, list[TripletScore]]:
    out = []
    for i, t in enumerate(_get(rec, "triplets", where)):
        loc = f"{where} triplet {i}"
        obj = _get(t, "object_det", loc)
        try:
            out.append(TripletScore(int(_get(t, "human_det", loc)), None if obj is None else int(obj),
                                    int(_get(t, "verb_id", loc)), float(_get(t, "score", loc))))
        except (TypeError, ValueError) as exc:
            raise InputFormatError(f"{loc}: {exc}") from exc
    return int(_get(rec, "scene_id", where)), out


def read_triplets(path: str | Path) -> dict[int, list[TripletScore]]:
    return dict(triplets_from_record(rec, f"{path}:{n}") for n, rec in read_jsonl(path))


def write_triplets(path: str | Path, triplets: dict[int, Sequence[TripletScore]]) -> None:
    write_jsonl(path, (triplets_to_record(sid, triplets[sid]) for sid in sorted(triplets)))


# ---------------------------------------------------------------------------
# assignment dumps (one record per matched anchor)


def _finite_list(row) -> list[float]:
    return [float(v) for v in row]


def assignment_records(scene_id: int, asg: AssignmentArrays) -> Iterator[dict]:
    for j in np.flatnonzero(asg.foreground):
        yield {
            "scene_id": scene_id,
            "anchor_index": int(j),
            "matched_interaction": int(asg.matched[j]),
            "class_targets": [int(v) for v in asg.labels[j]],
            "human_deltas": _finite_list(asg.human_deltas[j]),
            "object_deltas": _finite_list(asg.object_deltas[j]),
        }


def write_assignments(path: str | Path, assignments: dict[int, AssignmentArrays]) -> None:
    write_jsonl(path, (rec for sid in sorted(assignments)
                       for rec in assignment_records(sid, assignments[sid])))


def read_assignments(path: str | Path, num_anchors: int,
                     num_verbs: int) -> dict[int, AssignmentArrays]:
    """Rebuild dense assignments; anchors without a record are background (all NEGATIVE)."""
    out: dict[int, AssignmentArrays] = {}
    for n, rec in read_jsonl(path):
        where = f"{path}:{n}"
        sid = int(_get(rec, "scene_id", where))
        if sid not in out:
            out[sid] = AssignmentArrays(
                np.full(num_anchors, -1, dtype=np.int64),
                np.zeros((num_anchors, num_verbs), dtype=np.int8),
                np.full((num_anchors, 4), np.nan), np.full((num_anchors, 4), np.nan),
                np.zeros((num_anchors, 0), dtype=bool))
        asg = out[sid]
        j = int(_get(rec, "anchor_index", where))
        if not 0 <= j < num_anchors:
            raise InputFormatError(f"{where}: anchor_index {j} outside [0, {num_anchors})")
        labels = _get(rec, "class_targets", where)
        if len(labels) != num_verbs or any(v not in (POSITIVE, NEGATIVE, IGNORED) for v in labels):
            raise InputFormatError(f"{where}: class_targets must hold {num_verbs} codes in {{-1, 0, 1}}")
        asg.matched[j] = int(_get(rec, "matched_interaction", where))
        asg.labels[j] = labels
        for key, arr in (("human_deltas", asg.human_deltas), ("object_deltas", asg.object_deltas)):
            vals = _get(rec, key, where)
            if len(vals) != 4:
                raise InputFormatError(f"{where}: {key} must hold four numbers")
            arr[j] = vals
    return out
