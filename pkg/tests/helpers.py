"""Random scenes and literal loop oracles shared by the test modules."""

from __future__ import annotations

import math

import numpy as np

from dirv.assignment import (
    HUMAN_CLASS,
    IGNORED,
    NEGATIVE,
    POSITIVE,
    GtInstance,
    GtInteraction,
    GtScene,
    RegionAssignment,
    Thresholds,
)
from dirv.geometry import AnchorConfig, Box, coverage, encode_deltas, iou, union_box

# two levels on a 64x64 image, strides 8 and 16, 3 scales x 3 ratios: 720 anchors
ORACLE_ANCHORS = AnchorConfig(64, 64, levels=((8, 16), (16, 32)))


def random_box(rng: np.random.Generator, w: float, h: float, lo: float = 4, hi: float = 40) -> Box:
    # integer corners make exact ties between anchors and interactions common
    bw, bh = (int(v) for v in rng.integers(lo, hi, size=2))
    x1 = int(rng.integers(0, max(1, int(w) - bw)))
    y1 = int(rng.integers(0, max(1, int(h) - bh)))
    return Box.from_corners(x1, y1, x1 + bw, y1 + bh)


def random_scene(rng: np.random.Generator, num_verbs: int = 6, num_noobject_verbs: int = 2,
                 w: float = 64, h: float = 64, scene_id: int = 0) -> GtScene:
    """Scene with shared pairs, duplicated boxes, humans as objects and no-object verbs."""
    n_h = int(rng.integers(1, 4))
    n_o = int(rng.integers(0, 5))
    instances = [GtInstance(random_box(rng, w, h), HUMAN_CLASS) for _ in range(n_h)]
    for _ in range(n_o):
        if instances and rng.random() < 0.2:
            # exact duplicate of an earlier box: equal overlap levels, tie-break territory
            box = instances[int(rng.integers(len(instances)))].box
        else:
            box = random_box(rng, w, h)
        instances.append(GtInstance(box, int(rng.integers(1, 5))))
    interactions = []
    for _ in range(int(rng.integers(0, 7))):
        hi = int(rng.integers(n_h))
        if num_noobject_verbs and rng.random() < 0.15:
            interactions.append(GtInteraction(hi, None, num_verbs + int(rng.integers(num_noobject_verbs))))
            continue
        oi = int(rng.integers(len(instances)))
        if oi == hi:
            oi = (oi + 1) % len(instances)
        if oi == hi:
            continue
        interactions.append(GtInteraction(hi, oi, int(rng.integers(num_verbs))))
        if rng.random() < 0.25:
            # second verb on the same pair
            interactions.append(GtInteraction(hi, oi, int(rng.integers(num_verbs))))
    return GtScene(w, h, tuple(instances), tuple(interactions), scene_id)


def brute_force_assign(anchors, scene: GtScene, th: Thresholds, num_verbs: int) -> list[RegionAssignment]:
    """Double loop over (anchor, interaction) applying the three rules literally."""
    out = []
    for a in anchors:
        box = a.box
        flagged, best, best_level = [], None, -math.inf
        for k, it in enumerate(scene.interactions):
            if it.object_idx is None:
                continue
            hb = scene.instances[it.human_idx].box
            ob = scene.instances[it.object_idx].box
            u = iou(box, union_box(hb, ob))
            ch, co = coverage(box, hb), coverage(box, ob)
            if u > th.t_u and ch > th.t_h and co > th.t_o:
                flagged.append(k)
                level = u + math.sqrt(ch * co)
                if level > best_level:  # strict: the earliest maximum is kept
                    best, best_level = k, level
        if best is None:
            out.append(RegionAssignment(a.index, None, (NEGATIVE,) * num_verbs, None, None))
            continue
        dom = scene.interactions[best]
        positive = {it.verb_id for it in scene.interactions
                    if (it.human_idx, it.object_idx) == (dom.human_idx, dom.object_idx)}
        overlapping = {scene.interactions[k].verb_id for k in flagged}
        labels = tuple(POSITIVE if c in positive else IGNORED if c in overlapping else NEGATIVE
                       for c in range(num_verbs))
        out.append(RegionAssignment(
            a.index, best, labels,
            encode_deltas(box, scene.instances[dom.human_idx].box),
            encode_deltas(box, scene.instances[dom.object_idx].box),
        ))
    return out


def random_class_targets(rng: np.random.Generator, n: int, c: int):
    """Labels with background rows, IGNORED cells and at least one POSITIVE cell."""
    from dirv.losses import ClassTargets

    labels = rng.choice([IGNORED, NEGATIVE, POSITIVE], size=(n, c), p=[0.2, 0.5, 0.3]).astype(np.int8)
    fg = rng.random(n) < 0.6
    fg[0] = True
    labels[~fg] = NEGATIVE
    labels[0, 0] = POSITIVE
    return ClassTargets(labels, fg)
