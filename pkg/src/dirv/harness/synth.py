"""Synthetic scenes with known interactions and simulated network outputs.

Every scene places each human in its own tile of a square grid, with its
objects inside the same tile, so distinct groups never compete for the same
interaction regions.  Simulated outputs:

* detections: ground-truth boxes plus pixel jitter, scores ``1 - |noise|``,
  action scores close to 1 on the instance's verbs and close to 0 elsewhere;
* region predictions: one per anchor flagged for some interaction (minus the
  drop rate), regressing the dominant interaction's boxes with jitter
  proportional to the anchor size, interaction scores peaked on its verbs.

Randomness is keyed by ``(seed, scene_id, stream[, anchor_index])`` so each
scene and each anchor draws from its own stream.  All coordinates are
quantised to 1/1024 px, which keeps the corner/center conversions exact and
makes the files round-trip bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..assignment import (
    HUMAN_CLASS,
    POSITIVE,
    GtInstance,
    GtInteraction,
    GtScene,
    Thresholds,
    assign_arrays,
)
from ..geometry import AnchorConfig, Box, anchor_array
from ..voting import InstanceDetection, RegionPrediction
from .config import RunConfig, SynthConfig

_Q = 1024.0

STREAM_SCENE = 0
STREAM_DETECTIONS = 1
STREAM_REGIONS = 2


def _q(x: float) -> float:
    return round(x * _Q) / _Q


def _box(x1: float, y1: float, x2: float, y2: float, min_size: float = 1.0) -> Box:
    x1, y1 = _q(x1), _q(y1)
    x2 = max(_q(x2), x1 + min_size)
    y2 = max(_q(y2), y1 + min_size)
    return Box.from_corners(x1, y1, x2, y2)


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng([int(k) for k in key])


@dataclass
class SynthData:
    scenes: list[GtScene]
    detections: dict[int, list[InstanceDetection]]
    regions: dict[int, list[RegionPrediction]]
    flagged_pairs: int = 0


def make_scene(cfg: SynthConfig, scene_id: int, num_verbs: int, num_noobject_verbs: int) -> GtScene:
    rng = _rng(cfg.seed, scene_id, STREAM_SCENE)
    n_h = int(rng.integers(max(1, cfg.humans_per_scene[0]), cfg.humans_per_scene[1] + 1))
    n_o = int(rng.integers(cfg.objects_per_scene[0], cfg.objects_per_scene[1] + 1))
    g = math.ceil(math.sqrt(n_h))
    tw, th = cfg.image_width / g, cfg.image_height / g
    tiles = rng.permutation(g * g)[:n_h]

    def place(tile: int, wfrac, hfrac) -> Box:
        tx, ty = (tile % g) * tw, (tile // g) * th
        mx, my = 0.1 * tw, 0.1 * th
        w = rng.uniform(*wfrac) * tw
        h = rng.uniform(*hfrac) * th
        x1 = rng.uniform(tx + mx, tx + tw - mx - w)
        y1 = rng.uniform(ty + my, ty + th - my - h)
        return _box(x1, y1, x1 + w, y1 + h)

    instances = [GtInstance(place(t, (0.15, 0.3), (0.35, 0.6)), HUMAN_CLASS) for t in tiles]
    owners = rng.integers(0, n_h, size=n_o)
    for o in range(n_o):
        cls = int(rng.integers(1, cfg.num_object_classes + 1))
        instances.append(GtInstance(place(tiles[owners[o]], (0.1, 0.3), (0.1, 0.3)), cls))

    interactions = []
    for o in range(n_o):
        if rng.random() >= cfg.interact_prob:
            continue
        verbs = [int(rng.integers(num_verbs))]
        if num_verbs > 1 and rng.random() < cfg.second_verb_prob:
            verbs.append(int((verbs[0] + 1 + rng.integers(num_verbs - 1)) % num_verbs))
        for v in verbs:
            interactions.append(GtInteraction(int(owners[o]), n_h + o, v))
    if num_noobject_verbs:
        for h in range(n_h):
            if rng.random() < cfg.noobject_prob:
                interactions.append(
                    GtInteraction(h, None, num_verbs + int(rng.integers(num_noobject_verbs))))
    scene = GtScene(cfg.image_width, cfg.image_height, tuple(instances), tuple(interactions), scene_id)
    scene.validate(num_verbs, num_noobject_verbs)
    return scene


def _noisy_score(rng: np.random.Generator, positive: np.ndarray, cfg: SynthConfig) -> np.ndarray:
    noise = np.abs(rng.normal(0.0, 1.0, size=np.shape(positive)))
    return np.clip(np.where(positive, 1.0 - cfg.score_noise * noise,
                            cfg.negative_score_noise * noise), 0.0, 1.0)


def _jitter(rng: np.random.Generator, box: Box, sx: float, sy: float, ss: float) -> Box:
    if sx == 0 and sy == 0 and ss == 0:
        return box
    dx, dy, dw, dh = rng.normal(0.0, 1.0, size=4)
    cx, cy = box.cx + sx * dx, box.cy + sy * dy
    w, h = box.w * math.exp(ss * dw), box.h * math.exp(ss * dh)
    return _box(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)


def simulate_detections(cfg: SynthConfig, scene: GtScene, num_verbs: int,
                        num_noobject_verbs: int) -> list[InstanceDetection]:
    rng = _rng(cfg.seed, scene.scene_id, STREAM_DETECTIONS)
    v_all = num_verbs + num_noobject_verbs
    out = []
    for i, inst in enumerate(scene.instances):
        # relative size noise scaled so that box_noise px matches a ~40 px box
        box = _jitter(rng, inst.box, cfg.box_noise, cfg.box_noise, cfg.box_noise / 40.0)
        score = float(_noisy_score(rng, np.array(True), cfg))
        if inst.is_human:
            pos = np.zeros(v_all, dtype=bool)
            for it in scene.interactions:
                if it.human_idx == i:
                    pos[it.verb_id] = True
        else:
            pos = np.zeros(num_verbs, dtype=bool)
            for it in scene.interactions:
                if it.object_idx == i:
                    pos[it.verb_id] = True
        acts = _noisy_score(rng, pos, cfg)
        out.append(InstanceDetection(box, inst.class_id, score, tuple(float(a) for a in acts)))
    return out


def simulate_regions(cfg: SynthConfig, scene: GtScene, anchors: AnchorConfig, th: Thresholds,
                     num_verbs: int) -> tuple[list[RegionPrediction], int]:
    centers, _ = anchor_array(anchors)
    asg = assign_arrays(centers, scene, th, num_verbs)
    out = []
    for j in np.flatnonzero(asg.foreground):
        rng = _rng(cfg.seed, scene.scene_id, STREAM_REGIONS, j)
        if cfg.drop_rate > 0 and rng.random() < cfg.drop_rate:
            continue
        k = int(asg.matched[j])
        aw, ah = centers[j, 2], centers[j, 3]
        rn = cfg.region_noise
        hb = _jitter(rng, scene.human_box(k), rn * aw, rn * ah, rn)
        ob = _jitter(rng, scene.object_box(k), rn * aw, rn * ah, rn)
        positive = asg.labels[j] == POSITIVE
        if cfg.confusion_rate > 0 and num_verbs > 1 and rng.random() < cfg.confusion_rate:
            positive = np.roll(positive, int(rng.integers(1, num_verbs)))
        scores = _noisy_score(rng, positive, cfg)
        out.append(RegionPrediction(int(j), tuple(float(s) for s in scores), hb, ob))
    return out, asg.num_flagged_pairs


def gen_synth(run: RunConfig, synth: SynthConfig | None = None,
              thresholds: Thresholds | None = None) -> SynthData:
    """Generate scenes, detections and region predictions; deterministic in the seed."""
    synth = synth or run.synth
    th = thresholds or run.thresholds
    anchors = AnchorConfig(synth.image_width, synth.image_height, run.anchors.levels,
                           run.anchors.scales, run.anchors.aspect_ratios)
    data = SynthData([], {}, {})
    for sid in range(synth.scene_count):
        scene = make_scene(synth, sid, run.num_verbs, run.num_noobject_verbs)
        data.scenes.append(scene)
        data.detections[sid] = simulate_detections(synth, scene, run.num_verbs, run.num_noobject_verbs)
        data.regions[sid], flagged = simulate_regions(synth, scene, anchors, th, run.num_verbs)
        data.flagged_pairs += flagged
    return data
