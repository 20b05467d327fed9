"""Scene-level drivers: inference over many scenes, evaluation, ablations, timing."""

from __future__ import annotations

import dataclasses
import time
from typing import Mapping, Sequence

import numpy as np

from ..assignment import GtScene, Thresholds, assign_arrays
from ..errors import ConfigError, InputFormatError
from ..evaluation import VerbAP, evaluate, map_role
from ..geometry import AnchorConfig, anchor_array
from ..losses import ClassTargets, LossConfig, LossVariant, interaction_loss
from ..voting import InstanceDetection, RegionPrediction, SceneArrays, TripletScore, vote_scene
from .config import BENCHMARK_SEEDS, NOISY_BENCHMARK, RunConfig
from .synth import SynthData, gen_synth

AXES = ("nms_iou", "sigma", "thresholds", "loss_variant")

DEFAULT_SWEEPS = {
    "nms_iou": [1.0, 0.9, 0.7, 0.5],
    "sigma": [0.5, 0.7, 0.9, 1.1, 1.3],
    # (t_h, t_o, t_u), the three settings compared in the threshold ablation
    "thresholds": [(0.5, 0.5, 0.5), (0.25, 0.25, 0.5), (0.25, 0.25, 0.25)],
    "loss_variant": ["focal", "foreground", "ignorance"],
}


def infer_scenes(anchors: AnchorConfig, detections: Mapping[int, Sequence[InstanceDetection]],
                 regions: Mapping[int, Sequence[RegionPrediction]], run: RunConfig,
                 voting=None) -> dict[int, list[TripletScore]]:
    """Run voting on every scene present in ``detections`` (scene-id order)."""
    voting = voting or run.voting
    centers, _ = anchor_array(anchors)
    out = {}
    for sid in sorted(detections):
        sa = SceneArrays.build(detections[sid], regions.get(sid, ()), run.num_verbs)
        out[sid] = vote_scene(centers, sa, voting, run.num_verbs, scene_id=sid).triplets
    extra = set(regions) - set(detections)
    if extra:
        raise InputFormatError(f"region predictions for scenes without detections: {sorted(extra)[:5]}")
    return out


def evaluate_scenes(triplets: Mapping[int, Sequence[TripletScore]],
                    detections: Mapping[int, Sequence[InstanceDetection]],
                    scenes: Sequence[GtScene], run: RunConfig) -> tuple[list[VerbAP], float]:
    preds, dets = [], []
    for gt in scenes:
        if gt.scene_id not in detections:
            raise InputFormatError(f"no detections for ground-truth scene {gt.scene_id}")
        preds.append(triplets.get(gt.scene_id, []))
        dets.append(detections[gt.scene_id])
    aps = evaluate(preds, dets, scenes, run.eval, run.num_actions)
    return aps, map_role(aps)


def run_benchmark(run: RunConfig, data: SynthData | None = None, voting=None) -> float:
    data = data or gen_synth(run)
    trip = infer_scenes(run.anchors, data.detections, data.regions, run, voting)
    return evaluate_scenes(trip, data.detections, data.scenes, run)[1]


def noisy_benchmark(run: RunConfig, seed: int | None = None, scene_count: int = 50) -> RunConfig:
    """The seeded noisy benchmark the ablation trends are measured on."""
    s = run.synth
    synth = dataclasses.replace(s, scene_count=scene_count, seed=s.seed if seed is None else seed,
                                **NOISY_BENCHMARK)
    return run.replace(synth=synth)


def ablate(run: RunConfig, axis: str, values: Sequence | None = None) -> list[dict]:
    """Sweep one axis over the synthetic benchmark in ``run.synth``; one row per setting."""
    axis = axis.lower().replace("-", "_")
    if axis not in AXES:
        raise ConfigError(f"unknown ablation axis {axis!r}; choose from {', '.join(AXES)}")
    values = list(DEFAULT_SWEEPS[axis] if values is None else values)
    rows = []
    if axis in ("nms_iou", "sigma"):
        data = gen_synth(run)
        for v in values:
            field = "region_nms_iou" if axis == "nms_iou" else "sigma"
            voting = dataclasses.replace(run.voting, **{field: float(v)})
            rows.append({axis: float(v), "map_role": run_benchmark(run, data, voting)})
    elif axis == "thresholds":
        for v in values:
            t_h, t_o, t_u = (float(x) for x in v)
            th = Thresholds(t_u=t_u, t_h=t_h, t_o=t_o)
            sub = run.replace(thresholds=th,
                              voting=dataclasses.replace(run.voting, t_h=t_h, t_o=t_o))
            data = gen_synth(sub)
            rows.append({"t_h": t_h, "t_o": t_o, "t_u": t_u, "flagged_pairs": data.flagged_pairs,
                         "regions": sum(len(r) for r in data.regions.values()),
                         "map_role": run_benchmark(sub, data)})
    else:
        rows = loss_statistics(run, [LossVariant(v) for v in values])
    return rows


def benchmark_sweep(run: RunConfig, axis: str, values: Sequence | None = None,
                    seeds: Sequence[int] = BENCHMARK_SEEDS, scene_count: int = 50) -> list[dict]:
    """Run :func:`ablate` on the noisy benchmark for each seed and average ``map_role``.

    Each row keeps the first seed's other columns.  The per-seed values of
    ``map_role``, ``flagged_pairs`` and ``regions`` go under ``<key>_per_seed``
    and ``map_role`` holds their mean.
    """
    if not seeds:
        raise ConfigError("benchmark_sweep needs at least one seed")
    per_seed = [ablate(noisy_benchmark(run, seed, scene_count), axis, values) for seed in seeds]
    rows = []
    for k, row in enumerate(per_seed[0]):
        row = dict(row)
        for key in ("flagged_pairs", "regions", "map_role"):
            if key in row:
                row[f"{key}_per_seed"] = [table[k][key] for table in per_seed]
        if "map_role" in row:
            row["map_role"] = float(np.mean(row["map_role_per_seed"]))
        rows.append(row)
    return rows


def simulated_logits(run: RunConfig, data: SynthData, sid: int, n_anchors: int) -> np.ndarray:
    """Logits for every anchor: regions give logit(score), other anchors draw low logits."""
    rng = np.random.default_rng([run.synth.seed, sid, 7])
    logits = rng.normal(-4.0, 1.5, size=(n_anchors, run.num_verbs))
    for r in data.regions[sid]:
        s = np.clip(np.asarray(r.inter_scores), 1e-4, 1 - 1e-4)
        logits[r.anchor_index] = np.log(s) - np.log1p(-s)
    return logits


def loss_statistics(run: RunConfig, variants: Sequence[LossVariant]) -> list[dict]:
    """Interaction-classification loss of each variant on simulated logits."""
    data = gen_synth(run)
    centers, _ = anchor_array(run.anchors)
    rows = []
    for variant in variants:
        cfg = dataclasses.replace(run.loss, variant=variant)
        total, bg_share, grad_norm = 0.0, 0.0, 0.0
        for gt in data.scenes:
            asg = assign_arrays(centers, gt, run.thresholds, run.num_verbs)
            targets = ClassTargets.from_assignment(asg)
            logits = simulated_logits(run, data, gt.scene_id, len(centers))
            value, grad = interaction_loss(logits, targets, cfg)
            total += value
            g = np.abs(grad).sum()
            bg_share += float(np.abs(grad[~targets.foreground]).sum() / g) if g > 0 else 0.0
            grad_norm += float(np.linalg.norm(grad))
        n = max(1, len(data.scenes))
        rows.append({"loss_variant": variant.value, "mean_loss": total / n,
                     "background_grad_share": bg_share / n, "mean_grad_norm": grad_norm / n})
    return rows


def bench_voting(run: RunConfig, scales: Sequence[int] = (1, 2, 4, 8, 16), base_regions: int = 4000,
                 repeats: int = 5) -> tuple[list[dict], float | None]:
    """Time voting on one synthetic scene whose regions are duplicated to each scale.

    Returns the per-scale rows and the log-log slope of time against region
    count (``None`` for a single scale).
    """
    synth = dataclasses.replace(run.synth, scene_count=1, humans_per_scene=(4, 4),
                                objects_per_scene=(6, 6), interact_prob=1.0, drop_rate=0.0)
    data = gen_synth(run.replace(synth=synth))
    centers, _ = anchor_array(run.anchors)
    regions = data.regions[0]
    if not regions:
        raise ConfigError("benchmark scene produced no interaction regions")
    unit = max(1, -(-base_regions // len(regions)))
    rows = []
    for k in scales:
        tiled = list(regions) * (unit * int(k))
        sa = SceneArrays.build(data.detections[0], tiled, run.num_verbs)
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            res = vote_scene(centers, sa, run.voting, run.num_verbs)
            times.append(time.perf_counter() - t0)
        rows.append({"scale": int(k), "regions": len(tiled), "seconds": min(times),
                     "voting_regions": res.num_voting_regions})
    slope = None
    if len(rows) > 1:
        x = np.log([r["regions"] for r in rows])
        y = np.log([r["seconds"] for r in rows])
        slope = float(np.polyfit(x, y, 1)[0])
    return rows, slope
