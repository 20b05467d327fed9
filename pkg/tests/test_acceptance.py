"""Acceptance criteria, one test each; the summary hook prints a pass/fail line per criterion."""

from __future__ import annotations

import math
import time

import numpy as np
import pytest
from helpers import ORACLE_ANCHORS, brute_force_assign, random_class_targets, random_scene

from dirv.assignment import HUMAN_CLASS, IGNORED, GtInstance, GtInteraction, GtScene, Thresholds, assign_regions
from dirv.evaluation import average_precision, evaluate, map_role, match_triplets
from dirv.geometry import Box, generate_anchors, iou
from dirv.gradcheck import check_gradient
from dirv.harness.config import RunConfig, SynthConfig
from dirv.harness.pipeline import bench_voting, benchmark_sweep, evaluate_scenes, infer_scenes
from dirv.harness.synth import gen_synth
from dirv.losses import (
    LossConfig,
    LossVariant,
    ignorance_loss,
    instance_action_bce,
    interaction_loss,
    smooth_l1,
)
from dirv.voting import InstanceDetection, RegionPrediction, TripletScore, VotingConfig, location_prob, run_voting

GRAD_TOL = 1e-4


def criterion(number: int, description: str):
    return pytest.mark.criterion(number, description)


@criterion(1, "assignment equals the brute-force oracle bitwise on 100 scenes (< 30 s)")
def test_c1_assignment_oracle():
    anchors = generate_anchors(ORACLE_ANCHORS)
    assert len(anchors) >= 720
    th = Thresholds()
    start = time.perf_counter()
    for k in range(100):
        scene = random_scene(np.random.default_rng([1, k]), scene_id=k)
        assert repr(assign_regions(anchors, scene, th, 6)) == repr(brute_force_assign(anchors, scene, th, 6))
    assert time.perf_counter() - start < 30


@criterion(2, "analytic gradients match central differences, rel. error < 1e-4 over 20 seeds (< 10 s)")
def test_c2_gradients():
    start = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng([2, seed])
        t = random_class_targets(rng, 25, 6)
        x = rng.normal(0, 2, size=t.labels.shape)
        for v in LossVariant:
            cfg = LossConfig(variant=v)
            worst = max(worst, check_gradient(lambda z: interaction_loss(z, t, cfg), x, step=1e-4))
        target = rng.normal(0, 1, size=(12, 4))
        d = rng.normal(0, 0.3, size=target.shape)
        # keep every residual clear of the |d| = beta kink, where the difference quotient is one-sided
        d = np.where(np.abs(np.abs(d) - 0.1) < 1e-3, d + 3e-3 * np.sign(d), d)
        worst = max(worst, check_gradient(lambda z: smooth_l1(z, target, 0.1), target + d, step=1e-4))
        logits = rng.normal(0, 2, size=(10, 8))
        labels = (rng.random(logits.shape) < 0.4).astype(float)
        mask = rng.random(logits.shape) < 0.6
        worst = max(worst, check_gradient(lambda z: instance_action_bce(z, labels, mask), logits, step=1e-4))
    assert worst < GRAD_TOL, worst
    assert time.perf_counter() - start < 10


@criterion(3, "ignorance loss is bitwise unchanged by background and IGNORED logits (20 seeds)")
def test_c3_ignorance_invariance():
    cfg = LossConfig()
    for seed in range(20):
        rng = np.random.default_rng([3, seed])
        t = random_class_targets(rng, 40, 6)
        x = rng.normal(0, 2, size=t.labels.shape)
        base = ignorance_loss(x, t, cfg)[0]
        y = x.copy()
        y[~t.foreground] = rng.normal(0, 10, size=y[~t.foreground].shape)
        assert ignorance_loss(y, t, cfg)[0] == base
        ign = t.labels == IGNORED
        assert ign.any()
        y = x.copy()
        y[ign] = rng.normal(0, 10, size=int(ign.sum()))
        assert ignorance_loss(y, t, cfg)[0] == base


@criterion(4, "single-region voting chain exact to 1e-12; Gaussian spot values to 1e-9")
def test_c4_voting_exactness():
    sigma = 0.9
    a = Box.from_corners(0, 0, 64, 48)
    h = InstanceDetection(Box.from_corners(4, 6, 28, 44), HUMAN_CLASS, 0.9, (0.7, 0.2, 0.1, 0.6))
    o = InstanceDetection(Box.from_corners(34, 14, 54, 30), 5, 0.8, (0.6, 0.3, 0.05))
    reg = RegionPrediction(0, (0.75, 0.4, 0.0), Box.from_corners(5, 5, 29, 45), Box.from_corners(30, 16, 52, 34))
    # location probability, weighted score, sum over the single region, final score
    vx, vy = (o.box.cx - h.box.cx) / a.w, (o.box.cy - h.box.cy) / a.h
    mx = (reg.object_box.cx - reg.human_box.cx) / a.w
    my = (reg.object_box.cy - reg.human_box.cy) / a.h
    p = math.exp(-((vx - mx) ** 2 + (vy - my) ** 2) / (2 * sigma**2))
    fused = [s * p for s in reg.inter_scores]
    want = {c: h.score * o.score * (h.action_scores[c] + o.action_scores[c]) * fused[c] for c in range(3)}
    out = run_voting(np.array([a.as_array()]), [h, o], [reg], VotingConfig(sigma=sigma), 3)
    got = {t.verb_id: t.score for t in out if t.object_det == 1 and t.human_det == 0}
    assert set(got) == {0, 1}
    for c, v in got.items():
        assert abs(v - want[c]) < 1e-12
    mu = (h.box.cx + reg.object_box.cx - reg.human_box.cx, h.box.cy + reg.object_box.cy - reg.human_box.cy)
    assert abs(location_prob(reg, a, h, mu, sigma) - 1.0) < 1e-9
    off = (mu[0] + sigma * a.w, mu[1])
    assert abs(location_prob(reg, a, h, off, sigma) - 0.606531) < 1e-6
    assert abs(location_prob(reg, a, h, off, sigma) - math.exp(-0.5)) < 1e-9


@criterion(5, "noise-free synthetic benchmark gives mAP_role = 1.0 on 50 scenes (< 60 s)")
def test_c5_perfect_recovery():
    start = time.perf_counter()
    run = RunConfig().replace(synth=SynthConfig(scene_count=50))
    data = gen_synth(run)
    trip = infer_scenes(run.anchors, data.detections, data.regions, run)
    _, m = evaluate_scenes(trip, data.detections, data.scenes, run)
    assert abs(m - 1.0) < 1e-9
    assert time.perf_counter() - start < 60


@pytest.fixture(scope="module")
def nms_rows():
    return benchmark_sweep(RunConfig(), "nms_iou")


@pytest.mark.slow
@criterion(6, "mean mAP_role is non-increasing as region-NMS tightens and voting alone is best")
def test_c6_nms_trend(nms_rows):
    maps = [r["map_role"] for r in nms_rows]
    assert [r["nms_iou"] for r in nms_rows] == [1.0, 0.9, 0.7, 0.5]
    assert all(a >= b for a, b in zip(maps, maps[1:])), maps
    assert maps[0] == max(maps)


@pytest.mark.slow
@criterion(7, "denser thresholds give mAP >= the sparse setting; flagged pairs strictly increase")
def test_c7_threshold_direction():
    rows = benchmark_sweep(RunConfig(), "thresholds")
    assert [(r["t_h"], r["t_o"], r["t_u"]) for r in rows] == [(0.5, 0.5, 0.5), (0.25, 0.25, 0.5),
                                                               (0.25, 0.25, 0.25)]
    assert rows[2]["map_role"] >= rows[0]["map_role"]
    for k in range(len(rows[0]["flagged_pairs_per_seed"])):
        counts = [r["flagged_pairs_per_seed"][k] for r in rows]
        assert counts[0] < counts[1] < counts[2], counts


@pytest.mark.slow
@criterion(8, "mAP_role stays within 0.05 of the sigma = 0.9 value for sigma in 0.5..1.3")
def test_c8_sigma_band():
    rows = benchmark_sweep(RunConfig(), "sigma")
    ref = next(r["map_role"] for r in rows if r["sigma"] == 0.9)
    assert [r["sigma"] for r in rows] == [0.5, 0.7, 0.9, 1.1, 1.3]
    assert all(abs(r["map_role"] - ref) <= 0.05 for r in rows)


@criterion(9, "voting time grows linearly: log-log slope over a 16x range in [0.8, 1.3]")
def test_c9_linear_voting():
    rows, slope = bench_voting(RunConfig(), scales=(1, 2, 4, 8, 16))
    assert rows[-1]["regions"] == 16 * rows[0]["regions"]
    assert 0.8 <= slope <= 1.3, slope


@criterion(10, "evaluator hand cases: 5/6 AP, IoU 0.5 is FP, perfect gives 1.0, empty gives 0.0")
def test_c10_evaluator():
    assert abs(average_precision([True, False, True], [0.9, 0.8, 0.7], 2) - 5 / 6) < 1e-12
    hb, ob = Box.from_corners(0, 0, 12, 20), Box.from_corners(20, 0, 30, 10)
    gt = GtScene(64, 64, (GtInstance(hb, HUMAN_CLASS), GtInstance(ob, 2)), (GtInteraction(0, 1, 0),))
    half = Box.from_corners(4, 0, 16, 20)
    assert iou(hb, half) == 0.5

    def dets(h):
        return [InstanceDetection(h, HUMAN_CLASS, 1.0), InstanceDetection(ob, 2, 1.0)]

    assert match_triplets([TripletScore(0, 1, 0, 0.9)], dets(half), gt) == [False]
    assert map_role(evaluate([[TripletScore(0, 1, 0, 0.9)]], [dets(hb)], [gt])) == 1.0
    assert map_role(evaluate([[]], [dets(hb)], [gt])) == 0.0


def test_benchmark_rows_are_seed_means(nms_rows):
    for r in nms_rows:
        assert r["map_role"] == pytest.approx(float(np.mean(r["map_role_per_seed"])), abs=0)
        assert len(r["map_role_per_seed"]) == 5

