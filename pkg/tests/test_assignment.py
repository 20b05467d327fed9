from __future__ import annotations

import math

import numpy as np
import pytest
from helpers import ORACLE_ANCHORS, brute_force_assign, random_scene

from dirv.assignment import (
    HUMAN_CLASS,
    IGNORED,
    NEGATIVE,
    POSITIVE,
    GtInstance,
    GtInteraction,
    GtScene,
    Role,
    Thresholds,
    assign_arrays,
    assign_instance_actions,
    assign_regions,
    instance_action_matrix,
    overlap_flag,
    overlap_level,
    overlap_matrices,
)
from dirv.errors import ConfigError, ContractViolation, InputFormatError
from dirv.geometry import Anchor, Box, anchor_array, encode_deltas, generate_anchors, iou, to_corners

TH = Thresholds()
ANCHORS = generate_anchors(ORACLE_ANCHORS)


def two_box_scene(verbs=(2,), extra=()) -> GtScene:
    h = GtInstance(Box.from_corners(10, 10, 20, 30), HUMAN_CLASS)
    o = GtInstance(Box.from_corners(18, 20, 28, 30), 3)
    inter = tuple(GtInteraction(0, 1, v) for v in verbs) + tuple(extra)
    return GtScene(64, 64, (h, o), inter)


def test_overlap_flag_and_level_on_union_anchor():
    scene = two_box_scene()
    u = Box.from_corners(10, 10, 28, 30)
    assert overlap_flag(u, scene.interactions[0], scene, TH) == 1
    assert overlap_level(u, scene.interactions[0], scene) == 2.0
    far = Box(60, 60, 2, 2)
    assert overlap_flag(far, scene.interactions[0], scene, TH) == 0
    assert overlap_level(far, scene.interactions[0], scene) == 0.0


def test_overlap_flag_is_strict():
    # anchor covering exactly a quarter of the union box, and all of both instances' shared strip
    h = GtInstance(Box.from_corners(0, 0, 4, 4), HUMAN_CLASS)
    o = GtInstance(Box.from_corners(0, 0, 4, 4), 1)
    scene = GtScene(64, 64, (h, o), (GtInteraction(0, 1, 0),))
    quarter = Box.from_corners(0, 0, 2, 2)
    assert iou(quarter, h.box) == 0.25
    assert overlap_flag(quarter, scene.interactions[0], scene, TH) == 0
    assert overlap_flag(quarter, scene.interactions[0], scene, Thresholds(0.2, 0.2, 0.2)) == 1


def test_noobject_interactions_raise_in_scalar_ops():
    scene = GtScene(64, 64, (GtInstance(Box(5, 5, 4, 4), HUMAN_CLASS),), (GtInteraction(0, None, 6),))
    with pytest.raises(ContractViolation):
        overlap_flag(Box(5, 5, 4, 4), scene.interactions[0], scene, TH)
    with pytest.raises(ContractViolation):
        overlap_level(Box(5, 5, 4, 4), scene.interactions[0], scene)


def test_zero_interactions_leave_every_anchor_unmatched():
    scene = GtScene(64, 64, (GtInstance(Box(30, 30, 20, 20), HUMAN_CLASS),), ())
    out = assign_regions(ANCHORS, scene, TH, 6)
    assert len(out) == len(ANCHORS)
    assert all(r.matched_interaction is None and r.human_deltas is None for r in out)
    assert all(r.class_targets == (NEGATIVE,) * 6 for r in out)


def test_single_candidate_anchor():
    scene = two_box_scene(verbs=(2,))
    anchor = Anchor(Box.from_corners(10, 10, 28, 30), 0, 0)
    [r] = assign_regions([anchor], scene, TH, 4)
    assert r.matched_interaction == 0
    assert r.class_targets == (NEGATIVE, NEGATIVE, POSITIVE, NEGATIVE)
    assert r.human_deltas == encode_deltas(anchor.box, scene.instances[0].box)
    assert r.object_deltas == encode_deltas(anchor.box, scene.instances[1].box)


def test_same_pair_verbs_are_all_positive():
    scene = two_box_scene(verbs=(1, 3))
    [r] = assign_regions([Anchor(Box.from_corners(10, 10, 28, 30), 0, 0)], scene, TH, 4)
    assert r.class_targets == (NEGATIVE, POSITIVE, NEGATIVE, POSITIVE)


def test_ignored_comes_from_a_non_dominant_interaction():
    h = GtInstance(Box.from_corners(10, 10, 20, 30), HUMAN_CLASS)
    o1 = GtInstance(Box.from_corners(18, 20, 28, 30), 3)
    o2 = GtInstance(Box.from_corners(16, 12, 26, 24), 4)
    scene = GtScene(64, 64, (h, o1, o2), (GtInteraction(0, 1, 0), GtInteraction(0, 2, 1)))
    anchor = Anchor(Box.from_corners(10, 10, 28, 30), 0, 0)
    assert overlap_flag(anchor, scene.interactions[1], scene, TH) == 1
    assert overlap_level(anchor, scene.interactions[0], scene) > overlap_level(anchor, scene.interactions[1], scene)
    [r] = assign_regions([anchor], scene, TH, 3)
    assert r.matched_interaction == 0
    assert r.class_targets == (POSITIVE, IGNORED, NEGATIVE)


def test_tie_goes_to_lowest_interaction_index():
    h = GtInstance(Box.from_corners(10, 10, 20, 30), HUMAN_CLASS)
    o = GtInstance(Box.from_corners(18, 20, 28, 30), 3)
    twin = GtInstance(o.box, 5)
    scene = GtScene(64, 64, (h, twin, o), (GtInteraction(0, 2, 0), GtInteraction(0, 1, 1)))
    [r] = assign_regions([Anchor(Box.from_corners(10, 10, 28, 30), 0, 0)], scene, TH, 2)
    assert r.matched_interaction == 0
    assert r.class_targets == (POSITIVE, IGNORED)


def test_matches_brute_force_oracle_bitwise():
    ties = 0
    for s in range(100):
        scene = random_scene(np.random.default_rng([11, s]), scene_id=s)
        fast = assign_regions(ANCHORS, scene, TH, 6)
        slow = brute_force_assign(ANCHORS, scene, TH, 6)
        assert repr(fast) == repr(slow)
        flags, levels = overlap_matrices(to_corners(anchor_array(ORACLE_ANCHORS)[0]), scene, TH)
        for j in np.flatnonzero(flags.sum(axis=1) > 1):
            lv = levels[j, flags[j]]
            ties += int(np.sum(lv == lv.max()) > 1)
    assert ties > 0, "the random scenes should exercise the tie-break"


def test_structural_invariants_on_random_scenes():
    for s in range(30):
        scene = random_scene(np.random.default_rng([12, s]), scene_id=s)
        asg = assign_arrays(ANCHORS, scene, TH, 6)
        fg = asg.foreground
        assert np.array_equal(fg, asg.flags.any(axis=1))
        assert np.all(np.isnan(asg.human_deltas[~fg])) and np.all(np.isfinite(asg.human_deltas[fg]))
        assert not np.any(asg.labels[~fg] != NEGATIVE)
        assert set(np.unique(asg.labels)) <= {IGNORED, NEGATIVE, POSITIVE}
        # every IGNORED cell needs at least two overlapping interactions on that anchor
        ign_rows = np.flatnonzero((asg.labels == IGNORED).any(axis=1))
        assert np.all(asg.flags[ign_rows].sum(axis=1) >= 2)
        # each foreground anchor has a positive verb from its dominant interaction
        for j in np.flatnonzero(fg):
            it = scene.interactions[asg.matched[j]]
            assert asg.labels[j, it.verb_id] == POSITIVE
            assert asg.human_deltas[j].tolist() == list(encode_deltas(ANCHORS[j].box, scene.human_box(asg.matched[j])))


@pytest.mark.parametrize("field", ["t_u", "t_h", "t_o"])
def test_raising_a_threshold_never_adds_pairs(field):
    corners = to_corners(anchor_array(ORACLE_ANCHORS)[0])
    for s in range(20):
        scene = random_scene(np.random.default_rng([13, s]))
        low, _ = overlap_matrices(corners, scene, TH)
        high, _ = overlap_matrices(corners, scene, Thresholds(**{**TH.__dict__, field: 0.5}))
        assert not np.any(high & ~low)


def test_dense_thresholds_flag_more_pairs():
    corners = to_corners(anchor_array(ORACLE_ANCHORS)[0])
    dense = sparse = 0
    for s in range(50):
        scene = random_scene(np.random.default_rng([14, s]))
        dense += overlap_matrices(corners, scene, TH)[0].sum()
        sparse += overlap_matrices(corners, scene, Thresholds(0.5, 0.5, 0.5))[0].sum()
    assert dense >= sparse and dense > 0


def test_threshold_validation():
    with pytest.raises(ConfigError):
        Thresholds(t_u=0.0)
    with pytest.raises(ConfigError):
        Thresholds(t_h=1.0)


def test_scene_validation():
    h = GtInstance(Box(5, 5, 4, 4), HUMAN_CLASS)
    o = GtInstance(Box(9, 9, 4, 4), 2)
    with pytest.raises(InputFormatError):
        GtScene(64, 64, (h, o), (GtInteraction(1, 0, 0),)).validate()
    with pytest.raises(InputFormatError):
        GtScene(64, 64, (h, o), (GtInteraction(0, 5, 0),)).validate()
    with pytest.raises(InputFormatError):
        GtScene(64, 64, (h, o), (GtInteraction(0, None, 1),)).validate(num_verbs=6, num_noobject_verbs=2)
    with pytest.raises(InputFormatError):
        GtScene(64, 64, (h, o), (GtInteraction(0, 1, 7),)).validate(num_verbs=6, num_noobject_verbs=2)
    GtScene(64, 64, (h, o), (GtInteraction(0, None, 7), GtInteraction(0, 1, 5))).validate(6, 2)


def test_noobject_interactions_form_no_regions():
    h = GtInstance(Box(32, 32, 30, 30), HUMAN_CLASS)
    scene = GtScene(64, 64, (h,), (GtInteraction(0, None, 6),))
    asg = assign_arrays(ANCHORS, scene, TH, 6)
    assert not asg.foreground.any()


# ---------------------------------------------------------------------------
# instance-action targets


def literal_instance_actions(anchors, scene, pos_iou, num_verbs, num_noobject_verbs):
    out = []
    for a in anchors:
        ious = [iou(a.box, inst.box) for inst in scene.instances]
        b = int(np.argmax(ious)) if ious else -1
        if b < 0 or ious[b] < pos_iou:
            out.append((Role.NONE, ()))
            continue
        as_h = [it for it in scene.interactions if it.human_idx == b]
        as_o = [it for it in scene.interactions if it.object_idx == b]
        if not as_h and not as_o:
            out.append((Role.NONE, ()))
        elif scene.instances[b].is_human:
            vec = [0] * (num_verbs + num_noobject_verbs)
            for it in as_h:
                vec[it.verb_id] = 1
            out.append((Role.HUMAN, tuple(vec)))
        else:
            vec = [0] * num_verbs
            for it in as_o:
                vec[it.verb_id] = 1
            out.append((Role.OBJECT, tuple(vec)))
    return out


def test_instance_actions_match_literal_two_pass():
    for s in range(30):
        scene = random_scene(np.random.default_rng([15, s]))
        got = assign_instance_actions(ANCHORS, scene, num_verbs=6, num_noobject_verbs=2)
        want = literal_instance_actions(ANCHORS, scene, 0.5, 6, 2)
        assert [(t.role, t.action_targets) for t in got] == want


def test_instance_action_examples():
    h = GtInstance(Box.from_corners(8, 8, 24, 40), HUMAN_CLASS)
    idle = GtInstance(Box.from_corners(40, 40, 56, 56), 2)
    o = GtInstance(Box.from_corners(24, 8, 40, 24), 3)
    scene = GtScene(64, 64, (h, idle, o), (GtInteraction(0, 2, 1), GtInteraction(0, None, 6)))
    anchors = [Anchor(h.box, 0, 0), Anchor(idle.box, 0, 1), Anchor(o.box, 0, 2)]
    t = assign_instance_actions(anchors, scene, num_verbs=6, num_noobject_verbs=2)
    assert t[0].role is Role.HUMAN and t[0].action_targets == (0, 1, 0, 0, 0, 0, 1, 0)
    assert t[1].role is Role.NONE and t[1].action_targets == ()
    assert t[2].role is Role.OBJECT and t[2].action_targets == (0, 1, 0, 0, 0, 0)
    targets, mask = instance_action_matrix(t, 8)
    assert mask.sum() == 8 + 6
    assert targets[0, 6] == 1 and not mask[2, 6]


def test_instance_action_pos_iou_is_checked():
    with pytest.raises(ContractViolation):
        assign_instance_actions(ANCHORS, two_box_scene(), pos_iou=1.0, num_verbs=6)


def test_overlap_level_formula_from_raw_areas():
    rng = np.random.default_rng(16)
    for s in range(50):
        scene = random_scene(rng)
        for it in scene.interactions:
            if it.object_idx is None:
                continue
            a = ANCHORS[int(rng.integers(len(ANCHORS)))].box
            hx1, hy1, hx2, hy2 = scene.instances[it.human_idx].box.corners
            ox1, oy1, ox2, oy2 = scene.instances[it.object_idx].box.corners
            ax1, ay1, ax2, ay2 = a.corners

            def inter(x1, y1, x2, y2):
                return max(0.0, min(ax2, x2) - max(ax1, x1)) * max(0.0, min(ay2, y2) - max(ay1, y1))

            ux1, uy1, ux2, uy2 = min(hx1, ox1), min(hy1, oy1), max(hx2, ox2), max(hy2, oy2)
            iu = inter(ux1, uy1, ux2, uy2)
            u = iu / (a.area + (ux2 - ux1) * (uy2 - uy1) - iu)
            ch = inter(hx1, hy1, hx2, hy2) / ((hx2 - hx1) * (hy2 - hy1))
            co = inter(ox1, oy1, ox2, oy2) / ((ox2 - ox1) * (oy2 - oy1))
            assert overlap_level(a, it, scene) == pytest.approx(u + math.sqrt(ch * co), abs=1e-12)
