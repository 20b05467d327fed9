"""Command-line entry points.

Every command accepts ``--config FILE`` (JSON mirroring the run
configuration) and any number of ``--set section.field=value`` overrides.
Tables and reports are printed to stdout as JSON.

Exit codes: 0 on success, 1 for unreadable or inconsistent input files,
2 for configuration and usage errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from ..assignment import assign_arrays
from ..errors import ConfigError, DirvError, InputFormatError
from ..geometry import anchor_array
from ..gradcheck import check_gradient
from ..losses import ClassTargets, LossVariant, interaction_loss, smooth_l1
from ..voting import fused_distribution
from . import io
from .config import RunConfig, load_config
from .pipeline import (
    AXES,
    ablate,
    bench_voting,
    benchmark_sweep,
    evaluate_scenes,
    infer_scenes,
    noisy_benchmark,
)
from .synth import gen_synth

EXIT_OK, EXIT_INPUT, EXIT_CONFIG = 0, 1, 2

GT_FILE = "ground_truth.jsonl"
DET_FILE = "detections.jsonl"
REGION_FILE = "regions.jsonl"


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2))


def _with_seed(run: RunConfig, seed: int) -> RunConfig:
    return run.replace(synth=dataclasses.replace(run.synth, seed=int(seed)))


# ---------------------------------------------------------------------------
# commands


def cmd_gen_synth(args, run: RunConfig) -> int:
    run = _with_seed(run, args.seed)
    if args.noisy:
        run = noisy_benchmark(run, args.seed, run.synth.scene_count)
    if args.scenes is not None:
        run = run.replace(synth=dataclasses.replace(run.synth, scene_count=args.scenes))
    data = gen_synth(run)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_ground_truth(out / GT_FILE, data.scenes)
    io.write_detections(out / DET_FILE, data.detections)
    io.write_regions(out / REGION_FILE, data.regions)
    _emit({"scenes": len(data.scenes), "regions": sum(len(r) for r in data.regions.values()),
           "flagged_pairs": data.flagged_pairs, "out": str(out)})
    return EXIT_OK


def cmd_assign(args, run: RunConfig) -> int:
    scenes = io.read_ground_truth(args.gt)
    centers, _ = anchor_array(run.anchors)
    dumps = {}
    for s in scenes:
        s.validate(run.num_verbs, run.num_noobject_verbs)
        dumps[s.scene_id] = assign_arrays(centers, s, run.thresholds, run.num_verbs)
    io.write_assignments(args.out, dumps)
    _emit({"scenes": len(scenes), "anchors": len(centers),
           "matched_anchors": int(sum(a.foreground.sum() for a in dumps.values()))})
    return EXIT_OK


def _away_from_kink(d: np.ndarray, beta: float, margin: float) -> np.ndarray:
    # finite differences straddling |d| == beta measure the kink, not the gradient
    near = np.abs(np.abs(d) - beta) < margin
    return np.where(near, d + 2.0 * margin * np.sign(d), d)


def cmd_loss_check(args, run: RunConfig) -> int:
    centers, _ = anchor_array(run.anchors)
    dumps = io.read_assignments(args.assignments, len(centers), run.num_verbs)
    variants = [LossVariant(v) for v in args.variants]
    report = {v.value: {"loss": [], "max_grad_error": 0.0} for v in variants}
    report["smooth_l1"] = {"loss": [], "max_grad_error": 0.0}
    for sid in sorted(dumps):
        asg = dumps[sid]
        rng = np.random.default_rng([args.seed, sid])
        logits = rng.normal(0.0, 2.0, size=asg.labels.shape)
        targets = ClassTargets.from_assignment(asg)
        # gradient check on all foreground rows plus a sample of background rows
        fg = np.flatnonzero(asg.foreground)
        bg = np.flatnonzero(~asg.foreground)
        rows = np.sort(np.concatenate([fg[:args.rows], rng.choice(bg, min(args.rows, len(bg)),
                                                                    replace=False)]))
        sub = ClassTargets(targets.labels[rows], targets.foreground[rows])
        for v in variants:
            cfg = dataclasses.replace(run.loss, variant=v)
            value, _ = interaction_loss(logits, targets, cfg)
            err = check_gradient(lambda x: interaction_loss(x, sub, cfg), logits[rows], args.step)
            report[v.value]["loss"].append(value)
            report[v.value]["max_grad_error"] = max(report[v.value]["max_grad_error"], err)
        if len(fg):
            beta = run.loss.smooth_l1_beta
            tgt = asg.human_deltas[fg[:args.rows]]
            pred = tgt + _away_from_kink(rng.normal(0.0, 0.2, size=tgt.shape), beta, 10 * args.step)
            value, _ = smooth_l1(pred, tgt, beta)
            err = check_gradient(lambda x: smooth_l1(x, tgt, beta), pred, args.step)
            report["smooth_l1"]["loss"].append(value)
            report["smooth_l1"]["max_grad_error"] = max(report["smooth_l1"]["max_grad_error"], err)
    for name, row in report.items():
        vals = row.pop("loss")
        row["mean_loss"] = float(np.mean(vals)) if vals else None
        row["scenes"] = len(vals)
    _emit(report)
    return EXIT_OK


def cmd_infer(args, run: RunConfig) -> int:
    dets = io.read_detections(args.detections)
    regions = io.read_regions(args.regions)
    triplets = infer_scenes(run.anchors, dets, regions, run)
    io.write_triplets(args.out, triplets)
    _emit({"scenes": len(triplets), "triplets": sum(len(t) for t in triplets.values())})
    return EXIT_OK


def cmd_eval(args, run: RunConfig) -> int:
    triplets = io.read_triplets(args.triplets)
    dets = io.read_detections(args.detections)
    scenes = io.read_ground_truth(args.gt)
    aps, m = evaluate_scenes(triplets, dets, scenes, run)
    _emit({"map_role": m, "verbs": [dataclasses.asdict(a) for a in aps]})
    return EXIT_OK


def cmd_ablate(args, run: RunConfig) -> int:
    values = json.loads(args.values) if args.values else None
    if values is not None and not isinstance(values, list):
        raise ConfigError("--values must be a JSON list")
    if args.scenes is not None:
        run = run.replace(synth=dataclasses.replace(run.synth, scene_count=args.scenes))
    if args.clean:
        rows = []
        for seed in args.seed:
            rows.extend(dict(r, seed=seed) for r in ablate(_with_seed(run, seed), args.axis, values))
    else:
        rows = benchmark_sweep(run, args.axis, values, seeds=args.seed,
                               scene_count=run.synth.scene_count)
    _emit({"axis": args.axis, "seeds": args.seed, "rows": rows})
    return EXIT_OK


def cmd_bench_voting(args, run: RunConfig) -> int:
    run = _with_seed(run, args.seed)
    rows, slope = bench_voting(run, args.scales, args.base_regions, args.repeats)
    _emit({"rows": rows, "loglog_slope": slope})
    return EXIT_OK


def cmd_emit_distribution(args, run: RunConfig) -> int:
    dets = io.read_detections(args.detections)
    regions = io.read_regions(args.regions)
    if args.scene_id not in dets:
        raise InputFormatError(f"scene {args.scene_id} not found in {args.detections}")
    centers, _ = anchor_array(run.anchors)
    xs = np.arange(0.0, run.anchors.image_width, args.step) + 0.5 * args.step
    ys = np.arange(0.0, run.anchors.image_height, args.step) + 0.5 * args.step
    grid = fused_distribution(centers, dets[args.scene_id], regions.get(args.scene_id, []),
                              run.voting, args.human, args.verb, xs, ys)
    if str(args.out).endswith(".csv"):
        np.savetxt(args.out, grid, delimiter=",", fmt="%.17g")
    else:
        with open(args.out, "wb") as fh:
            np.save(fh, grid)
    _emit({"shape": list(grid.shape), "max": float(grid.max()) if grid.size else 0.0,
           "out": str(args.out)})
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.FIELD=VALUE", help="override one configuration field")

    parser = argparse.ArgumentParser(prog="dirv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", parents=[common], help="generate a synthetic benchmark")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--scenes", type=int)
    p.add_argument("--noisy", action="store_true", help="use the noisy benchmark noise settings")
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("assign", parents=[common], help="dump interaction-region assignments")
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_assign)

    p = sub.add_parser("loss-check", parents=[common],
                       help="loss values and finite-difference gradient errors on random logits")
    p.add_argument("--assignments", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rows", type=int, default=16, help="rows per scene in the gradient check")
    p.add_argument("--step", type=float, default=1e-4)
    p.add_argument("--variants", nargs="+", default=[v.value for v in LossVariant],
                   choices=[v.value for v in LossVariant])
    p.set_defaults(func=cmd_loss_check)

    p = sub.add_parser("infer", parents=[common], help="vote region predictions into triplets")
    p.add_argument("--detections", required=True)
    p.add_argument("--regions", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", parents=[common], help="per-verb AP and role mAP")
    p.add_argument("--triplets", required=True)
    p.add_argument("--detections", required=True, help="detections the triplets index into")
    p.add_argument("--gt", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", parents=[common], help="sweep one setting on the synthetic benchmark")
    p.add_argument("--axis", required=True, choices=AXES)
    p.add_argument("--seed", type=_int_list, required=True,
                   help="benchmark seed(s), comma separated; map_role is averaged over them")
    p.add_argument("--values", help="JSON list of settings (default: the standard sweep)")
    p.add_argument("--scenes", type=int)
    p.add_argument("--clean", action="store_true",
                   help="use the configured synthetic noise instead of the noisy benchmark")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("bench-voting", parents=[common], help="voting wall time against region count")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--scales", type=_int_list, default=[1, 2, 4, 8, 16])
    p.add_argument("--base-regions", type=int, default=4000)
    p.add_argument("--repeats", type=int, default=5)
    p.set_defaults(func=cmd_bench_voting)

    p = sub.add_parser("emit-distribution", parents=[common],
                       help="human-centric object location grid (.npy or .csv)")
    p.add_argument("--detections", required=True)
    p.add_argument("--regions", required=True)
    p.add_argument("--scene-id", type=int, required=True)
    p.add_argument("--human", type=int, required=True, help="index of the human detection")
    p.add_argument("--verb", type=int, help="verb id (default: sum over verbs)")
    p.add_argument("--step", type=float, default=1.0, help="grid spacing in pixels")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_emit_distribution)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", None) == []:
        parser.error("--seed needs at least one value")
    try:
        run = load_config(args.config, args.overrides)
        return args.func(args, run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DirvError, ValueError, ArithmeticError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
