"""Command-line driver: generate scenes, train, run the mask ablation,
evaluate depth maps and run gradient checks.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from ..gradmask import MaskConfig
from ..io import FormatError, read_pfm, write_pfm, write_pgm
from ..metrics import CSV_HEADER, evaluate_depth
from ..regularizers import LossConfig
from ..scenes import crop_scene, load_scene, make_box_scene, make_plane_scene, save_scene
from .model import MASK_MODES, POSE_MODES, scene_mask
from .train import RunConfig, ablation_csv, initial_state, optimize, predicted_depth, run_ablation

__all__ = ["main", "build_parser"]

HISTORY_HEADER = "iter,l_gra,l_seg,l_smooth,total"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _size(text):
    parts = text.lower().split("x")
    try:
        dims = [int(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must be N or HxW, got {text!r}") from None
    if len(dims) == 1:
        dims = dims * 2
    if len(dims) != 2:
        raise argparse.ArgumentTypeError(f"size must be N or HxW, got {text!r}")
    return tuple(dims)


def _add_run_flags(p):
    p.add_argument("--scene", required=True, help="scene directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--iters", type=_positive_int, default=2000)
    p.add_argument("--lr", type=float, default=RunConfig.lr)
    p.add_argument("--mask", choices=MASK_MODES, default="gam")
    p.add_argument("--pose", choices=POSE_MODES, default="gt")
    p.add_argument("--seg", choices=("on", "off"), default="on")
    p.add_argument("--seed", type=int, default=0)
    _add_loss_flags(p)


def _add_loss_flags(p):
    p.add_argument("--beta", type=float, default=MaskConfig.beta)
    p.add_argument("--gamma1", type=float, default=MaskConfig.gamma1)
    p.add_argument("--gamma2", type=float, default=MaskConfig.gamma2)
    p.add_argument("--alpha", type=float, default=LossConfig.alpha)
    for i in range(1, 5):
        p.add_argument(f"--lambda{i}", type=float, default=getattr(LossConfig, f"lambda{i}"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gamdepth", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="render a synthetic scene to a directory")
    g.add_argument("--kind", choices=("plane", "box"), default="plane")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--size", type=_size, default=(64, 64), help="N or HxW (default 64)")
    g.add_argument("--textureless", type=float, default=0.0, help="band fraction for plane scenes")

    _add_run_flags(sub.add_parser("train", help="optimise depth for one scene"))
    _add_run_flags(sub.add_parser("ablate", help="train with every mask mode and compare"))

    e = sub.add_parser("eval", help="metrics of a predicted depth map against ground truth")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)

    c = sub.add_parser("gradcheck", help="finite-difference check of the full objective")
    c.add_argument("--scene", help="scene directory; random scenes when omitted")
    c.add_argument("--count", type=_positive_int, default=10, help="random scenes to check")
    c.add_argument("--size", type=_positive_int, default=8, help="crop size of random scenes")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--coords", type=_positive_int, default=6, help="coordinates per parameter block")
    c.add_argument("--tol", type=float, default=1e-4)
    c.add_argument("--mask", choices=MASK_MODES)
    c.add_argument("--pose", choices=POSE_MODES)
    c.add_argument("--seg", choices=("on", "off"))
    _add_loss_flags(c)
    return parser


def _loss_config(args) -> LossConfig:
    return LossConfig(
        alpha=args.alpha,
        lambda1=args.lambda1,
        lambda2=args.lambda2,
        lambda3=args.lambda3,
        lambda4=args.lambda4,
        mask=MaskConfig(args.beta, args.gamma1, args.gamma2),
    )


def _run_config(args) -> RunConfig:
    return RunConfig(
        loss=_loss_config(args),
        iterations=args.iters,
        lr=args.lr,
        mask_mode=args.mask,
        pose_mode=args.pose,
        seg=args.seg == "on",
        seed=args.seed,
        scene_path=args.scene,
        out_dir=args.out,
    )


def _write(path: Path, text: str):
    path.write_text(text, newline="\n")


def cmd_generate(args):
    if args.kind == "plane":
        scene = make_plane_scene(args.seed, args.size, args.textureless)
    else:
        if args.textureless:
            raise ValueError("--textureless applies to plane scenes only")
        scene = make_box_scene(args.seed, args.size)
    save_scene(scene, args.out)


def cmd_train(args):
    run = _run_config(args)
    scene = load_scene(args.scene)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    state, history = optimize(initial_state(scene, run), scene, run)
    pred = predicted_depth(state)
    row = evaluate_depth(pred, scene.gt_depth)
    _write(out / "metrics.csv", f"{CSV_HEADER}\n{row.to_csv()}\n")
    lines = [HISTORY_HEADER]
    lines += [f"{i},{h.l_gra!r},{h.l_seg!r},{h.l_smooth!r},{h.total!r}" for i, h in enumerate(history)]
    _write(out / "history.csv", "\n".join(lines) + "\n")
    write_pfm(out / "depth_pred.pfm", pred)
    mask = scene_mask(scene, run.mask_mode, run.loss)
    write_pgm(out / "mask.pgm", np.round(np.clip(mask, 0.0, 1.0) * 255).astype(np.uint8))
    print(f"{CSV_HEADER}\n{row.to_csv()}")


def cmd_ablate(args):
    run = _run_config(args)
    scene = load_scene(args.scene)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows, _ = run_ablation(scene, run)
    text = ablation_csv(rows)
    _write(out / "ablation.csv", text)
    sys.stdout.write(text)


def cmd_eval(args):
    pred, gt = read_pfm(args.pred), read_pfm(args.gt)
    print(evaluate_depth(pred, gt).to_csv())


def cmd_gradcheck(args):
    from .oracle import check_forward_loss

    cfg = _loss_config(args)
    if args.scene:
        scenes = [load_scene(args.scene)]
    else:
        rng = np.random.default_rng(args.seed)
        scenes = []
        for i in range(args.count):
            make = make_plane_scene if i % 2 == 0 else make_box_scene
            extra = (float(rng.choice([0.0, 0.4])),) if make is make_plane_scene else ()
            full = make(int(rng.integers(2**31)), (16, 16), *extra)
            top, left = (int(x) for x in rng.integers(0, 16 - args.size + 1, size=2))
            scenes.append(crop_scene(full, top, left, args.size, args.size))
    worst = 0.0
    for i, scene in enumerate(scenes):
        modes = [(m, p, s) for m in MASK_MODES for p in POSE_MODES for s in (True, False)]
        mm, pm, sm = modes[i % len(modes)]
        mm = args.mask or mm
        pm = args.pose or pm
        sm = sm if args.seg is None else args.seg == "on"
        report = check_forward_loss(scene, cfg, mm, pm, sm, seed=args.seed + i, max_coords=args.coords)
        worst = max(worst, report.max_rel_error)
        print(
            f"scene {i} mask={mm} pose={pm} seg={'on' if sm else 'off'} "
            f"max_rel_error={report.max_rel_error:.3e} checked={report.n_checked} skipped={report.n_skipped}"
        )
    print(f"worst {worst:.3e} (tolerance {args.tol:g})")
    if not worst < args.tol:
        raise RuntimeError(f"gradient check failed: {worst:.3e} >= {args.tol:g}")


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "ablate": cmd_ablate,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1
    try:
        COMMANDS[args.command](args)
    except (FormatError, OSError, ValueError, RuntimeError) as exc:
        print(f"gamdepth {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
