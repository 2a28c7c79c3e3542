"""Command-line orchestration of the experiment pipeline.

Subcommands: collect, fit-sfa, fit-pca, analyze, train, eval. All
randomness of a command flows through its --seed flag, so identical
flags produce byte-identical artifacts. Output paths are resolved
against the SFANAV_OUT environment variable when set.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from . import agent as agent_mod
from . import analysis, hsfa, sfa, worldsim

ACTION_NAMES = {"left": worldsim.LEFT, "right": worldsim.RIGHT,
                "forward": worldsim.FORWARD}


def _out_path(path) -> Path:
    root = os.environ.get("SFANAV_OUT")
    p = Path(path)
    if root and not p.is_absolute():
        p = Path(root) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _parse_lra(text: str) -> dict:
    weights = {}
    for part in text.split(","):
        if "=" not in part:
            raise argparse.ArgumentTypeError(
                f"bad LRA spec {part!r}; expected e.g. left=4,right=4,forward=1")
        name, val = part.split("=", 1)
        name = name.strip().lower()
        if name not in ACTION_NAMES:
            raise argparse.ArgumentTypeError(f"unknown action {name!r}")
        weights[ACTION_NAMES[name]] = float(val)
    for a in worldsim.ACTIONS:
        weights.setdefault(a, 1.0)
    return weights


def _positive_int(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _load_extractor(path: str):
    """Feature extractor from a model file, selected by extension."""
    if path.endswith(".hsfa"):
        net = hsfa.load_network(path)
        return net.transform, net
    if path.endswith(".pca"):
        pca = analysis.load_pca(path)
        return pca.transform, pca
    raise SystemExit(f"cannot tell model type of {path!r} (use .hsfa or .pca)")


def _identity_extractor(obs):
    # raw 10x-downscaled grayscale pixels; debugging aid only
    gray = np.asarray(obs, dtype=np.float64).mean(axis=2)
    small = gray.reshape(6, 10, 8, 10).mean(axis=(1, 3))
    return (small / 255.0 - 0.5).ravel()


# ---------------------------------------------------------------------------
# subcommands

def cmd_collect(args):
    layout = worldsim.make_layout(args.layout)
    reset_every = args.reset_every or layout.l_max
    ds = worldsim.collect_random(layout, args.steps, reset_every,
                                 seed=args.seed,
                                 target_present=not args.empty)
    out = _out_path(args.out)
    worldsim.save_dataset(ds, out)
    occ = worldsim.occupancy_fraction(ds, layout)
    print(f"wrote {out} ({len(ds)} frames, layout {ds.layout_id}, "
          f"{len(ds.boundaries)} episode boundaries)")
    print(f"occupancy: {100 * occ:.1f}% of free-space bins visited")
    return 0


def cmd_fit_sfa(args):
    ds = worldsim.load_dataset(args.data)
    weights = None
    if args.lra:
        weights = sfa.lra_weights(ds.actions, args.lra)
    net = hsfa.fit_network(ds.observations, boundaries=ds.boundaries,
                           weights=weights, seed=args.seed,
                           noise_std=args.noise_std,
                           skip_boundaries=not args.keep_boundary_pairs)
    out = _out_path(args.out)
    hsfa.save_network(net, out)
    feats = net.transform_batch(ds.observations)
    report = sfa.constraint_report(feats)
    print(f"wrote {out} (shapes: {' -> '.join(str(s) for s in net.layer_shapes())})")
    print("constraint suite on training features (after clipping):")
    for key, val in report.items():
        print(f"  {key}: {val:.3e}")
    return 0


def cmd_fit_pca(args):
    ds = worldsim.load_dataset(args.data)
    pca = analysis.fit_pca_extractor(ds.observations, k=args.k)
    out = _out_path(args.out)
    analysis.save_pca(pca, out)
    cum = float(pca.explained_variance_ratio.sum())
    print(f"wrote {out} ({args.k} components, "
          f"cumulative explained variance {100 * cum:.1f}%)")
    return 0


def _parse_feature_range(text: str):
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(p) for p in text.split(",")]


def cmd_analyze(args):
    ds = worldsim.load_dataset(args.data)
    layout = worldsim.make_layout(ds.layout_id)
    transform, _ = _load_extractor(args.model)
    extractor_batch = None
    if args.model.endswith(".hsfa"):
        extractor_batch = hsfa.load_network(args.model).transform_batch
    else:
        extractor_batch = analysis.load_pca(args.model).transform_batch
    feats = extractor_batch(ds.observations)
    outdir = _out_path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    bounds = layout.bounds

    for idx in _parse_feature_range(args.features):
        fmap = analysis.feature_map(ds.poses, feats, idx)
        analysis.write_feature_map_csv(fmap, outdir / f"feature_{idx}.csv")
        worldsim.save_ppm(analysis.render_feature_map(fmap, bounds),
                          outdir / f"feature_{idx}.ppm")
        if args.sections:
            for si, section in enumerate(analysis.heading_sections(args.sections)):
                smap = analysis.feature_map(ds.poses, feats, idx,
                                            heading_section=section)
                worldsim.save_ppm(analysis.render_feature_map(smap, bounds),
                                  outdir / f"feature_{idx}_sec{si}.ppm")
    print(f"wrote feature maps for {args.features} to {outdir}")

    if args.heading:
        model, err = analysis.evaluate_heading(feats, ds.poses[:, 2])
        half = len(ds) // 2
        pred = model.predict(feats[half:])
        with open(outdir / "heading.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["phi_true", "phi_pred"])
            for pt, pp in zip(ds.poses[half:, 2], pred):
                writer.writerow([f"{pt:.6f}", f"{pp:.6f}"])
        print(f"heading: mean circular error {np.degrees(err):.2f} deg "
              f"(random baseline 90 deg)")
    if args.location:
        res = analysis.location_decode(feats, ds.poses,
                                       diameter=worldsim.arena_diameter(layout))
        print(f"location: RMSE {res['rmse']:.3f} world units "
              f"({100 * res['rmse_fraction']:.1f}% of arena diameter)")
    return 0


def _make_extractor(name_or_path):
    if name_or_path == "identity":
        return _identity_extractor
    transform, _ = _load_extractor(name_or_path)
    return transform


def cmd_train(args):
    extractor = _make_extractor(args.extractor)
    outdir = _out_path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    finals = []
    for i in range(args.seeds):
        seed = args.seed + i
        env = worldsim.NavEnv(args.layout, seed=seed, l_max=args.l_max)
        model, lengths, _ = agent_mod.train(
            env, extractor, args.steps, seed=seed,
            log_path=outdir / f"train_seed{seed}.csv")
        agent_mod.save_checkpoint(model, outdir / f"policy_seed{seed}.ckpt")
        eval_env = worldsim.NavEnv(args.layout, seed=10_000 + seed,
                                   l_max=args.l_max)
        res = agent_mod.evaluate(model, eval_env, args.eval_episodes,
                                 extractor=extractor, seed=seed)
        finals.append(res["mean"])
        print(f"seed {seed}: final mean episode length {res['mean']:.1f} "
              f"({res['min']}, {res['max']})")
    finals = np.array(finals)
    print(f"aggregate over {args.seeds} seeds: {finals.mean():.1f} "
          f"({finals.min():.1f}, {finals.max():.1f})")
    return 0


def cmd_eval(args):
    env = worldsim.NavEnv(args.layout, seed=args.seed, l_max=args.l_max)
    if args.random:
        res = agent_mod.evaluate("random", env, args.episodes, seed=args.seed)
        label = "random policy"
    else:
        if not args.checkpoint or not args.extractor:
            raise SystemExit("eval needs --checkpoint and --extractor "
                             "(or --random)")
        model = agent_mod.load_checkpoint(args.checkpoint)
        extractor = _make_extractor(args.extractor)
        res = agent_mod.evaluate(model, env, args.episodes,
                                 extractor=extractor, seed=args.seed)
        label = f"checkpoint {args.checkpoint}"
    print(f"{label} on {args.layout}: mean {res['mean']:.1f} "
          f"(min {res['min']}, max {res['max']}) over {args.episodes} episodes")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sfanav",
        description="slow-feature extraction and navigation experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", help="collect a random-walk dataset")
    p.add_argument("--layout", required=True, choices=worldsim.LAYOUT_NAMES)
    p.add_argument("--steps", type=_positive_int, required=True)
    p.add_argument("--reset-every", type=_positive_int, default=None,
                   help="reset period (default: the layout's episode limit)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--empty", action="store_true",
                   help="remove the target cube (extractor pre-training)")
    p.add_argument("--out", required=True, help="output .tsd file")
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("fit-sfa", help="train the hierarchical SFA extractor")
    p.add_argument("--data", required=True, help="input .tsd file")
    p.add_argument("--out", required=True, help="output .hsfa file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-std", type=float, default=sfa.DEFAULT_NOISE_STD)
    p.add_argument("--lra", type=_parse_lra, default=None,
                   help="per-action point weights, e.g. left=4,right=4,forward=1")
    p.add_argument("--keep-boundary-pairs", action="store_true",
                   help="keep temporal differences across episode resets")
    p.set_defaults(func=cmd_fit_sfa)

    p = sub.add_parser("fit-pca", help="train the PCA baseline extractor")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output .pca file")
    p.add_argument("--k", type=_positive_int, default=32)
    p.set_defaults(func=cmd_fit_pca)

    p = sub.add_parser("analyze", help="feature maps, heading and location reports")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True, help=".hsfa or .pca model file")
    p.add_argument("--features", default="0..5",
                   help="feature indices, e.g. 0..5 or 0,3,7")
    p.add_argument("--sections", type=int, default=0,
                   help="also emit per-heading-section maps (e.g. 6)")
    p.add_argument("--heading", action="store_true")
    p.add_argument("--location", action="store_true")
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("train", help="train PPO agents")
    p.add_argument("--layout", required=True, choices=worldsim.LAYOUT_NAMES)
    p.add_argument("--extractor", required=True,
                   help=".hsfa / .pca model path, or 'identity'")
    p.add_argument("--steps", type=_positive_int, required=True)
    p.add_argument("--seeds", type=_positive_int, default=1)
    p.add_argument("--seed", type=int, default=0, help="base seed")
    p.add_argument("--l-max", type=_positive_int, default=None)
    p.add_argument("--eval-episodes", type=_positive_int, default=20)
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint or the random policy")
    p.add_argument("--layout", required=True, choices=worldsim.LAYOUT_NAMES)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--extractor", default=None)
    p.add_argument("--random", action="store_true")
    p.add_argument("--episodes", type=_positive_int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--l-max", type=_positive_int, default=None)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
