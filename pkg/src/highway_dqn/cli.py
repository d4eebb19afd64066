"""Command-line front end.

Subcommands: generate, train, evaluate, compare, print-obs-layout.
Exit codes: 0 ok, 2 configuration error, 3 I/O error, 4 training divergence,
5 checkpoint/observation layout mismatch.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from . import experiment as ex
from .config import Config, ConfigError
from .env import obs_layout
from .net import CheckpointError, Network
from .synth import InfeasibleConfig
from .training import TrainingDiverged

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DIVERGED = 4
EXIT_LAYOUT = 5


def _load_config(args) -> Config:
    cfg = Config.from_file(args.config)
    if getattr(args, "seed", None) is not None:
        raw = cfg.raw()
        raw["experiment.master_seed"] = str(args.seed)
        cfg = Config(raw)
    return cfg


def _tracks_dir(cfg: Config, args) -> str:
    if getattr(args, "tracks", None):
        return args.tracks
    return cfg["experiment.tracks_dir"]


def cmd_generate(args) -> int:
    cfg = _load_config(args)
    tracks = ex.generate_corpus(cfg)
    manifest = ex.write_corpus(cfg, tracks, args.out)
    print(f"wrote {len(tracks)} tracks and {manifest}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args)
    tracks_dir = _tracks_dir(cfg, args)
    train_ids = cfg.get_int_list("experiment.train_tracks")
    tracks = ex.load_corpus(cfg, tracks_dir, train_ids)
    seeds = [int(s) for s in cfg.get_list("experiment.seeds")]
    if getattr(args, "seed", None) is not None:
        seeds = [args.seed]
    os.makedirs(args.out, exist_ok=True)
    for variant in cfg.get_list("experiment.variants"):
        for arm in cfg.get_list("experiment.arms"):
            for seed in seeds:
                name = ex.run_name(variant, arm, seed)
                metrics_path = os.path.join(args.out, f"{name}_metrics.csv")
                ckpt_path = os.path.join(args.out, f"{name}.ckpt")
                with open(metrics_path, "w", encoding="utf-8", newline="\n") as fh:
                    agent = ex.train_arm(cfg, variant, arm, seed, tracks, metrics_fh=fh)
                env = ex.build_env(cfg, arm)
                ex.save_checkpoint(agent, env, variant, arm, seed, ckpt_path)
                print(f"trained {name}: {ckpt_path}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    net, extra = Network.load(args.checkpoint)
    # the configured env.obs_mode / intention.mode define the evaluation
    # layout; the checkpoint's stored arm only labels the report
    env = ex.eval_env_from_config(cfg)
    arm = extra.get("arm")
    if arm is None:
        arm = "base" if cfg["env.obs_mode"] == "base" else "ground_truth"
    test_ids = cfg.get_int_list("experiment.test_tracks")
    tracks = ex.load_corpus(cfg, _tracks_dir(cfg, args), test_ids)
    meta = {"variant": extra.get("variant", cfg["agent.variant"]),
            "checkpoint": os.path.basename(str(args.checkpoint))}
    report = ex.evaluate_net(cfg, net, arm, tracks, meta, env=env)
    os.makedirs(args.out, exist_ok=True)
    stem = os.path.splitext(os.path.basename(str(args.checkpoint)))[0]
    json_path = os.path.join(args.out, f"report_{stem}.json")
    with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(args.out, f"report_{stem}_runs.csv"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write(ex.runs_csv(report))
    print(f"{report['collision_count']} collisions in {report['eval_runs']} runs "
          f"(mean score {report['mean_score']:.3f}) -> {json_path}")
    return EXIT_OK


def cmd_compare(args) -> int:
    reports = []
    for path in args.reports:
        with open(path, encoding="utf-8") as fh:
            reports.append(json.load(fh))
    comparison = ex.compare_reports(reports)
    for row in comparison["rows"]:
        if row["base_collisions"] == 0:
            print(f"warning: base arm of {row['variant']} has zero collisions; "
                  f"improvement is undefined", file=sys.stderr)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "comparison.csv"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write(ex.comparison_csv(comparison))
    text = ex.comparison_text(comparison)
    with open(os.path.join(args.out, "comparison.txt"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    print(text, end="")
    return EXIT_OK


def cmd_print_obs_layout(args) -> int:
    print("index,feature")
    for index, name in obs_layout(args.mode):
        print(f"{index},{name}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="highway-dqn",
        description="Synthetic highway corpus generation, DQN training and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic track corpus")
    gen.add_argument("--config", required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int, default=None)
    gen.set_defaults(fn=cmd_generate)

    train = sub.add_parser("train", help="train one agent per (variant, arm, seed)")
    train.add_argument("--config", required=True)
    train.add_argument("--out", required=True)
    train.add_argument("--seed", type=int, default=None)
    train.add_argument("--tracks", default=None, help="track corpus directory")
    train.set_defaults(fn=cmd_train)

    ev = sub.add_parser("evaluate", help="greedy evaluation of one checkpoint")
    ev.add_argument("checkpoint")
    ev.add_argument("--config", required=True)
    ev.add_argument("--out", required=True)
    ev.add_argument("--seed", type=int, default=None)
    ev.add_argument("--tracks", default=None)
    ev.set_defaults(fn=cmd_evaluate)

    cmp_ = sub.add_parser("compare", help="tabulate reports against the base arm")
    cmp_.add_argument("reports", nargs="+")
    cmp_.add_argument("--out", required=True)
    cmp_.set_defaults(fn=cmd_compare)

    layout = sub.add_parser("print-obs-layout", help="emit the observation index table")
    layout.add_argument("--mode", choices=("base", "ttlc"), default="base")
    layout.set_defaults(fn=cmd_print_obs_layout)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    # flag alias kept for discoverability: `highway-dqn --print-obs-layout [--mode m]`
    if "--print-obs-layout" in argv:
        argv.remove("--print-obs-layout")
        argv = ["print-obs-layout", *argv]
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, InfeasibleConfig, CheckpointError, ex.MissingBase, ValueError) as exc:
        if isinstance(exc, ex.LayoutMismatch):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_LAYOUT
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
