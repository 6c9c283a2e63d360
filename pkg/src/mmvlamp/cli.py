"""Command-line entry points.

Subcommands: generate-dataset, train, train-frsn, eval, feedback-eval,
fse-generate. Exit codes: 0 success, 2 configuration/usage error, 3 file
format error. Diagnostics go to stderr.
"""

import argparse
import sys
from dataclasses import replace

import numpy as np

from .channel import channel_dataset
from .dictionary import select_subcarriers
from .errors import ConfigError, FormatError, ParameterError
from .experiments import build_fse_dataset, parse_config, run_eval, write_csv, render_csv
from .feedback import compressed_downlink_channels
from .frontend import phases_to_combiner
from .serialization import (
    Checkpoint, load_checkpoint, load_dataset, save_checkpoint, save_dataset,
)
from .training import train_frsn, train_layerwise


def _load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def _require_count(cfg):
    if cfg.data_count < 1:
        raise ConfigError("data.count must be set to generate a dataset")
    return cfg.data_count


def cmd_generate_dataset(args):
    cfg = _load_config(args.config)
    seed = cfg.train.seed if args.seed is None else args.seed
    samples = channel_dataset(cfg.system, _require_count(cfg), seed, cfg.grid_mode)
    save_dataset(args.output, samples, cfg.system.n_path, cfg.grid_mode, seed)
    return 0


def cmd_fse_generate(args):
    cfg = _load_config(args.config)
    seed = cfg.train.seed if args.seed is None else args.seed
    samples = build_fse_dataset(cfg, _require_count(cfg), seed)
    save_dataset(args.output, samples, cfg.system.n_path, "fse", seed)
    return 0


def cmd_train(args):
    cfg = _load_config(args.config)
    if not cfg.data_path:
        raise ConfigError("data.path must point to a training dataset")
    train_cfg = cfg.train if args.seed is None else replace(cfg.train, seed=args.seed)
    samples, _ = load_dataset(cfg.data_path)
    result = train_layerwise(samples, train_cfg, cfg.system, link=cfg.link)
    ckpt = Checkpoint(
        n_bs=cfg.system.n_bs, n_grid=cfg.system.n_grid, n_sub=cfg.system.n_sub,
        m=result.xi.shape[1], t_crn=train_cfg.stages,
        xi=result.xi, b=result.params.b_mat,
        theta1=result.params.theta1, theta2=result.params.theta2,
    )
    save_checkpoint(args.output, ckpt)
    for record in result.history:
        print(f"stage {record.stage}: validation ratio {record.final_val:.6f}", file=sys.stderr)
    return 0


def cmd_train_frsn(args):
    cfg = _load_config(args.config)
    if not cfg.data_path:
        raise ConfigError("data.path must point to a training dataset")
    ckpt = load_checkpoint(args.checkpoint)
    if ckpt.m != cfg.system.n_pilot:
        raise ConfigError(
            f"checkpoint pilots m={ckpt.m} differ from n_pilot={cfg.system.n_pilot}; "
            "the feedback stage needs a downlink-shaped beamformer"
        )
    seed = cfg.train.seed if args.seed is None else args.seed
    train_cfg = replace(cfg.train, seed=seed, stages=cfg.system.t_frsn)
    samples, _ = load_dataset(cfg.data_path)
    f_dl = phases_to_combiner(ckpt.xi)
    h_freq = compressed_downlink_channels(samples, f_dl)
    omega = select_subcarriers(cfg.system.n_sub, cfg.system.k_fb, np.random.default_rng([seed, 3]))
    result = train_frsn(h_freq, train_cfg, omega, cfg.system)
    ckpt.t_frsn = train_cfg.stages
    ckpt.b_fb = result.params.b_mat
    ckpt.theta_fb1 = result.params.theta1
    ckpt.theta_fb2 = result.params.theta2
    ckpt.omega = omega
    save_checkpoint(args.output, ckpt)
    return 0


def _run_eval_command(cfg, args):
    ckpt = load_checkpoint(args.checkpoint) if args.checkpoint else None
    rows = run_eval(cfg, ckpt)
    if args.output:
        write_csv(rows, args.output)
    else:
        sys.stdout.write(render_csv(rows))
    return 0


def cmd_eval(args):
    return _run_eval_command(_load_config(args.config), args)


def cmd_feedback_eval(args):
    cfg = _load_config(args.config)
    cfg.sweep_axis = "feedback-ratio"
    return _run_eval_command(cfg, args)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mmvlamp",
        description="Channel estimation and feedback experiments with a learned AMP decoder.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = [
        ("generate-dataset", cmd_generate_dataset, True, False),
        ("fse-generate", cmd_fse_generate, True, False),
        ("train", cmd_train, True, False),
        ("train-frsn", cmd_train_frsn, True, True),
        ("eval", cmd_eval, False, False),
        ("feedback-eval", cmd_feedback_eval, False, False),
    ]
    for name, func, needs_output, needs_ckpt in specs:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="flat dotted-key config file")
        p.add_argument("--seed", type=int, default=None, help="override train.seed")
        p.add_argument("--output", required=needs_output, default=None)
        p.add_argument("--checkpoint", required=needs_ckpt, default=None)
        p.set_defaults(func=func)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except (ConfigError, ParameterError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return 3


cli_main = main

if __name__ == "__main__":
    sys.exit(main())
