"""Command-line entry point: ``privdistill <command> [options]``.

Failures exit nonzero with one stderr line ``error: <ErrorClass>: <message>``.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

from . import experiment
from .errors import ConfigError, DependencyError, ParameterError, PrivDistillError
from .experiment import Layout
from .nn import write_atomic

log = logging.getLogger("privdistill")


def _common(p):
    p.add_argument("--config", help="INI experiment config (default: built-in defaults)")
    p.add_argument("--seed", type=int, action="append", help="run only this seed (repeatable)")
    p.add_argument("--out", help="output root (overrides [experiment] out_dir)")
    p.add_argument("--force", action="store_true", help="recompute existing artifacts")
    p.add_argument("--jobs", type=int, default=1, help="parallel processes for sweeps")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="privdistill", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("gen", help="generate and split the synthetic dataset"))
    _common(sub.add_parser("train-teacher", help="train the teacher on raw + privileged features"))
    _common(sub.add_parser("export-distill", help="freeze teacher logits and losses"))
    p = sub.add_parser("train-student", help="train a raw-only student")
    _common(p)
    p.add_argument("--mode", required=True, choices=("plain", "pfd", "cpfd"))
    p.add_argument("--alpha", type=float, help="pfd distillation weight")
    p.add_argument("--mapping", choices=experiment.MAPPING_KINDS + ("constant",), help="cpfd mapping kind")
    p.add_argument("--temperature", type=float)
    p = sub.add_parser("eval", help="metrics report for a checkpoint")
    _common(p)
    p.add_argument("--model", default="teacher", help="artifact name, e.g. teacher, plain, pfd-a0.5, cpfd-exp_decay")
    p.add_argument("--checkpoint", help="explicit checkpoint path (with --eval-file)")
    p.add_argument("--eval-file", help="explicit dataset path")
    p = sub.add_parser("analyze", help="confidence table and alpha curves")
    _common(p)
    p.add_argument("--teacher-export", help="distill-record file covering the eval set")
    p.add_argument("--checkpoint", help="student checkpoint")
    p.add_argument("--eval-file")
    p = sub.add_parser("sweep", help="ablation sweep over mapping, temperature or alpha")
    _common(p)
    p.add_argument("--axis", required=True, choices=("mapping", "temperature", "alpha"))
    _common(sub.add_parser("run", help="full benchmark: teacher, plain, pfd, cpfd over all seeds"))
    return parser


def _load(args):
    try:
        cfg = experiment.load_config(args.config)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from None
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    seeds = tuple(args.seed) if args.seed else cfg.seeds
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    return cfg, seeds, Layout(cfg)


def _write_config_copy(cfg, layout):
    os.makedirs(layout.root, exist_ok=True)
    path = layout.shared("config.ini")
    text = experiment.config_file_text(cfg)
    if not os.path.exists(path):
        write_atomic(path, text)


def cmd_gen(args):
    cfg, seeds, layout = _load(args)
    _write_config_copy(cfg, layout)
    for seed in seeds:
        for p in experiment.step_gen(cfg, seed, layout, args.force):
            print(p)


def cmd_train_teacher(args):
    cfg, seeds, layout = _load(args)
    for seed in seeds:
        for p in experiment.step_teacher(cfg, seed, layout, args.force):
            print(p)


def cmd_export(args):
    cfg, seeds, layout = _load(args)
    for seed in seeds:
        for p in experiment.step_export(cfg, seed, layout, args.force):
            print(p)


def cmd_train_student(args):
    cfg, seeds, layout = _load(args)
    if args.mode == "pfd" and args.alpha is not None and not 0 <= args.alpha <= 1:
        raise ConfigError(f"--alpha must lie in [0, 1], got {args.alpha}")
    if args.temperature is not None and not args.temperature > 0:
        raise ConfigError("--temperature must be positive")
    for seed in seeds:
        _, _, paths = experiment.step_student(
            cfg, seed, layout, args.mode, args.alpha, args.mapping, args.temperature, args.force
        )
        for p in paths:
            print(p)


def _ckpt_for(layout, seed, name):
    fname = "teacher.ckpt" if name == "teacher" else f"student-{name}.ckpt"
    return layout.path(seed, fname)


def cmd_eval(args):
    cfg, seeds, layout = _load(args)
    if args.checkpoint or args.eval_file:
        if not (args.checkpoint and args.eval_file):
            raise ConfigError("--checkpoint and --eval-file go together")
        targets = [(args.checkpoint, args.eval_file)]
    else:
        targets = []
        for seed in seeds:
            step = "train-teacher" if args.model == "teacher" else "train-student"
            targets.append((experiment.require(_ckpt_for(layout, seed, args.model), step),
                            experiment.require(layout.path(seed, "eval.txt"), "gen")))
    for ckpt, ev in targets:
        for path in (ckpt, ev):
            if not os.path.exists(path):
                raise DependencyError(f"missing {path}")
        report = experiment.evaluate_checkpoint(ckpt, ev)
        base = os.path.splitext(ckpt)[0]
        experiment.write_eval(report, base, args.force)
        print(experiment.metrics_table(report, os.path.basename(base)), end="")


def cmd_analyze(args):
    cfg, seeds, layout = _load(args)
    student = f"student-pfd-a{cfg.analysis_alpha:g}.ckpt"
    explicit = args.teacher_export or args.checkpoint or args.eval_file
    runs = []
    if explicit:
        if not (args.teacher_export and args.checkpoint and args.eval_file):
            raise ConfigError("--teacher-export, --checkpoint and --eval-file go together")
        runs.append(("-", args.teacher_export, args.checkpoint, args.eval_file,
                     os.path.splitext(args.checkpoint)[0] + ".analyze"))
    else:
        for seed in seeds:
            runs.append((
                seed,
                experiment.require(layout.path(seed, "distill_eval.txt"), "export-distill"),
                experiment.require(layout.path(seed, student), "train-student --mode pfd"),
                experiment.require(layout.path(seed, "eval.txt"), "gen"),
                layout.path(seed, "analyze"),
            ))
    for tag, export, ckpt, ev, base in runs:
        for path in (export, ckpt, ev):
            if not os.path.exists(path):
                raise DependencyError(f"missing {path}")
        outs = [base + "-confidence.tsv", base + "-confidence.txt", base + "-alpha.tsv"]
        experiment.guard(outs, args.force)
        table, curves = experiment.analyze(cfg, export, ckpt, ev)
        write_atomic(outs[0], experiment.confidence_tsv({tag: table}))
        write_atomic(outs[1], experiment.confidence_text(table))
        write_atomic(outs[2], experiment.alpha_curves_tsv(curves))
        print(experiment.confidence_text(table), end="")
        for p in outs:
            print(p)


def cmd_sweep(args):
    cfg, seeds, layout = _load(args)
    rep, outs = experiment.step_sweep(cfg, seeds, layout, args.axis, args.jobs, args.force)
    print(experiment.sweep_text(rep), end="")
    for p in outs:
        print(p)


def cmd_run(args):
    cfg, seeds, layout = _load(args)
    outs = [layout.shared("report.tsv"), layout.shared("report.txt")]
    experiment.guard(outs, args.force)
    _write_config_copy(cfg, layout)
    report = experiment.run_benchmark(cfg, seeds)
    write_atomic(outs[0], experiment.run_report_tsv(report))
    write_atomic(outs[1], experiment.run_report_text(report))
    print(experiment.run_report_text(report), end="")


COMMANDS = {
    "gen": cmd_gen,
    "train-teacher": cmd_train_teacher,
    "export-distill": cmd_export,
    "train-student": cmd_train_student,
    "eval": cmd_eval,
    "analyze": cmd_analyze,
    "sweep": cmd_sweep,
    "run": cmd_run,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except PrivDistillError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: IOError: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
