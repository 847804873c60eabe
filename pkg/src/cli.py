# src/cli.py
"""
Command-line entry point.

    python src/cli.py train --config config/default.yaml --seed 1 --variant all
    python src/cli.py eval --case heavy_body
    python src/cli.py montecarlo --trials 100
    python src/cli.py synth-mbc
    python src/cli.py selfcheck

Each command builds an event from its flags and hands it to the command's handler;
the process exits with the handler's statusCode.
"""

import sys
import json
import logging
import argparse
import importlib

COMMANDS = {
    "train": "commands.train.handler",
    "eval": "commands.eval.handler",
    "montecarlo": "commands.montecarlo.handler",
    "synth-mbc": "commands.synth_mbc.handler",
    "selfcheck": "commands.selfcheck.handler",
}

# flag -> commands that accept it
FLAGS = {
    "--config": ("train", "eval", "montecarlo", "synth-mbc"),
    "--seed": ("train", "eval", "montecarlo", "synth-mbc"),
    "--out": ("train", "eval", "montecarlo", "synth-mbc"),
    "--episodes-per-stage": ("train", "eval", "montecarlo", "synth-mbc"),
    "--horizon": ("train", "eval", "montecarlo", "synth-mbc"),
    "--variant": ("train",),
    "--resume": ("train",),
    "--trials": ("montecarlo",),
    "--case": ("eval",),
    "--checkpoint": ("eval", "montecarlo"),
    "--output": ("synth-mbc",),
}

HELP = {
    "--config": "YAML run configuration (built-in defaults when omitted)",
    "--seed": "master seed",
    "--out": "output directory (default: $CUL_OUT_DIR or the config's out_dir)",
    "--episodes-per-stage": "episodes per curriculum stage",
    "--horizon": "steps per episode",
    "--variant": "proposed | no_mbc | full_randomization | all",
    "--resume": "stage checkpoint to resume training from",
    "--trials": "Monte Carlo trial count",
    "--case": "named case (nominal, heavy_body, light_body, light_body_heavy_actuator, or fig5..fig8) or key=min|max|nominal,...",
    "--checkpoint": "run directory holding mbc.txt and agents/",
    "--output": "controller matrix file (default: <run_dir>/mbc.txt)",
}

INT_FLAGS = ("--seed", "--episodes-per-stage", "--horizon", "--trials")


def build_parser():
    parser = argparse.ArgumentParser(prog="cul", description="Continual uncertainty learning for a powertrain plant")
    sub = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        p = sub.add_parser(command)
        for flag, commands in FLAGS.items():
            if command in commands:
                p.add_argument(flag, type=int if flag in INT_FLAGS else str, default=None, help=HELP[flag])
    return parser


def to_event(args):
    """Flags that were given, keyed the way the handlers read them."""
    payload = {k: v for k, v in vars(args).items() if k != "command" and v is not None}
    return {"body": payload}


def main(argv=None):
    logging.basicConfig(format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    module = importlib.import_module(COMMANDS[args.command])
    resp = module.handler(to_event(args), None)
    print(resp["body"] if isinstance(resp["body"], str) else json.dumps(resp["body"]))
    return int(resp["statusCode"])


if __name__ == "__main__":
    sys.exit(main())
