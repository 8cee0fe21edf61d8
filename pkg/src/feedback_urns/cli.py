"""Command-line front end for the experiment harness.

    python3 -m feedback_urns rate-table --p 1.0 --alpha 0.1:0.45:0.05 --out rates.csv

Settings may also come from a key=value file (``--config`` or the
``FEEDBACK_URNS_CONFIG`` environment variable).  Keys mirror the long flag
names, with dots accepted in place of dashes (``truncation.R = 100000``).
Flags given on the command line win over the file.

Exit codes: 0 success, 1 a verdict failed, 2 usage error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import harness, oracle, ratefn, sim
from .core import DomainError

EXIT_OK, EXIT_VERDICT, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3
CONFIG_ENV = "FEEDBACK_URNS_CONFIG"

# default t grid and replica counts per experiment
_DEFAULTS = {
    "rate-table": dict(alpha="0.1:0.45:0.05"),
    "rate-convergence": dict(alpha="0.35", t="50:400:2"),
    "laplace-check": dict(alpha="0.3", t="1000:4000:2"),
    "ode-solve": dict(alpha="0.3"),
    "trajectory-vs-ode": dict(alpha="0.4", t="30:120:2", n_paths=10**4),
    "oracle-crosscheck": dict(alpha="0.4", t="20"),
    "lemma-sweep": dict(),
    "simulate": dict(alpha="0.4", t="20"),
}


def _seed(text: str) -> int | str:
    if text == "entropy":
        return text
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common options")
    g.add_argument("--p", type=float, default=1.0, help="feedback exponent")
    g.add_argument("--alpha", help="initial fraction, 'a' or 'a:b:step'")
    g.add_argument("--t", help="initial size, 'n' or 'n1:n2:factor'")
    g.add_argument("--reps", type=_positive_int, default=10**6, help="Monte Carlo replicas")
    g.add_argument("--seed", type=_seed, help="64-bit seed, or 'entropy' for a fresh one")
    g.add_argument("--out", help="output file (default: <experiment>.<format>)")
    g.add_argument("--format", choices=("csv", "json"), default="csv")
    g.add_argument("--threads", type=_positive_int, default=harness.default_threads())
    g.add_argument("--quad-tol", type=float, default=1e-10)
    g.add_argument("--truncation-R", type=_positive_int, help="embedding series cut-off")
    g.add_argument("--dp-R", type=_positive_int, default=2000, help="race level of the DP")
    g.add_argument("--config", help="key=value settings file")
    g.add_argument("--rho", type=float, action="append", help="tilt for laplace-check (repeatable)")
    g.add_argument("--K", type=float, help="ODE horizon for trajectory-vs-ode")
    g.add_argument("--s-max", type=float, default=1.0, help="ODE integration range")
    g.add_argument("--step", type=float, default=0.01, help="RK4 step")
    g.add_argument("--paths", type=_positive_int, help="conditioned paths per t")
    g.add_argument("--rejection-attempts", type=_positive_int, default=500_000)
    g.add_argument("--m-max", type=_positive_int, default=200, help="lemma grid size")

    parser = argparse.ArgumentParser(
        prog="feedback-urns",
        description="Desk-scale experiments for two-bin balls-in-bins with power feedback.",
    )
    sub = parser.add_subparsers(dest="experiment", metavar="experiment", required=True)
    for name in harness.EXPERIMENTS:
        doc = next(iter((harness.RUNNERS[name].__doc__ or "").strip().splitlines()), "")
        sub.add_parser(name, parents=[common], help=doc, description=doc)
    return parser


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            out[k.replace(".", "-").replace("_", "-")] = v
    return out


def _apply_config(parser, settings: dict):
    # string defaults go through each option's type conversion
    sub = parser._subparsers._group_actions[0].choices
    dests = {}
    for p in sub.values():
        for a in p._actions:
            for opt in a.option_strings:
                dests[opt.lstrip("-")] = a.dest
    unknown = sorted(set(settings) - set(dests))
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    for p in sub.values():
        p.set_defaults(**{dests[k]: v for k, v in settings.items()})


def make_config(ns) -> harness.ExperimentConfig:
    d = _DEFAULTS[ns.experiment]
    seed = ns.seed
    if seed == "entropy":
        seed = int(np.random.SeedSequence().entropy) % 2**64
    return harness.ExperimentConfig(
        experiment=ns.experiment,
        p=ns.p,
        alpha=ns.alpha if ns.alpha is not None else d.get("alpha", "0.4"),
        t=ns.t if ns.t is not None else d.get("t", "20"),
        n_reps=ns.reps,
        seed=seed,
        output_path=ns.out or f"{ns.experiment}.{ns.format}",
        format=ns.format,
        threads=ns.threads,
        quad_tol=ns.quad_tol,
        truncation_R=ns.truncation_R,
        dp_R=ns.dp_R,
        rho=tuple(ns.rho or ()),
        K=ns.K,
        s_max=ns.s_max,
        step=ns.step,
        n_paths=ns.paths or d.get("n_paths", 10**4),
        rejection_attempts=ns.rejection_attempts,
        m_max=ns.m_max,
    )


def _summary_line(rec) -> str:
    failed = [k for k, ok in rec.verdicts.items() if not ok]
    head = f"{rec.experiment}: {len(rec.rows)} rows in {rec.duration_s:.2f}s"
    if not failed:
        return f"{head}; all checks passed"
    return f"{head}; {len(failed)} of {len(rec.verdicts)} checks failed: {', '.join(failed)}"


def cli_main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config")
        known, _ = pre.parse_known_args(argv)
        path = known.config or os.environ.get(CONFIG_ENV)
        if path:
            try:
                _apply_config(parser, read_config(path))
            except (OSError, ValueError) as e:
                parser.print_usage(sys.stderr)
                print(f"feedback-urns: config error: {e}", file=sys.stderr)
                return EXIT_USAGE
        ns = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    try:
        cfg = make_config(ns)
    except (harness.ConfigError, ValueError) as e:
        print(f"feedback-urns: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        rec = harness.run(cfg)
    except (harness.ConfigError, DomainError) as e:
        print(f"feedback-urns: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ratefn.QuadratureError, ratefn.BracketError, oracle.BudgetError,
            sim.BudgetExhausted, sim.NullConditioning, sim.TruncationError,
            MemoryError, ArithmeticError, RuntimeError) as e:
        print(f"feedback-urns: runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        rec.write(cfg.output_path, cfg.format)
    except OSError as e:
        print(f"feedback-urns: cannot write output: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    print(_summary_line(rec))
    return EXIT_OK if rec.passed else EXIT_VERDICT


def main():
    sys.exit(cli_main())
