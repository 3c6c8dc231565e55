"""Command-line entry point.

Exit codes: 0 success, 1 numerical failure, 2 bad user input.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .empirical import domination_report, empirical_estimate
from .estimator import InfeasibleRiskLevel, dual_solve
from .experiments import ExperimentSpec, fig1_csv, reproduce_fig1, run_mse_curve
from .moments import SampleFormatError, moments_from_discrete, read_distribution_json, read_sample_csv
from .oracle import constrained_solve, saddle_check

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _float(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return "%.17g" % x


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float written to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _emit(text: str, output) -> None:
    if not text.endswith("\n"):
        text += "\n"
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def _read_spec(path) -> ExperimentSpec:
    if not path:
        raise UsageError("--input config JSON required")
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return ExperimentSpec.from_json(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON at line {exc.lineno}") from None


def cmd_estimate(args) -> int:
    if not args.input:
        raise UsageError("--input CSV required")
    data = read_sample_csv(args.input)
    if data.shape[1] != 1:
        raise UsageError("scalar data required")
    lam = 0.0 if args.lambda_bar is None else args.lambda_bar
    _emit(dumps(empirical_estimate(data[:, 0], lam).to_dict()), args.output)
    return EXIT_OK


def cmd_threshold(args) -> int:
    spec = _read_spec(args.input)
    eps = spec.epsilon if args.epsilon is None else args.epsilon
    trials = spec.trials if args.trials is None else args.trials
    seed = spec.seed if args.seed is None else args.seed
    rep = domination_report(spec.model, spec.n, eps, trials, seed, args.workers)
    _emit(dumps(rep.to_dict()), args.output)
    return EXIT_OK


def cmd_curve(args) -> int:
    spec = _read_spec(args.input)
    if args.seed is not None or args.trials is not None:
        d = spec.to_dict()
        d["seed"] = spec.seed if args.seed is None else args.seed
        d["trials"] = spec.trials if args.trials is None else args.trials
        spec = ExperimentSpec.from_dict(d)
    curve = run_mse_curve(spec, workers=args.workers)
    if args.format == "json":
        body = {
            "spec": spec.to_dict(),
            "lambda_bar": curve.lambda_bar,
            "mse_vs_truth_mean": curve.mse_vs_truth_mean,
            "mse_vs_draw": curve.mse_vs_draw,
            "ci_halfwidth": curve.ci_halfwidth,
            "paired_diff": curve.diff,
            "paired_diff_se": curve.diff_se,
            "trials_used": curve.trials_used,
            "slope_at_zero": curve.slope0,
            "slope_at_zero_se": curve.slope0_se,
        }
        _emit(dumps(body), args.output)
    else:
        _emit(curve.to_csv(), args.output)
    return EXIT_OK


def cmd_oracle(args) -> int:
    if not args.input:
        raise UsageError("--input distribution JSON required")
    try:
        dist = read_distribution_json(args.input)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{args.input}: invalid JSON at line {exc.lineno}") from None
    radius = 0.0 if args.radius is None else args.radius
    if radius < 0:
        raise UsageError("--radius must be nonnegative")
    if dist.dim > 3:
        raise UsageError("oracle supports dimension at most 3")
    body = saddle_check(dist, radius).to_dict()
    if args.epsilon is not None:
        closed = dual_solve(moments_from_discrete(dist), args.epsilon)
        body["constrained"] = {
            "epsilon": args.epsilon,
            "closed_form": closed.estimate,
            "lambda": closed.lam,
            "projected_gradient": constrained_solve(dist, args.epsilon),
        }
    _emit(dumps(body), args.output)
    return EXIT_OK


def cmd_fig1(args) -> int:
    seed = 0 if args.seed is None else args.seed
    rep = reproduce_fig1(seed)
    _emit(fig1_csv(rep) if args.format == "csv" else dumps(rep), args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chi2dro", description="Risk-constrained and skew-corrected mean estimation.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, fmt_default="json"):
        sp.add_argument("--input", help="input file")
        sp.add_argument("--output", help="write here instead of stdout")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--lambda-bar", type=float, dest="lambda_bar")
        sp.add_argument("--radius", type=float)
        sp.add_argument("--epsilon", type=float)
        sp.add_argument("--trials", type=int)
        sp.add_argument("--format", choices=("json", "csv"), default=fmt_default)
        sp.add_argument("--workers", type=int, default=1, help="threads for Monte Carlo chunks")

    for name, fn, fmt, text in (
        ("estimate", cmd_estimate, "json", "skew-shifted mean of a one-column CSV sample"),
        ("threshold", cmd_threshold, "json", "domination thresholds for a model config"),
        ("curve", cmd_curve, "csv", "Monte Carlo MSE curve over a lambda grid"),
        ("oracle", cmd_oracle, "json", "saddle-point check on a discrete distribution"),
        ("fig1", cmd_fig1, "json", "two-component mixture study"),
    ):
        sp = sub.add_parser(name, help=text)
        common(sp, fmt)
        sp.set_defaults(func=fn)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except InfeasibleRiskLevel as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, SampleFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
