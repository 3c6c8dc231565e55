"""Monte Carlo harness: MSE curves, the two-component mixture study and a moment-identity battery."""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .empirical import cross_term_closed_form, mse_slope, paired_mse
from .models import FIG1_MIXTURE, Model, model_from_dict, trial_chunk
from .rng import map_chunks, reduce_sums, stream

Z95 = 1.959963984540054
FMT = "%.17g"


def fmt(x: float) -> str:
    return FMT % x


@dataclass(frozen=True)
class ExperimentSpec:
    model: Model
    n: int
    trials: int
    seed: int
    lambda_grid: tuple
    epsilon: float = 1e-6

    def __post_init__(self):
        if isinstance(self.model, dict):
            object.__setattr__(self, "model", model_from_dict(self.model))
        object.__setattr__(self, "lambda_grid", tuple(float(v) for v in self.lambda_grid))
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError("trials must be a positive integer")
        if not 0 <= int(self.seed) < 1 << 64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if not self.lambda_grid or any(v < 0 or not math.isfinite(v) for v in self.lambda_grid):
            raise ValueError("lambda_grid must be a nonempty list of nonnegative numbers")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentSpec":
        if not isinstance(obj, dict):
            raise ValueError("experiment config must be a JSON object")
        missing = [k for k in ("model", "n", "trials", "seed", "lambda_grid") if k not in obj]
        if missing:
            raise ValueError(f"experiment config missing field(s): {', '.join(missing)}")
        unknown = set(obj) - {"model", "n", "trials", "seed", "lambda_grid", "epsilon"}
        if unknown:
            raise ValueError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        return cls(obj["model"], obj["n"], obj["trials"], obj["seed"], obj["lambda_grid"], obj.get("epsilon", 1e-6))

    @classmethod
    def from_json(cls, text: str) -> "ExperimentSpec":
        return cls.from_dict(json.loads(text))

    @classmethod
    def read(cls, path) -> "ExperimentSpec":
        return cls.from_json(Path(path).read_text())

    def to_dict(self) -> dict:
        return {"model": self.model.to_dict(), "n": self.n, "trials": self.trials, "seed": self.seed,
                "lambda_grid": list(self.lambda_grid), "epsilon": self.epsilon}


CSV_HEADER = "lambda_bar,mse_vs_truth_mean,mse_vs_draw,ci_halfwidth,trials_used"


@dataclass(frozen=True)
class MseCurve:
    """Paired Monte Carlo MSE estimates on a grid of ``lambda_bar``.

    ``mse_vs_truth_mean`` is ``E(est - E X)^2`` and ``mse_vs_draw`` is
    ``E(est - X')^2`` for an independent draw ``X'``.  ``diff`` is the paired
    difference against ``lambda_bar = 0``.  ``ci_halfwidth`` is the 95%
    half-width of ``mse_vs_truth_mean``.
    """

    lambda_bar: np.ndarray
    mse_vs_truth_mean: np.ndarray
    mse_vs_draw: np.ndarray
    ci_halfwidth: np.ndarray
    trials_used: int
    truth_se: np.ndarray = field(repr=False)
    draw_se: np.ndarray = field(repr=False)
    diff: np.ndarray = field(repr=False)
    diff_se: np.ndarray = field(repr=False)
    draw_gap: np.ndarray = field(repr=False)
    draw_gap_se: np.ndarray = field(repr=False)
    slope0: float = 0.0
    slope0_se: float = 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        for i in range(self.lambda_bar.size):
            buf.write(",".join([fmt(self.lambda_bar[i]), fmt(self.mse_vs_truth_mean[i]), fmt(self.mse_vs_draw[i]),
                                fmt(self.ci_halfwidth[i]), str(self.trials_used)]) + "\n")
        return buf.getvalue()


def run_mse_curve(spec: ExperimentSpec, workers: int = 1) -> MseCurve:
    """Estimate both MSE curves with common random numbers across the grid."""
    sums = paired_mse(spec.model, spec.n, spec.lambda_grid, spec.trials, spec.seed, workers, tag="curve")
    e, e_se = sums.truth()
    w, w_se = sums.draw()
    d, d_se = sums.diff()
    gp, gp_se = sums.draw_gap()
    s, s_se = sums.slope()
    return MseCurve(
        lambda_bar=sums.grid, mse_vs_truth_mean=e, mse_vs_draw=w, ci_halfwidth=Z95 * e_se,
        trials_used=spec.trials, truth_se=e_se, draw_se=w_se, diff=d, diff_se=d_se,
        draw_gap=gp, draw_gap_se=gp_se, slope0=s, slope0_se=s_se,
    )


FIG1_REPORTED = {"m2": 3.826, "m4": 32.46, "g": 11.4622}
FIG1_REPORTED_PAIR = (1.963, -3.61)
FIG1_N = 23


def _parabola(xbar: float, t: float, mu: float, m2: float) -> dict:
    """``l -> (xbar + l t - mu)^2 + m2``: minimiser, minimum and slope at zero."""
    slope = 2.0 * t * (xbar - mu)
    if t == 0:
        arg, low = 0.0, (xbar - mu) ** 2 + m2
    else:
        arg = -(xbar - mu) / t
        low = m2
    return {"xbar": xbar, "t": t, "argmin": arg, "min": low, "slope_at_zero": slope}


def reproduce_fig1(seed: int, grid=None, surrogate_size: int = 10_000) -> dict:
    """Draw one sample of 23 from the two-component mixture and score ``Xbar + l T``.

    The MSE against a fresh draw is computed exactly from the mixture's mean
    and variance, and again against a ``surrogate_size``-point sample.
    """
    model = FIG1_MIXTURE
    grid = np.linspace(0.0, 1.0, 101) if grid is None else np.asarray(grid, dtype=float)
    ms = model.moment_set()
    mu, m2, m3, m4 = ms.scalar()
    g = 3 * m2 * m2 - m4

    x = model.sample(stream(seed, "fig1/sample"), FIG1_N)
    xbar = float(x.mean())
    t = float(np.mean((x - xbar) ** 3))
    pop = model.sample(stream(seed, "fig1/surrogate"), surrogate_size)
    pmean = float(pop.mean())
    pm2 = float(np.mean((pop - pmean) ** 2))
    pm4 = float(np.mean((pop - pmean) ** 4))

    est = xbar + grid * t
    mse_exact = (est - mu) ** 2 + m2
    mse_surr = np.mean((est[:, None] - pop[None, :]) ** 2, axis=1)

    analytic = {"mean": mu, "m2": m2, "m3": m3, "m4": m4, "g": g}
    return {
        "seed": seed,
        "n": FIG1_N,
        "model": model.to_dict(),
        "analytic": analytic,
        "reported": dict(FIG1_REPORTED),
        "relative_diff": {k: (analytic[k] - v) / v for k, v in FIG1_REPORTED.items()},
        "surrogate": {"size": surrogate_size, "mean": pmean, "m2": pm2, "m4": pm4, "g": 3 * pm2 * pm2 - pm4},
        "sample": x.tolist(),
        "realized": _parabola(xbar, t, mu, m2),
        "reported_pair": _parabola(*FIG1_REPORTED_PAIR, mu, m2),
        "expected_slope_at_zero": mse_slope(g, FIG1_N),
        "platykurtic": g > 0,
        "curve": {"lambda_bar": grid.tolist(), "estimate": est.tolist(), "mse_exact": mse_exact.tolist(),
                  "mse_surrogate": mse_surr.tolist()},
    }


def fig1_csv(report: dict) -> str:
    c = report["curve"]
    lines = ["lambda_bar,estimate,mse_exact,mse_surrogate"]
    for row in zip(c["lambda_bar"], c["estimate"], c["mse_exact"], c["mse_surrogate"]):
        lines.append(",".join(fmt(v) for v in row))
    return "\n".join(lines) + "\n"


IDENTITIES = ("mean_cubed", "mean_fourth", "x3_times_mean", "leave_one_out_cubed", "cross_term", "mean_times_s3")


def identity_closed_forms(model: Model, n: int) -> dict[str, float]:
    """Closed-form expectations for a sample of size ``n``.

    ``mean_cubed``           E Xbar^3
    ``mean_fourth``          E Xbar^4
    ``x3_times_mean``        E[X_1^3 Xbar]
    ``leave_one_out_cubed``  E(sum_{j != 1} X_j)^3
    ``cross_term``           E[(X - Xbar) T_n], X an independent copy
    ``mean_times_s3``        E[Xbar sum (X_i - Xbar)^3]
    """
    r1, r2, r3, r4 = model.raw_moments()
    m2, m3, m4 = model.central()
    g = 3 * m2 * m2 - m4
    k = n - 1
    return {
        "mean_cubed": (r3 + 3 * k * r2 * r1 + k * (n - 2) * r1**3) / n**2,
        "mean_fourth": (n * r4 + 4 * n * k * r3 * r1 + 3 * n * k * r2 * r2 + 6 * n * k * (n - 2) * r2 * r1 * r1
                        + n * k * (n - 2) * (n - 3) * r1**4) / n**4,
        "x3_times_mean": (r4 + k * r3 * r1) / n,
        "leave_one_out_cubed": k * r3 + 3 * k * (k - 1) * r2 * r1 + k * (k - 1) * (k - 2) * r1**3,
        "cross_term": cross_term_closed_form(g, n),
        "mean_times_s3": r1 * m3 * k * (n - 2) / n - k * (n - 2) * g / n**2,
    }


def _identity_chunk(model: Model, n: int, mu: float):
    def run(rng, size):
        x = model.sample(rng, (size, n))
        xbar = x.mean(axis=1)
        s3 = ((x - xbar[:, None]) ** 3).sum(axis=1)
        vals = {
            "mean_cubed": xbar**3,
            "mean_fourth": xbar**4,
            "x3_times_mean": x[:, 0] ** 3 * xbar,
            "leave_one_out_cubed": x[:, 1:].sum(axis=1) ** 3,
            "cross_term": (mu - xbar) * s3 / n,
            "mean_times_s3": xbar * s3,
        }
        out = {}
        for key, v in vals.items():
            out[key + "/1"] = np.array(v.sum())
            out[key + "/2"] = np.array((v * v).sum())
        return out
    return run


@dataclass(frozen=True)
class IdentityCheck:
    name: str
    n: int
    closed_form: float
    monte_carlo: float
    se: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return abs(self.monte_carlo - self.closed_form) <= self.tolerance

    def to_dict(self) -> dict:
        return {"name": self.name, "n": self.n, "closed_form": self.closed_form, "monte_carlo": self.monte_carlo,
                "se": self.se, "tolerance": self.tolerance, "passed": self.passed}


def identity_battery(model: Model, n_list, trials: int, seed: int = 0, workers: int = 1,
                     n_se: float = 3.0) -> list[IdentityCheck]:
    """Monte Carlo check of each sample-moment identity at ``n_se`` standard errors.

    A relative floor of 1e-12 absorbs rounding when the standard error is 0,
    as for a point mass or the exactly vanishing cross term at ``n = 2``.
    """
    mu = model.expected_value
    out = []
    for n in n_list:
        if n < 2:
            raise ValueError("identities need n >= 2")
        tot = reduce_sums(map_chunks(_identity_chunk(model, n, mu), trials, seed, f"identity/n={n}", workers,
                                     trial_chunk(n)))
        cf = identity_closed_forms(model, n)
        for name in IDENTITIES:
            mean = float(tot[name + "/1"]) / trials
            var = max(float(tot[name + "/2"]) / trials - mean * mean, 0.0)
            se = math.sqrt(var / trials)
            tol = n_se * se + 1e-12 * max(1.0, abs(cf[name]))
            out.append(IdentityCheck(name, n, cf[name], mean, se, tol))
    return out
