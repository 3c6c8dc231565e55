"""Sample-mean-plus-skew estimator ``Xbar_n + lambda_bar * T_n`` and its domination threshold.

``T_n = n^-1 sum (X_i - Xbar_n)^3``.  With ``g = 3 m2^2 - m4`` and an
independent copy ``X``,

    E[(X - Xbar_n) T_n] = (n-1)(n-2) g / n^3,

so the mean squared error ``phi(l) = E(Xbar_n + l T_n - E X)^2`` has
``phi'(0) = -2 (n-1)(n-2) g / n^3`` and drops below ``phi(0)`` for every
``0 < l < 2 E[(X - Xbar_n) T_n] / E T_n^2``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .models import Model, sample_statistics, trial_chunk
from .moments import _as_matrix
from .rng import map_chunks, reduce_sums

MIN_T2_TRIALS = 100


@dataclass(frozen=True)
class EmpiricalEstimate:
    xbar: float
    t_n: float
    lambda_bar: float
    estimate: float
    n: int

    def to_dict(self) -> dict:
        return asdict(self)


def empirical_estimate(data, lambda_bar: float) -> EmpiricalEstimate:
    """Sample mean shifted by ``lambda_bar`` times the sample third central moment.

    Parameters
    ----------
    data : sequence of float
        Scalar sample, ``n >= 1``.
    lambda_bar : float
        Nonnegative weight on the skew term.
    """
    if lambda_bar < 0:
        raise ValueError("lambda_bar must be nonnegative")
    x = _as_matrix(data)
    if x.shape[1] != 1:
        raise ValueError("scalar data required")
    x = x[:, 0]
    xbar = float(x.mean())
    t = float(np.mean((x - xbar) ** 3))
    return EmpiricalEstimate(xbar, t, float(lambda_bar), xbar + lambda_bar * t, int(x.size))


def cross_term_closed_form(g: float, n: int) -> float:
    """``E[(X - Xbar_n) T_n] = (n-1)(n-2) g / n^3``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return (n - 1) * (n - 2) * g / n**3


def slope_formula(g: float, n: int) -> float:
    """Slope at zero in the one-factor form ``-g (n^2 - 3n + 2) / n^3``.

    This is half the true derivative; see :func:`mse_slope`.
    """
    return 0.0 - g * (n * n - 3 * n + 2) / n**3


def mse_slope(g: float, n: int) -> float:
    """``phi'(0) = -2 E[(X - Xbar_n) T_n]``."""
    return 0.0 - 2.0 * cross_term_closed_form(g, n)


def _t2_chunk(model: Model, n: int):
    def run(rng, size):
        _, t = sample_statistics(model, n, size, rng)
        t2 = t * t
        return {"s1": np.array(t2.sum()), "s2": np.array((t2 * t2).sum()), "count": np.array(float(size))}
    return run


def estimate_t2(model: Model, n: int, trials: int, seed: int = 0, workers: int = 1) -> tuple[float, float]:
    """Monte Carlo ``E T_n^2`` and its standard error."""
    if trials < MIN_T2_TRIALS:
        raise ValueError("insufficient trials for E T_n^2")
    tot = reduce_sums(map_chunks(_t2_chunk(model, n), trials, seed, f"t2/n={n}", workers, trial_chunk(n)))
    mean = float(tot["s1"]) / trials
    var = max(float(tot["s2"]) / trials - mean * mean, 0.0)
    return mean, math.sqrt(var / trials)


@dataclass(frozen=True)
class DominationReport:
    n: int
    g: float
    cross_term: float
    t2_estimate: float
    t2_se: float
    epsilon: float
    threshold_exact: float
    threshold_simple: float
    slope0: float
    phi_prime0: float
    dominates: bool
    flag: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def domination_report(model: Model, n: int, epsilon: float = 1e-6, trials: int = 100_000, seed: int = 0,
                      workers: int = 1) -> DominationReport:
    """Thresholds on ``lambda_bar`` below which the skew-shifted mean beats the sample mean.

    ``threshold_exact = 2 E[(X - Xbar_n) T_n] / (E T_n^2 + eps)`` is the
    sufficient condition.  ``threshold_simple = 8 g / (n (E T_n^2 + eps))``
    is reported for comparison only; it is not a sufficient condition.
    ``slope0`` is the one-factor slope form and ``phi_prime0`` the true
    derivative at zero.
    """
    if n < 3:
        raise ValueError("n must be at least 3")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    g = model.kurtosis_gap()
    t2, se = estimate_t2(model, n, trials, seed, workers)
    cross = cross_term_closed_form(g, n)
    dominates = g > 0
    return DominationReport(
        n=n,
        g=g,
        cross_term=cross,
        t2_estimate=t2,
        t2_se=se,
        epsilon=epsilon,
        threshold_exact=2.0 * cross / (t2 + epsilon),
        threshold_simple=8.0 * g / (n * (t2 + epsilon)),
        slope0=slope_formula(g, n),
        phi_prime0=mse_slope(g, n),
        dominates=dominates,
        flag="" if dominates else "no strict domination; lambda_bar = 0 optimal",
    )


@dataclass
class MseSums:
    """Per-grid-point running sums over paired trials.

    ``err = est - E X``, ``draw = est - X'`` with ``X'`` a fresh draw, and
    ``diff = err^2 - (Xbar - E X)^2``.  ``slope`` accumulates
    ``2 (Xbar - E X) T_n``, the exact central difference of ``err^2`` at zero.
    """

    grid: np.ndarray
    trials: int
    sums: dict = field(repr=False)

    def _stat(self, key: str):
        s1 = self.sums[key + "1"] / self.trials
        s2 = self.sums[key + "2"] / self.trials
        var = np.clip(s2 - s1 * s1, 0.0, None)
        return s1, np.sqrt(var / self.trials)

    def truth(self):
        return self._stat("e")

    def draw(self):
        return self._stat("w")

    def draw_gap(self):
        return self._stat("g")

    def diff(self):
        return self._stat("d")

    def slope(self) -> tuple[float, float]:
        m, se = self._stat("q")
        return float(m), float(se)


def _mse_chunk(model: Model, n: int, grid: np.ndarray, mu: float):
    def run(rng, size):
        xbar, t = sample_statistics(model, n, size, rng)
        fresh = model.sample(rng, size)
        est = xbar[:, None] + grid[None, :] * t[:, None]
        e2 = (est - mu) ** 2
        w2 = (est - fresh[:, None]) ** 2
        d = e2 - ((xbar - mu) ** 2)[:, None]
        gap = w2 - e2
        q = 2.0 * (xbar - mu) * t
        out = {}
        for key, v in (("e", e2), ("w", w2), ("d", d), ("g", gap)):
            out[key + "1"] = v.sum(axis=0)
            out[key + "2"] = (v * v).sum(axis=0)
        out["q1"] = np.array(q.sum())
        out["q2"] = np.array((q * q).sum())
        return out
    return run


def paired_mse(model: Model, n: int, grid, trials: int, seed: int = 0, workers: int = 1, tag: str = "mse") -> MseSums:
    """Common-random-number Monte Carlo sums for every grid point at once."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if n < 1:
        raise ValueError("n must be at least 1")
    grid = np.asarray(grid, dtype=float).ravel()
    if grid.size == 0 or np.any(grid < 0):
        raise ValueError("lambda grid must be a nonempty list of nonnegative values")
    parts = map_chunks(_mse_chunk(model, n, grid, model.expected_value), trials, seed, f"{tag}/n={n}", workers,
                       trial_chunk(n))
    return MseSums(grid, trials, reduce_sums(parts))


@dataclass(frozen=True)
class LambdaChoice:
    value: float
    feasible: bool
    threshold: float
    grid: tuple
    mse: tuple
    flag: str = ""


def lambda_opt(model: Model, n: int, epsilon: float, grid, trials: int, seed: int = 0, workers: int = 1) -> LambdaChoice:
    """Grid point in ``[0, threshold_exact]`` with the smallest Monte Carlo MSE."""
    rep = domination_report(model, n, epsilon, trials, seed, workers)
    grid = np.asarray(grid, dtype=float).ravel()
    feas = grid[(grid >= 0) & (grid <= rep.threshold_exact)]
    if not rep.dominates or feas.size == 0 or not np.any(feas > 0):
        return LambdaChoice(0.0, False, rep.threshold_exact, (), (), "empty feasible grid; lambda_bar = 0")
    if not np.any(feas == 0):
        feas = np.concatenate([[0.0], feas])
    sums = paired_mse(model, n, feas, trials, seed, workers, tag="lambda-opt")
    mse, _ = sums.truth()
    i = int(np.argmin(mse))
    return LambdaChoice(float(feas[i]), True, rep.threshold_exact, tuple(feas.tolist()), tuple(mse.tolist()))
