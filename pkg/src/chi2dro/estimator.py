"""Closed-form risk-constrained / chi-square robust mean estimators.

Multiplier conventions
----------------------
``lam`` in :func:`population_estimator`, :func:`reweight_density`,
:func:`dual_solve` and :func:`eigen_decomposed_estimator` is the multiplier of
the variance-of-loss constraint, so that

    xhat(lam) = (I + 4 lam Sigma)^{-1} (E X + lam zeta_minus).

The scalar skewness form in :func:`scalar_estimator` is written with its own
multiplier ``lam_f = 2 lam``; both produce the same estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .moments import DiscreteDistribution, MomentSet, moments_from_discrete, _as_matrix


class InfeasibleRiskLevel(ValueError):
    """Requested risk level lies below the achievable infimum."""

    def __init__(self, epsilon: float, infimum: float):
        super().__init__(f"infeasible risk level: epsilon={epsilon!r} < infimum={infimum!r}")
        self.epsilon = epsilon
        self.infimum = infimum


@dataclass(frozen=True)
class DirectionTerm:
    """Bias decomposition of the estimate along one covariance eigendirection."""

    direction: np.ndarray
    variance: float
    rotated_mean: float
    skew_term: float
    cross_term: float

    @property
    def rotated_estimate(self) -> float:
        return self.rotated_mean + self.skew_term + self.cross_term


@dataclass(frozen=True)
class EstimatorResult:
    estimate: np.ndarray
    lam: float
    lambda_md: float
    gamma_star: float
    admissible: bool
    epsilon: float
    bias_terms: tuple[DirectionTerm, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate.tolist(),
            "lambda": self.lam,
            "lambda_md": self.lambda_md,
            "gamma_star": self.gamma_star,
            "admissible": self.admissible,
            "epsilon": self.epsilon,
            "bias_terms": [
                {
                    "direction": t.direction.tolist(),
                    "variance": t.variance,
                    "rotated_mean": t.rotated_mean,
                    "skew_term": t.skew_term,
                    "cross_term": t.cross_term,
                }
                for t in self.bias_terms
            ],
        }


def _range_split(m: MomentSet):
    vals, vecs = m.eigh()
    pos = vals > 0
    return vals, vecs, pos


def infinity_estimate(m: MomentSet) -> np.ndarray:
    """Limit of the estimator as ``lam -> inf``: ``(4 Sigma)^+ zeta_minus``.

    Kernel directions of the covariance keep the mean's component.
    """
    vals, vecs, pos = _range_split(m)
    zu = vecs.T @ m.zeta_minus
    mu = vecs.T @ m.mean
    y = mu.copy()
    y[pos] = zu[pos] / (4.0 * vals[pos])
    return vecs @ y


def risk_value(m: MomentSet, xhat) -> float:
    """Variance of the loss ``|X - xhat|^2`` under the moment set."""
    x = np.atleast_1d(np.asarray(xhat, dtype=float))
    return float(m.alpha - 2.0 * m.zeta_minus @ x + 4.0 * x @ m.covariance @ x)


def expected_loss(m: MomentSet, xhat) -> float:
    x = np.atleast_1d(np.asarray(xhat, dtype=float))
    d = m.mean - x
    return m.mmse + float(d @ d)


def risk_infimum(m: MomentSet) -> float:
    """Smallest achievable loss variance, attained at the infinity estimate."""
    vals, vecs, pos = _range_split(m)
    zu = vecs.T @ m.zeta_minus
    return float(m.alpha - np.sum(zu[pos] ** 2 / (4.0 * vals[pos])))


def gamma_star(m: MomentSet) -> float:
    """Admissibility scale: ``2(|xhat_inf - E X|^2 + tr Sigma)``."""
    vals, vecs, pos = _range_split(m)
    zu = vecs.T @ m.zeta_minus
    ker = zu[~pos]
    if ker.size and np.max(np.abs(ker)) > 1e-8 * (1.0 + float(np.max(np.abs(zu)))):
        raise ValueError("degenerate covariance with nonzero third moment")
    shift = infinity_estimate(m) - m.mean
    return 2.0 * (float(shift @ shift) + m.mmse)


def is_admissible(lam: float, g: float) -> bool:
    return g == 0.0 or lam <= 1.0 / g


def multiplier_relation(lambda_mv: float, epsilon: float) -> float:
    """Mean-deviation multiplier from the mean-variance one: ``2 lam sqrt(eps)``."""
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    return 2.0 * lambda_mv * math.sqrt(epsilon)


def _decompose(dist: DiscreteDistribution, m: MomentSet, lam: float) -> tuple[DirectionTerm, ...]:
    vals, vecs = m.eigh()
    y = dist.atoms @ vecs
    w = dist.weights
    ey = w @ y
    ey2 = w @ y**2
    terms = []
    for i in range(m.dim):
        s = float(vals[i])
        if s == 0.0:
            skew = cross = 0.0
        else:
            c3 = float(w @ (y[:, i] - ey[i]) ** 3)
            cross_sum = sum(
                float(w @ (y[:, k] ** 2 * y[:, i])) - ey2[k] * ey[i] for k in range(m.dim) if k != i
            )
            factor = 2.0 * lam / (1.0 + 4.0 * lam * s)
            skew = factor * c3
            cross = factor * cross_sum
        terms.append(DirectionTerm(vecs[:, i].copy(), s, float(ey[i]), skew, cross))
    return tuple(terms)


def eigen_decomposed_estimator(source, lam: float) -> tuple[DirectionTerm, ...]:
    """Per-eigendirection split of the estimate into mean, skewness and cross terms.

    ``source`` is a DiscreteDistribution or a raw sample; the cross third-order
    statistics are not recoverable from a MomentSet alone.  Zero-variance
    directions carry no bias.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    dist = source if isinstance(source, DiscreteDistribution) else DiscreteDistribution.uniform(_as_matrix(source))
    return _decompose(dist, moments_from_discrete(dist), lam)


def reassemble(terms) -> np.ndarray:
    """Rotate a decomposition back to the original coordinates."""
    return sum(t.direction * t.rotated_estimate for t in terms)


def population_estimator(m: MomentSet, lam: float, dist: DiscreteDistribution | None = None) -> EstimatorResult:
    """Solution of the risk-constrained MMSE problem at multiplier ``lam``.

    Parameters
    ----------
    m : MomentSet
        Moments of the law.
    lam : float
        Nonnegative multiplier of the loss-variance constraint.
    dist : DiscreteDistribution, optional
        When given, ``bias_terms`` holds the eigendirection decomposition.
        Scalar laws get it from ``m`` alone.
    """
    if lam < 0 or not math.isfinite(lam):
        raise ValueError(f"lambda must be finite and nonnegative, got {lam!r}")
    d = m.dim
    if lam == 0:
        xhat = m.mean.copy()
    else:
        xhat = np.linalg.solve(np.eye(d) + 4.0 * lam * m.covariance, m.mean + lam * m.zeta_minus)
    g = gamma_star(m)
    eps = max(risk_value(m, xhat), 0.0)
    if dist is not None:
        terms = _decompose(dist, m, lam)
    elif d == 1:
        mean, m2, m3, _ = m.scalar()
        skew = 0.0 if m2 == 0 else 2.0 * lam * m3 / (1.0 + 4.0 * lam * m2)
        terms = (DirectionTerm(np.ones(1), m2, mean, skew, 0.0),)
    else:
        terms = ()
    return EstimatorResult(
        estimate=xhat,
        lam=float(lam),
        lambda_md=multiplier_relation(lam, eps),
        gamma_star=g,
        admissible=is_admissible(lam, g),
        epsilon=eps,
        bias_terms=terms,
    )


def scalar_estimator(mean: float, m2: float, m3: float, lam: float) -> float:
    """Scalar skewness form ``mean + lam m3 / (1 + 2 lam m2)``.

    ``lam`` here is twice the constraint multiplier used by
    :func:`population_estimator`.  The estimate saturates at
    ``mean + m3 / (2 m2)`` as ``lam`` grows.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if m2 < 0:
        raise ValueError("m2 must be nonnegative")
    if m2 == 0:
        if m3 != 0:
            raise ValueError("inconsistent moments")
        return float(mean)
    return float(mean + lam * m3 / (1.0 + 2.0 * lam * m2))


def _points(x, d: int) -> tuple[np.ndarray, bool]:
    """Rows to evaluate and whether ``x`` was a single point."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        return x.reshape(-1, d), False
    if d == 1 and x.ndim == 1 and x.size > 1:
        return x[:, None], False
    return x.reshape(1, d), True


def reweight_density(x, xhat, lam: float, m: MomentSet):
    """Reweighting density ``1 + 2 lam (|x - xhat|^2 - E|X - xhat|^2)``.

    Vectorised over rows of ``x``. May be negative when ``lam > 1/gamma*``.
    """
    pts, single = _points(x, m.dim)
    xh = np.atleast_1d(np.asarray(xhat, dtype=float))
    diff = pts - xh
    out = 1.0 + 2.0 * lam * (np.einsum("ij,ij->i", diff, diff) - expected_loss(m, xh))
    return float(out[0]) if single else out


def worstcase_density(x, xhat, lambda_md: float, m: MomentSet):
    """Maximiser of the signed chi-square inner problem at ``xhat``.

    ``1 + lambda_md (Z - E Z) / sd(Z)`` with ``Z = |X - xhat|^2``; its
    chi-square divergence from the base law is exactly ``lambda_md**2``.
    """
    pts, single = _points(x, m.dim)
    if lambda_md == 0:
        out = np.ones(pts.shape[0])
    else:
        xh = np.atleast_1d(np.asarray(xhat, dtype=float))
        var = risk_value(m, xh)
        if var <= 1e-14 * max(1.0, m.alpha):
            raise ValueError("constant loss; worst case undefined")
        diff = pts - xh
        z = np.einsum("ij,ij->i", diff, diff)
        out = 1.0 + lambda_md * (z - expected_loss(m, xh)) / math.sqrt(var)
    return float(out[0]) if single else out


def _constraint_curve(m: MomentSet):
    """``lam -> risk_value(xhat(lam))`` evaluated in the eigenbasis."""
    vals, vecs, pos = _range_split(m)
    delta = vecs.T @ (m.mean - infinity_estimate(m))
    base = risk_infimum(m)
    v = vals[pos]
    dd = delta[pos] ** 2

    def curve(lam: float) -> float:
        return float(base + np.sum(4.0 * v * dd / (1.0 + 4.0 * lam * v) ** 2))

    return curve


def dual_solve(m: MomentSet, epsilon: float, dist: DiscreteDistribution | None = None) -> EstimatorResult:
    """Estimator at risk level ``epsilon`` with its optimal multiplier.

    The loss variance along the solution path is nonincreasing in the
    multiplier, so the multiplier is bracketed by doubling and then bisected
    until the bracket collapses.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    curve = _constraint_curve(m)
    c0 = curve(0.0)
    inf = risk_infimum(m)
    if epsilon >= c0:
        return population_estimator(m, 0.0, dist)
    if epsilon < inf - 1e-12 * max(1.0, abs(inf)):
        raise InfeasibleRiskLevel(epsilon, inf)

    hi = 1.0
    for _ in range(60):
        if curve(hi) <= epsilon:
            break
        hi *= 2.0
    lo = 0.0
    if curve(hi) > epsilon:
        lam = hi
    else:
        while True:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if curve(mid) > epsilon:
                lo = mid
            else:
                hi = mid
        lam = lo if abs(curve(lo) - epsilon) < abs(curve(hi) - epsilon) else hi
    res = population_estimator(m, lam, dist)
    return EstimatorResult(
        estimate=res.estimate,
        lam=res.lam,
        lambda_md=multiplier_relation(lam, epsilon),
        gamma_star=res.gamma_star,
        admissible=res.admissible,
        epsilon=float(epsilon),
        bias_terms=res.bias_terms,
    )


def lagrangean(m: MomentSet, xhat, lam: float, epsilon: float) -> float:
    """``|xhat - E X|^2 + lam (risk(xhat) - epsilon)``.

    Equal to the ellipsoid form of the Lagrangean up to an additive constant
    that does not depend on ``xhat``.
    """
    x = np.atleast_1d(np.asarray(xhat, dtype=float))
    d = x - m.mean
    return float(d @ d) + lam * (risk_value(m, x) - epsilon)


def grad_chi2_expectation(m: MomentSet, lam: float) -> float:
    """Closed-form mean Wasserstein gradient of chi-square at the worst case.

    Returns ``lam^2 m3 / (1 + lam m2)``; defined for ``0 <= lam <= 1/(2 gamma*)``.
    """
    if m.dim != 1:
        raise ValueError("scalar only")
    _, m2, m3, _ = m.scalar()
    if m2 <= 0:
        raise ValueError("m2 must be positive")
    g = gamma_star(m)
    if lam < 0 or lam > 1.0 / (2.0 * g):
        raise ValueError("outside admissible diagnostic range")
    return lam**2 * m3 / (1.0 + lam * m2)


def grad_chi2_expectation_direct(m: MomentSet, lam: float) -> np.ndarray:
    """``E_mu[2 grad_x (dnu/dmu)]`` for the worst case built at ``xhat(lam)``.

    Uses ``lambda_md = 2 lam sqrt(eps)`` with ``eps`` the loss variance at
    the estimate, which reduces to ``8 lam (E X - xhat)``.
    """
    res = population_estimator(m, lam)
    eps = res.epsilon
    if eps <= 0:
        return np.zeros(m.dim)
    lam_md = multiplier_relation(lam, eps)
    return 2.0 * lam_md / math.sqrt(eps) * 2.0 * (m.mean - res.estimate)


def expectation_shift_bound(dist: DiscreteDistribution) -> float:
    """Upper bound on the mean shift at ``lam = 1/gamma*`` for a positively skewed scalar law."""
    if dist.dim != 1:
        raise ValueError("scalar only")
    m = moments_from_discrete(dist)
    mean, m2, m3, _ = m.scalar()
    abs3 = float(dist.weights @ np.abs(dist.atoms[:, 0] - mean) ** 3)
    sd = math.sqrt(m2)
    return m2 * sd / (2.0 * (0.5 * m2 * abs3 / sd**3 + m.mmse) + 2.0 * m2) * (m3 / sd**3)


def positivity_boundary(dist: DiscreteDistribution, lam_max: float | None = None, steps: int = 4000) -> float:
    """Smallest multiplier at which the reweighting density turns negative on the support.

    Grid scan followed by bisection on the first sign change; returns ``inf``
    when the density stays nonnegative up to ``lam_max``.
    """
    m = moments_from_discrete(dist)
    g = gamma_star(m)
    if lam_max is None:
        lam_max = 50.0 / g if g > 0 else 1.0

    def min_density(lam: float) -> float:
        xh = population_estimator(m, lam).estimate
        return float(np.min(reweight_density(dist.atoms, xh, lam, m)))

    grid = np.linspace(0.0, lam_max, steps + 1)
    prev = 0.0
    for lam in grid[1:]:
        if min_density(lam) < 0:
            lo, hi = prev, lam
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if mid <= lo or mid >= hi:
                    break
                if min_density(mid) < 0:
                    hi = mid
                else:
                    lo = mid
            return hi
        prev = lam
    return math.inf
