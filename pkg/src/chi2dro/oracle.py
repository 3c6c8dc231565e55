"""Brute-force checks of the closed forms on finite-support distributions.

Everything here works from the atoms and weights directly.  The estimator
module is only consulted to label a saddle report as admissible or not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize

from .estimator import InfeasibleRiskLevel, gamma_star
from .moments import DiscreteDistribution, moments_from_discrete

_NEG_TOL = 1e-12


def _losses(dist: DiscreteDistribution, xhat) -> np.ndarray:
    diff = dist.atoms - np.atleast_1d(np.asarray(xhat, dtype=float))
    return np.einsum("ij,ij->i", diff, diff)


def chi2_divergence(weights: np.ndarray, base: np.ndarray) -> float:
    """``sum base_i (weights_i / base_i - 1)^2`` on a common support."""
    return float(np.sum((weights - base) ** 2 / base))


def _to_dist(dist: DiscreteDistribution, nu: np.ndarray) -> DiscreteDistribution:
    nu = np.clip(nu, 0.0, None)
    return DiscreteDistribution(dist.atoms, nu / nu.sum())


class InnerSup(NamedTuple):
    value: float
    weights: np.ndarray  # aligned with dist.atoms
    flat: bool = False
    closed_form: bool = False

    def nu(self, dist: DiscreteDistribution) -> DiscreteDistribution:
        return _to_dist(dist, self.weights)


def inner_sup(dist: DiscreteDistribution, xhat, radius: float) -> InnerSup:
    """Worst-case expected loss over probability measures in the chi-square ball.

    Maximises ``sum nu_i |x_i - xhat|^2`` subject to ``nu >= 0``,
    ``sum nu = 1`` and ``chi2(nu | mu) <= radius**2``.

    The optimal density has the form ``max(0, a + b Z)`` with ``b >= 0``, so
    its support is a top segment of the atoms ordered by loss.  Every such
    segment is solved in closed form and the best feasible one is kept.
    """
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    mu = dist.weights
    z = _losses(dist, xhat)
    ez = float(mu @ z)
    var = float(mu @ (z - ez) ** 2)
    if radius == 0:
        return InnerSup(ez, mu.copy(), closed_form=True)
    if var <= 1e-15 * max(1.0, ez * ez):
        return InnerSup(ez, mu.copy(), flat=True)

    r2 = radius * radius
    # signed optimum; optimal over probabilities when it stays nonnegative
    dens = 1.0 + radius * (z - ez) / math.sqrt(var)
    if np.min(dens) >= -_NEG_TOL:
        return InnerSup(ez + radius * math.sqrt(var), mu * np.clip(dens, 0.0, None), closed_form=True)

    order = np.argsort(-z, kind="stable")
    zs, ms = z[order], mu[order]
    best_val, best_w = -math.inf, None
    # segment ends only at tie-group boundaries
    ends = [j for j in range(1, len(zs) + 1) if j == len(zs) or zs[j] < zs[j - 1]]
    for j in ends:
        zz, mm = zs[:j], ms[:j]
        p = float(mm.sum())
        if zz[0] == zz[-1]:
            if 1.0 / p - 1.0 > r2 * (1 + 1e-12):
                continue
            dens_s = np.full(j, 1.0 / p)
        else:
            # density a + b Z written around the segment mean to avoid cancellation
            cz = zz - float(mm @ zz) / p
            b2 = (1.0 + r2 - 1.0 / p) / float(mm @ cz**2)
            if b2 < 0:
                continue
            dens_s = 1.0 / p + math.sqrt(b2) * cz
            if np.min(dens_s) < -_NEG_TOL:
                continue
            dens_s = np.clip(dens_s, 0.0, None)
        val = float(mm @ (dens_s * zz))
        if val > best_val:
            w = np.zeros_like(mu)
            w[order[:j]] = mm * dens_s
            best_val, best_w = val, w
    if best_w is None:  # pragma: no cover - the full support is always a candidate
        raise RuntimeError("no feasible support segment")
    return InnerSup(best_val, best_w)


def _direct_stats(dist: DiscreteDistribution):
    """Sigma, zeta_minus and alpha straight from the atoms."""
    x, w = dist.atoms, dist.weights
    mean = w @ x
    y = x - mean
    sigma = (w[:, None] * y).T @ y
    sq = np.sum(x * x, axis=1)
    esq = w @ sq
    zeta = 2.0 * (w @ (sq[:, None] * x) - esq * mean)
    alpha = float(w @ (sq - esq) ** 2)
    return mean, sigma, zeta, alpha


def _pinv_sym(a: np.ndarray):
    vals, vecs = np.linalg.eigh(a)
    cut = 1e-10 * max(float(np.max(np.abs(vals))), 0.0)
    inv = np.array([1.0 / v if v > cut else 0.0 for v in vals])
    return (vecs * inv) @ vecs.T, vals, vecs, vals > cut


class QuadraticCheck(NamedTuple):
    lhs: float
    rhs: float
    applicable: bool = True


def quadratic_reformulation_check(dist: DiscreteDistribution, xhat) -> QuadraticCheck:
    """Direct loss variance against its completed-square form.

    ``rhs = (alpha - zeta' G^+ zeta) + |xhat - G^+ zeta|_G^2`` with
    ``G = 4 Sigma`` and ``zeta = zeta_minus``.  With a singular covariance the
    form only holds when ``zeta`` has no kernel component.
    """
    x = np.atleast_1d(np.asarray(xhat, dtype=float))
    z = _losses(dist, x)
    w = dist.weights
    lhs = float(w @ (z - w @ z) ** 2)
    _, sigma, zeta, alpha = _direct_stats(dist)
    gamma = 4.0 * sigma
    ginv, vals, vecs, pos = _pinv_sym(gamma)
    ker = vecs[:, ~pos].T @ zeta
    applicable = not ker.size or float(np.max(np.abs(ker))) <= 1e-8 * (1.0 + float(np.max(np.abs(zeta))))
    center = ginv @ zeta
    r = x - center
    rhs = float(alpha - zeta @ ginv @ zeta + r @ gamma @ r)
    return QuadraticCheck(lhs, rhs, applicable)


def _project_ellipsoid(p, center, gvals, gvecs, level):
    """Euclidean projection onto ``{x : (x-c)' G (x-c) <= level}``.

    The projection is ``c + (I + t G)^{-1}(p - c)``; the multiplier ``t`` is
    found by Newton's method on the convex, decreasing boundary function.
    """
    q = gvecs.T @ (p - center)
    g = np.clip(gvals, 0.0, None)
    inside = float(np.sum(g * q * q))
    if inside <= level:
        return p.copy()
    if level <= 0:
        y = np.where(g > 0, 0.0, q)
        return center + gvecs @ y
    t = 0.0
    for _ in range(500):
        den = 1.0 + t * g
        h = float(np.sum(g * q * q / den**2)) - level
        dh = float(np.sum(-2.0 * g * g * q * q / den**3))
        if dh == 0:
            break
        step = -h / dh
        t_new = t + step
        if t_new <= t or abs(step) <= 1e-16 * max(1.0, t):
            t = max(t_new, t)
            break
        t = t_new
    return center + gvecs @ (q / (1.0 + t * g))


def constrained_solve(dist: DiscreteDistribution, epsilon: float, tol: float = 1e-12, max_iter: int = 10000) -> np.ndarray:
    """Minimise ``E|X - xhat|^2`` subject to ``var |X - xhat|^2 <= epsilon``.

    Projected gradient descent on the ellipsoid form of the constraint, with
    step 1/4 and iteration until the gradient mapping is below ``tol``.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    mean, sigma, zeta, alpha = _direct_stats(dist)
    gamma = 4.0 * sigma
    ginv, gvals, gvecs, pos = _pinv_sym(gamma)
    gvals = np.where(pos, gvals, 0.0)
    center = ginv @ zeta
    floor = float(alpha - zeta @ ginv @ zeta)
    level = epsilon - floor
    if level < -1e-12 * max(1.0, abs(floor)):
        raise InfeasibleRiskLevel(epsilon, floor)
    level = max(level, 0.0)

    step = 0.25
    x = mean.copy()
    for _ in range(max_iter):
        nxt = _project_ellipsoid(x - step * 2.0 * (x - mean), center, gvals, gvecs, level)
        gm = np.linalg.norm(x - nxt) / step
        x = nxt
        if gm <= tol * max(1.0, float(np.linalg.norm(x))):
            break
    return x


def scan_min_density(dist: DiscreteDistribution, xhat, lam: float) -> float:
    """Smallest value over the support of ``1 + 2 lam (Z - E Z)`` at ``xhat``."""
    z = _losses(dist, xhat)
    return float(np.min(1.0 + 2.0 * lam * (z - dist.weights @ z)))


@dataclass(frozen=True)
class SaddleReport:
    radius: float
    minimax: float
    maximin: float
    maximin_search: float
    gap: float
    xhat_star: np.ndarray
    nu_star: DiscreteDistribution
    nu_weights: np.ndarray
    divergence: float
    self_consistent: bool
    epsilon: float
    lambda_mv: float
    admissible: bool

    @property
    def note(self) -> str:
        return "" if self.admissible else "outside the admissible saddle-point regime"

    def to_dict(self) -> dict:
        return {
            "radius": self.radius,
            "minimax": self.minimax,
            "maximin": self.maximin,
            "maximin_search": self.maximin_search,
            "gap": self.gap,
            "xhat_star": self.xhat_star.tolist(),
            "nu_star": self.nu_star.to_dict(),
            "divergence": self.divergence,
            "self_consistent": self.self_consistent,
            "epsilon": self.epsilon,
            "lambda_mv": self.lambda_mv,
            "admissible": self.admissible,
            "note": "" if self.admissible else "outside the admissible saddle-point regime",
        }


def _coordinate_root(fn, lo: float, hi: float) -> float:
    """Bisection for the sign change of an increasing function on ``[lo, hi]``."""
    if fn(lo) >= 0:
        return lo
    if fn(hi) <= 0:
        return hi
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return mid
        if fn(mid) > 0:
            hi = mid
        else:
            lo = mid


def minimax_point(dist: DiscreteDistribution, radius: float, sweeps: int = 500) -> np.ndarray:
    """Minimiser of the convex worst-case loss.

    The worst-case loss has gradient ``2(xhat - E_nu xhat)`` at the maximising
    ``nu``; each coordinate is set by bisecting that derivative, cycling until
    a sweep no longer moves the point.
    """
    d = dist.dim
    if d > 3:
        raise ValueError("oracle is limited to d <= 3")
    lo = dist.atoms.min(axis=0)
    hi = dist.atoms.max(axis=0)
    x = dist.weights @ dist.atoms

    def partial(i, x):
        def f(t):
            y = x.copy()
            y[i] = t
            sup = inner_sup(dist, y, radius)
            return y[i] - float(sup.weights @ dist.atoms[:, i])
        return f

    for _ in range(sweeps if d > 1 else 1):
        prev = x.copy()
        for i in range(d):
            x[i] = _coordinate_root(partial(i, x), float(lo[i]), float(hi[i]))
        if np.max(np.abs(x - prev)) <= 1e-14 * max(1.0, float(np.max(np.abs(x)))):
            break
    return x


def _variance_under(dist: DiscreteDistribution, nu: np.ndarray) -> float:
    m = nu @ dist.atoms
    y = dist.atoms - m
    return float(nu @ np.einsum("ij,ij->i", y, y))


def maximin_search(dist: DiscreteDistribution, radius: float) -> tuple[float, np.ndarray]:
    """Maximise ``Var_nu(X)`` over the ball by SLSQP started at the base law."""
    mu = dist.weights
    x = dist.atoms
    sq = np.einsum("ij,ij->i", x, x)
    r2 = radius * radius

    def neg(nu):
        m = nu @ x
        return -(nu @ sq - m @ m)

    def neg_grad(nu):
        m = nu @ x
        return -(sq - 2.0 * x @ m)

    cons = [
        {"type": "eq", "fun": lambda nu: nu.sum() - 1.0, "jac": lambda nu: np.ones_like(nu)},
        {"type": "ineq", "fun": lambda nu: r2 - np.sum((nu - mu) ** 2 / mu), "jac": lambda nu: -2.0 * (nu - mu) / mu},
    ]
    res = minimize(neg, mu.copy(), jac=neg_grad, method="SLSQP", bounds=[(0.0, 1.0)] * len(mu),
                   constraints=cons, options={"ftol": 1e-15, "maxiter": 1000})
    nu = np.clip(res.x, 0.0, None)
    nu = nu / nu.sum()
    div = chi2_divergence(nu, mu)
    if div > r2:
        # pull back along the segment to the centre, which stays feasible
        nu = mu + (nu - mu) * math.sqrt(r2 / div)
    return _variance_under(dist, nu), nu


def saddle_check(dist: DiscreteDistribution, radius: float, tol: float = 1e-6) -> SaddleReport:
    """Measure the minimax / maximin gap of the squared-loss game on the ball.

    ``maximin`` is the larger of two feasible lower bounds: the SLSQP search
    and the variance under the worst case at the minimax point.
    """
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    x_star = minimax_point(dist, radius)
    sup = inner_sup(dist, x_star, radius)
    nu = sup.weights
    minimax = sup.value
    search_val, _ = maximin_search(dist, radius) if radius > 0 else (_variance_under(dist, dist.weights), dist.weights)
    maximin = max(search_val, _variance_under(dist, nu))
    shift = float(np.linalg.norm(x_star - nu @ dist.atoms))

    z = _losses(dist, x_star)
    w = dist.weights
    eps = float(w @ (z - w @ z) ** 2)
    lam_mv = radius / (2.0 * math.sqrt(eps)) if eps > 0 else (0.0 if radius == 0 else math.inf)
    try:
        g = gamma_star(moments_from_discrete(dist))
    except ValueError:
        g = math.inf
    admissible = radius == 0 or g == 0 or lam_mv <= 1.0 / g

    return SaddleReport(
        radius=float(radius),
        minimax=minimax,
        maximin=maximin,
        maximin_search=search_val,
        gap=minimax - maximin,
        xhat_star=x_star,
        nu_star=_to_dist(dist, nu),
        nu_weights=nu,
        divergence=chi2_divergence(nu, dist.weights),
        self_consistent=shift <= tol,
        epsilon=eps,
        lambda_mv=lam_mv,
        admissible=bool(admissible),
    )


def boundary_search_3(dist: DiscreteDistribution, xhat, radius: float, points: int = 1_000_000, seed: int = 0) -> float:
    """Random search for the inner supremum on a 3-atom support.

    A linear objective over the 2-D feasible set peaks on its boundary, so
    ``points`` random points are drawn on the ball's boundary ellipse and on
    each simplex edge, and the finitely many corner points are added.
    """
    if dist.size != 3:
        raise ValueError("boundary search needs exactly 3 atoms")
    mu = dist.weights
    z = _losses(dist, xhat)
    r2 = radius * radius
    rng = np.random.default_rng(seed)
    best = float(mu @ z)

    # ellipse: nu = mu + B t, t' (B' D B) t = r^2 with D = diag(1/mu)
    basis = np.array([[1.0, 0.0], [-1.0, 1.0], [0.0, -1.0]])
    gram = basis.T @ np.diag(1.0 / mu) @ basis
    chol = np.linalg.cholesky(gram)
    theta = rng.uniform(0.0, 2.0 * math.pi, points)
    circle = np.stack([np.cos(theta), np.sin(theta)]) * radius
    t = np.linalg.solve(chol.T, circle)
    nus = mu[:, None] + basis @ t
    ok = np.all(nus >= 0, axis=0)
    if np.any(ok):
        best = max(best, float(np.max(z @ nus[:, ok])))

    corners = [np.eye(3)[i] for i in range(3)]
    for i, j in ((0, 1), (0, 2), (1, 2)):
        s = rng.uniform(0.0, 1.0, points)
        edge = np.zeros((3, points))
        edge[i], edge[j] = s, 1.0 - s
        feas = np.sum((edge - mu[:, None]) ** 2 / mu[:, None], axis=0) <= r2
        if np.any(feas):
            best = max(best, float(np.max(z @ edge[:, feas])))
        # edge/ellipse intersections: quadratic in s
        k = 3 - i - j
        a = 1.0 / mu[i] + 1.0 / mu[j]
        b = -2.0 - 2.0 * (1.0 - mu[j]) / mu[j]
        c = mu[i] + (1.0 - mu[j]) ** 2 / mu[j] + mu[k] - r2
        disc = b * b - 4 * a * c
        if disc >= 0:
            for root in ((-b - math.sqrt(disc)) / (2 * a), (-b + math.sqrt(disc)) / (2 * a)):
                if 0.0 <= root <= 1.0:
                    v = np.zeros(3)
                    v[i], v[j] = root, 1.0 - root
                    corners.append(v)
    for v in corners:
        if chi2_divergence(v, mu) <= r2 * (1 + 1e-12):
            best = max(best, float(z @ v))
    return best
