import json
import math

import numpy as np
import pytest

from chi2dro.estimator import dual_solve, gamma_star, population_estimator, risk_infimum, risk_value
from chi2dro.moments import DiscreteDistribution, moments_from_discrete
from chi2dro.oracle import (
    boundary_search_3,
    chi2_divergence,
    constrained_solve,
    inner_sup,
    quadratic_reformulation_check,
    saddle_check,
)
from chi2dro.rng import stream
from conftest import random_distribution


def _z(dist, xhat):
    return np.sum((dist.atoms - np.atleast_1d(xhat)) ** 2, axis=1)


def _admissible_radius(dist, frac):
    m = moments_from_discrete(dist)
    lam = frac / gamma_star(m)
    x = population_estimator(m, lam).estimate
    return 2 * lam * math.sqrt(risk_value(m, x)), lam, x


def test_inner_sup_radius_zero(bern25):
    res = inner_sup(bern25, [0.1], 0.0)
    z = _z(bern25, 0.1)
    assert res.value == pytest.approx(bern25.weights @ z, abs=1e-15)
    assert np.array_equal(res.weights, bern25.weights)


def test_inner_sup_flat_loss(bern25):
    res = inner_sup(bern25, [0.5], 0.7)
    assert res.flat
    assert res.value == pytest.approx(0.25, abs=1e-15)


def test_inner_sup_closed_form_regime():
    d = DiscreteDistribution([0.0, 1.0, 3.0], [0.5, 0.3, 0.2])
    z = _z(d, 0.7)
    ez = d.weights @ z
    sd = math.sqrt(d.weights @ (z - ez) ** 2)
    for r in (0.05, 0.2, 0.5):
        res = inner_sup(d, [0.7], r)
        assert res.closed_form
        assert res.value == pytest.approx(ez + r * sd, abs=1e-12)


def test_inner_sup_feasible_monotone_and_below_relaxation():
    rng = stream(4, "inner-sup")
    for _ in range(30):
        k = int(rng.integers(2, 8))
        d = random_distribution(rng, k, 1)
        x = rng.normal(size=1)
        z = _z(d, x)
        ez = d.weights @ z
        sd = math.sqrt(d.weights @ (z - ez) ** 2)
        prev = -math.inf
        for r in np.linspace(0, 6, 25):
            res = inner_sup(d, x, r)
            w = res.weights
            assert np.all(w >= 0) and w.sum() == pytest.approx(1.0, abs=1e-12)
            assert chi2_divergence(w, d.weights) <= r * r + 1e-8
            assert res.value == pytest.approx(w @ z, abs=1e-10 * (1 + abs(res.value)))
            assert res.value >= prev - 1e-12
            assert res.value <= ez + r * sd + 1e-10
            assert res.value <= z.max() + 1e-12
            prev = res.value


def test_inner_sup_matches_boundary_search_beyond_closed_form():
    rng = stream(9, "inner-sup-3")
    hits = 0
    for _ in range(8):
        d = random_distribution(rng, 3, 1)
        x = rng.normal(size=1)
        for r in (0.8, 1.5, 3.0):
            res = inner_sup(d, x, r)
            hits += not res.closed_form
            assert res.value == pytest.approx(boundary_search_3(d, x, r, points=100_000, seed=1), abs=1e-6)
    assert hits > 0


def test_boundary_search_needs_three_atoms(bern25):
    with pytest.raises(ValueError):
        boundary_search_3(bern25, [0.0], 1.0)


def test_constrained_solve_slack_returns_mean():
    d = DiscreteDistribution([-1.0, 0.0, 0.5, 2.0, 4.0], [0.3, 0.25, 0.2, 0.15, 0.1])
    m = moments_from_discrete(d)
    assert constrained_solve(d, 2 * risk_value(m, m.mean))[0] == pytest.approx(m.mean[0], abs=1e-15)


def test_constrained_solve_agrees_with_dual_on_five_atoms():
    rng = stream(2, "five-atoms")
    for _ in range(20):
        d = random_distribution(rng, 5, int(rng.integers(1, 4)))
        m = moments_from_discrete(d)
        lo, hi = risk_infimum(m), risk_value(m, m.mean)
        eps = lo + float(rng.uniform(0.05, 0.95)) * (hi - lo)
        a = dual_solve(m, eps).estimate
        b = constrained_solve(d, eps)
        assert np.allclose(a, b, atol=1e-7)


def test_constrained_solve_boundary_with_coincident_centres():
    # symmetric two atoms: E X equals the ellipsoid centre and the infimum is 0
    d = DiscreteDistribution([-1.0, 1.0], [0.5, 0.5])
    assert constrained_solve(d, 0.0)[0] == pytest.approx(0.0, abs=1e-15)
    d2 = DiscreteDistribution([[-1.0, 2.0], [1.0, 2.0]], [0.5, 0.5])
    assert np.allclose(constrained_solve(d2, 0.0), [0.0, 2.0], atol=1e-12)


def test_quadratic_check_at_centre_and_point_mass():
    d = DiscreteDistribution([0.0, 1.0, 3.0], [0.5, 0.3, 0.2])
    m = moments_from_discrete(d)
    centre = m.zeta_minus / (4 * m.covariance[0, 0])
    q = quadratic_reformulation_check(d, centre)
    floor = m.alpha - m.zeta_minus[0] ** 2 / (4 * m.covariance[0, 0])
    assert q.lhs == pytest.approx(floor, abs=1e-12) and q.rhs == pytest.approx(floor, abs=1e-12)
    pm = DiscreteDistribution([[1.0, 2.0]], [1.0])
    q = quadratic_reformulation_check(pm, [0.3, -4.0])
    assert q.lhs == 0.0 and abs(q.rhs) < 1e-12


def test_quadratic_check_randomised_and_singular():
    rng = stream(6, "qcheck")
    for _ in range(1000):
        d = random_distribution(rng, 4, 2)
        x = rng.normal(scale=2, size=2)
        q = quadratic_reformulation_check(d, x)
        assert q.applicable
        assert abs(q.lhs - q.rhs) <= 1e-10 * max(1.0, q.lhs)
    line = DiscreteDistribution([[0.0, 0.0], [1.0, 2.0], [3.0, 6.0]], [0.2, 0.5, 0.3])
    q = quadratic_reformulation_check(line, [0.5, -1.0])
    assert q.applicable and abs(q.lhs - q.rhs) <= 1e-10 * max(1.0, q.lhs)


def test_saddle_radius_zero(bern25):
    rep = saddle_check(bern25, 0.0)
    assert rep.gap == pytest.approx(0.0, abs=1e-15)
    assert rep.xhat_star[0] == pytest.approx(0.25, abs=1e-15)
    assert np.allclose(rep.nu_weights, bern25.weights)


def test_saddle_bernoulli_quarter_admissible(bern25):
    r, lam, x = _admissible_radius(bern25, 0.5)
    rep = saddle_check(bern25, r)
    assert rep.admissible
    assert -1e-8 <= rep.gap <= 1e-6
    assert rep.self_consistent
    assert rep.xhat_star[0] == pytest.approx(x[0], abs=1e-6)
    assert rep.lambda_mv == pytest.approx(lam, rel=1e-6)


def test_saddle_invariants_and_equilibrium():
    rng = stream(13, "saddle")
    for _ in range(10):
        d = random_distribution(rng, int(rng.integers(2, 7)), 1)
        r, lam, x = _admissible_radius(d, float(rng.uniform(0.1, 0.95)))
        rep = saddle_check(d, r)
        assert rep.gap >= -1e-8
        assert rep.divergence <= r * r + 1e-8
        nu = rep.nu_weights
        mean_nu = nu @ d.atoms[:, 0]
        assert rep.minimax == pytest.approx(nu @ (d.atoms[:, 0] - mean_nu) ** 2, abs=1e-6)
        recovered = population_estimator(moments_from_discrete(d), rep.lambda_mv).estimate
        assert recovered[0] == pytest.approx(rep.xhat_star[0], abs=1e-6)


def test_saddle_far_outside_regime_is_flagged():
    d = DiscreteDistribution([0.0, 1.0, 3.0], [0.5, 0.3, 0.2])
    rep = saddle_check(d, 5.0)
    assert not rep.admissible
    assert rep.note
    assert rep.gap >= -1e-8
    json.dumps(rep.to_dict(), allow_nan=True)


def test_saddle_two_dimensional():
    rng = stream(14, "saddle-2d")
    d = random_distribution(rng, 5, 2)
    r, _, x = _admissible_radius(d, 0.5)
    rep = saddle_check(d, r)
    assert abs(rep.gap) <= 1e-6
    assert np.allclose(rep.xhat_star, x, atol=1e-6)
