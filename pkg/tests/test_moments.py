from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chi2dro.moments import (
    DiscreteDistribution,
    MomentSet,
    SampleFormatError,
    analytic_mixture_moments,
    kurtosis_gap,
    mixture_raw_moments,
    moments_from_discrete,
    moments_from_raw,
    moments_from_sample,
    parse_sample_csv,
)
from chi2dro.rng import stream


def exact_central(atoms, weights, k):
    """Central moment with rational arithmetic."""
    a = [Fraction(x) for x in atoms]
    w = [Fraction(x) for x in weights]
    mu = sum(wi * ai for wi, ai in zip(w, a))
    return sum(wi * (ai - mu) ** k for wi, ai in zip(w, a))


def test_two_symmetric_atoms():
    m = moments_from_sample([0.0, 1.0])
    assert m.scalar() == (0.5, 0.25, 0.0, 0.0625)


def test_point_mass_sample():
    m = moments_from_sample([1.0, 1.0, 1.0])
    assert m.scalar() == (1.0, 0.0, 0.0, 0.0)
    assert m.covariance[0, 0] == 0.0


def test_quarter_sample_against_exact_rationals():
    data = [0, 0, 0, 1]
    m = moments_from_sample(data)
    w = [Fraction(1, 4)] * 4
    assert m.mean[0] == 0.25
    assert m.m2[0] == float(exact_central(data, w, 2)) == 0.1875
    assert m.m3[0] == float(exact_central(data, w, 3)) == 0.09375
    assert m.m4[0] == float(exact_central(data, w, 4)) == 0.08203125


def test_bernoulli_quarter_matches_closed_form():
    d = DiscreteDistribution([0.0, 1.0], [0.75, 0.25])
    m = moments_from_discrete(d)
    p = Fraction(1, 4)
    exact_m4 = p * (1 - p) ** 4 + (1 - p) * p**4
    assert m.m2[0] == 0.1875
    assert m.m4[0] == float(exact_m4) == 0.08203125


def test_discrete_equals_sample_for_uniform_weights():
    a = moments_from_discrete(DiscreteDistribution([0.0, 1.0], [0.5, 0.5]))
    b = moments_from_sample([0.0, 1.0])
    assert a.scalar() == b.scalar()
    assert kurtosis_gap(a) == pytest.approx(0.125, abs=1e-15)


def test_kurtosis_gap_gaussian_and_uniform():
    g = moments_from_raw(0.0, 1.0, 0.0, 3.0)
    assert kurtosis_gap(g) == 0.0
    u = moments_from_raw(1 / 2, 1 / 3, 1 / 4, 1 / 5)
    assert kurtosis_gap(u) == pytest.approx(1 / 120, rel=1e-12)
    # numeric integration oracle
    x = (np.arange(200_000) + 0.5) / 200_000
    c = x - x.mean()
    assert 3 * np.mean(c**2) ** 2 - np.mean(c**4) == pytest.approx(1 / 120, rel=1e-8)


def test_kurtosis_gap_rejects_vectors():
    m = moments_from_sample([[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(ValueError, match="scalar only"):
        kurtosis_gap(m)


def test_zeta_two_ways():
    rng = stream(3, "zeta")
    x = rng.exponential(size=50)
    m = moments_from_sample(x)
    r = [np.mean(x**k) for k in range(1, 5)]
    direct = 2 * (r[2] - r[1] * r[0])
    expanded = 2 * m.m3[0] + 4 * m.m2[0] * m.mean[0]
    assert m.zeta_minus[0] == pytest.approx(direct, rel=1e-10)
    assert m.zeta_minus[0] == pytest.approx(expanded, rel=1e-10)


def test_single_component_mixture():
    m = analytic_mixture_moments([2.0], [0.7], [1.0])
    assert m.scalar() == pytest.approx((2.0, 0.49, 0.0, 3 * 0.49**2), abs=1e-14)


def test_fig1_mixture_analytic():
    m = analytic_mixture_moments([3.0, 0.1], [0.5, 1.7], [0.3, 0.7])
    mean, m2, m3, m4 = m.scalar()
    assert mean == pytest.approx(0.97, abs=1e-14)
    assert m2 == pytest.approx(3.8641, rel=1e-12)
    assert m4 == pytest.approx(34.13289057, rel=1e-9)
    # reported caption values differ by a few percent
    assert abs(m2 / 3.826 - 1) < 0.02
    assert abs(m4 / 32.46 - 1) < 0.06


def test_mixture_against_sampling():
    rng = stream(11, "mixture-check")
    n = 1_000_000
    comp = rng.random(n) < 0.3
    x = np.where(comp, rng.normal(3.0, 0.5, n), rng.normal(0.1, 1.7, n))
    m = analytic_mixture_moments([3.0, 0.1], [0.5, 1.7], [0.3, 0.7])
    mean, m2, m3, m4 = m.scalar()
    c = x - mean
    for k, target in ((2, m2), (3, m3), (4, m4)):
        v = c**k
        se = v.std() / np.sqrt(n)
        assert abs(v.mean() - target) <= 3 * se
    assert abs(x.mean() - mean) <= 3 * x.std() / np.sqrt(n)


@pytest.mark.parametrize(
    "means, sigmas, props",
    [([0.0, 1.0], [1.0], [1.0]), ([0.0], [-1.0], [1.0]), ([0.0, 1.0], [1.0, 1.0], [0.6, 0.6]), ([], [], [])],
)
def test_mixture_validation(means, sigmas, props):
    with pytest.raises(ValueError):
        mixture_raw_moments(means, sigmas, props)


def test_empty_and_mismatched_samples():
    with pytest.raises(ValueError, match="empty sample"):
        moments_from_sample([])
    with pytest.raises(ValueError, match="dimension mismatch"):
        moments_from_sample([[0.0, 1.0], [1.0]])


def test_distribution_merges_duplicates_and_zero_weights():
    d = DiscreteDistribution([1.0, 0.0, 1.0, 5.0], [0.25, 0.5, 0.25, 0.0])
    assert d.atoms[:, 0].tolist() == [0.0, 1.0]
    assert d.weights.tolist() == [0.5, 0.5]


@pytest.mark.parametrize("weights", [[0.5, 0.6], [1.5, -0.5], [1.0]])
def test_distribution_rejects_bad_weights(weights):
    with pytest.raises(ValueError):
        DiscreteDistribution([0.0, 1.0], weights)


def test_distribution_json_round_trip():
    d = DiscreteDistribution([[0.0, 1.0], [2.0, 3.0]], [0.3, 0.7])
    back = DiscreteDistribution.from_dict(d.to_dict())
    assert np.array_equal(back.atoms, d.atoms) and np.array_equal(back.weights, d.weights)
    with pytest.raises(ValueError, match="missing key"):
        DiscreteDistribution.from_dict({"atoms": [0]})


def test_asymmetric_covariance_rejected():
    with pytest.raises(ValueError, match="symmetric"):
        MomentSet([0, 0], [[1, 0.5], [0.2, 1]], [0, 0], 0.0, [1, 1], [0, 0], [3, 3])


def test_csv_header_and_blank_lines():
    arr = parse_sample_csv("x,y\n1,2\n\n3,4\n")
    assert arr.tolist() == [[1.0, 2.0], [3.0, 4.0]]
    assert parse_sample_csv("1\n2\n").shape == (2, 1)


def test_csv_errors_carry_line_numbers():
    with pytest.raises(SampleFormatError) as err:
        parse_sample_csv("1\n2\nfoo\n")
    assert err.value.line == 3
    with pytest.raises(SampleFormatError) as err:
        parse_sample_csv("1,2\n3\n")
    assert err.value.line == 2
    with pytest.raises(SampleFormatError, match="empty"):
        parse_sample_csv("\n\n")


samples = st.lists(st.floats(-50, 50, allow_nan=False), min_size=2, max_size=30)


@settings(max_examples=60, deadline=None)
@given(samples, st.floats(-100, 100))
def test_shift_covariance(xs, c):
    a = moments_from_sample(xs)
    b = moments_from_sample([x + c for x in xs])
    assert b.mean[0] == pytest.approx(a.mean[0] + c, abs=1e-9 * (1 + abs(c)))
    scale = max(1.0, float(np.max(np.abs(xs))) + abs(c))
    for k, name in ((2, "m2"), (3, "m3"), (4, "m4")):
        assert getattr(b, name)[0] == pytest.approx(getattr(a, name)[0], rel=1e-10, abs=1e-9 * scale**k)


@settings(max_examples=60, deadline=None)
@given(samples, st.floats(0.01, 20))
def test_scale_law(xs, s):
    a = moments_from_sample(xs)
    b = moments_from_sample([s * x for x in xs])
    scale = max(1.0, float(np.max(np.abs(xs))))
    for k, name in ((2, "m2"), (3, "m3"), (4, "m4")):
        assert getattr(b, name)[0] == pytest.approx(s**k * getattr(a, name)[0], rel=1e-9, abs=1e-12 * (s * scale) ** k)
    assert kurtosis_gap(b) == pytest.approx(s**4 * kurtosis_gap(a), rel=1e-8, abs=1e-10 * (s * scale) ** 4)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(st.floats(-10, 10, allow_nan=False), min_size=2, max_size=2), min_size=1, max_size=12))
def test_representation_equivalence(rows):
    a = moments_from_sample(rows)
    x = np.asarray(rows)
    uniq, counts = np.unique(x, axis=0, return_counts=True)
    b = moments_from_discrete(DiscreteDistribution(uniq, counts / counts.sum()))
    for name in ("mean", "covariance", "zeta_minus", "m2", "m3", "m4"):
        assert np.allclose(getattr(a, name), getattr(b, name), rtol=1e-12, atol=1e-10)
    assert a.alpha == pytest.approx(b.alpha, rel=1e-12, abs=1e-9)
    assert np.all(a.m4 >= a.m2**2 - 1e-9)
