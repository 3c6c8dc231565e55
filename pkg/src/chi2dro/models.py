"""Scalar generative models with exact raw moments.

Each model samples with a caller-supplied generator and reports
``E X^k`` for ``k = 1..4`` in closed form.  ``model_from_dict`` reads the
tagged JSON form ``{"type": "bernoulli", "p": 0.5}``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .moments import MomentSet, analytic_mixture_moments, mixture_raw_moments, moments_from_raw


class _Model:
    kind = ""

    def raw_moments(self) -> tuple[float, float, float, float]:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        raise NotImplementedError

    def moment_set(self) -> MomentSet:
        return moments_from_raw(*self.raw_moments())

    @property
    def expected_value(self) -> float:
        return self.raw_moments()[0]

    def central(self) -> tuple[float, float, float]:
        """``(m2, m3, m4)``."""
        _, m2, m3, m4 = self.moment_set().scalar()
        return m2, m3, m4

    def kurtosis_gap(self) -> float:
        m2, _, m4 = self.central()
        return 3.0 * m2 * m2 - m4

    def to_dict(self) -> dict:
        return {"type": self.kind, **asdict(self)}


@dataclass(frozen=True)
class Gaussian(_Model):
    mean: float = 0.0
    sigma: float = 1.0
    kind = "gaussian"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def raw_moments(self):
        m, s2 = self.mean, self.sigma**2
        return m, m * m + s2, m**3 + 3 * m * s2, m**4 + 6 * m * m * s2 + 3 * s2 * s2

    def moment_set(self):
        # exact central moments, no cancellation
        s2 = self.sigma**2
        r = self.raw_moments()
        return MomentSet(mean=[r[0]], covariance=[[s2]], zeta_minus=[2.0 * (r[2] - r[1] * r[0])],
                         alpha=r[3] - r[1] ** 2, m2=[s2], m3=[0.0], m4=[3 * s2 * s2])

    def sample(self, rng, shape):
        return rng.normal(self.mean, self.sigma, shape)


@dataclass(frozen=True)
class Mixture(_Model):
    means: tuple = (0.0,)
    sigmas: tuple = (1.0,)
    props: tuple = (1.0,)
    kind = "mixture"

    def __post_init__(self):
        for name in ("means", "sigmas", "props"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        mixture_raw_moments(self.means, self.sigmas, self.props)  # validates

    def raw_moments(self):
        return mixture_raw_moments(self.means, self.sigmas, self.props)

    def moment_set(self):
        return analytic_mixture_moments(self.means, self.sigmas, self.props)

    def sample(self, rng, shape):
        comp = rng.choice(len(self.props), size=shape, p=np.asarray(self.props))
        z = rng.standard_normal(shape)
        return np.asarray(self.means)[comp] + np.asarray(self.sigmas)[comp] * z

    def to_dict(self):
        return {"type": self.kind, "means": list(self.means), "sigmas": list(self.sigmas), "props": list(self.props)}


@dataclass(frozen=True)
class Uniform(_Model):
    a: float = 0.0
    b: float = 1.0
    kind = "uniform"

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError("uniform needs a < b")

    def raw_moments(self):
        a, b = self.a, self.b
        return tuple((b ** (k + 1) - a ** (k + 1)) / ((k + 1) * (b - a)) for k in range(1, 5))

    def moment_set(self):
        w2 = (self.b - self.a) ** 2
        r = self.raw_moments()
        return MomentSet(mean=[r[0]], covariance=[[w2 / 12]], zeta_minus=[2.0 * (r[2] - r[1] * r[0])],
                         alpha=r[3] - r[1] ** 2, m2=[w2 / 12], m3=[0.0], m4=[w2 * w2 / 80])

    def sample(self, rng, shape):
        return rng.uniform(self.a, self.b, shape)


@dataclass(frozen=True)
class Bernoulli(_Model):
    p: float = 0.5
    kind = "bernoulli"

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")

    def raw_moments(self):
        return (self.p,) * 4

    def moment_set(self):
        p, q = self.p, 1.0 - self.p
        m2 = p * q
        return MomentSet(mean=[p], covariance=[[m2]], zeta_minus=[2.0 * (p - p * p)], alpha=p - p * p,
                         m2=[m2], m3=[m2 * (q - p)], m4=[m2 * (1.0 - 3.0 * m2)])

    def sample(self, rng, shape):
        return (rng.random(shape) < self.p).astype(float)


@dataclass(frozen=True)
class Exponential(_Model):
    rate: float = 1.0
    kind = "exponential"

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be positive")

    def raw_moments(self):
        return tuple(math.factorial(k) / self.rate**k for k in range(1, 5))

    def moment_set(self):
        s = 1.0 / self.rate
        r = self.raw_moments()
        return MomentSet(mean=[s], covariance=[[s * s]], zeta_minus=[2.0 * (r[2] - r[1] * r[0])],
                         alpha=r[3] - r[1] ** 2, m2=[s * s], m3=[2 * s**3], m4=[9 * s**4])

    def sample(self, rng, shape):
        return rng.exponential(1.0 / self.rate, shape)


@dataclass(frozen=True)
class PointMass(_Model):
    c: float = 0.0
    kind = "point"

    def raw_moments(self):
        return tuple(self.c**k for k in range(1, 5))

    def moment_set(self):
        c = self.c
        return MomentSet(mean=[c], covariance=[[0.0]], zeta_minus=[0.0], alpha=0.0, m2=[0.0], m3=[0.0], m4=[0.0])

    def sample(self, rng, shape):
        return np.full(shape, float(self.c))


Model = _Model

FIG1_MIXTURE = Mixture(means=(3.0, 0.1), sigmas=(0.5, 1.7), props=(0.3, 0.7))


def _need(obj: dict, *keys):
    missing = [k for k in keys if k not in obj]
    if missing:
        raise ValueError(f"model {obj.get('type')!r} missing field(s): {', '.join(missing)}")
    return [obj[k] for k in keys]


def model_from_dict(obj: dict) -> _Model:
    """Build a model from its tagged dictionary form."""
    if not isinstance(obj, dict):
        raise ValueError("model must be a JSON object")
    kind = obj.get("type")
    if kind == "gaussian":
        mean, sigma = _need(obj, "mean", "sigma")
        return Gaussian(float(mean), float(sigma))
    if kind == "mixture":
        means, sigmas, props = _need(obj, "means", "sigmas", "props")
        return Mixture(tuple(means), tuple(sigmas), tuple(props))
    if kind == "uniform":
        a, b = _need(obj, "a", "b")
        return Uniform(float(a), float(b))
    if kind == "bernoulli":
        (p,) = _need(obj, "p")
        return Bernoulli(float(p))
    if kind == "exponential":
        (rate,) = _need(obj, "rate")
        return Exponential(float(rate))
    if kind == "point":
        (c,) = _need(obj, "c")
        return PointMass(float(c))
    raise ValueError(f"unknown model type {kind!r}")


def sample_statistics(model: _Model, n: int, size: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Sample means and third central sample moments of ``size`` samples of length ``n``."""
    x = model.sample(rng, (size, n))
    xbar = x.mean(axis=1)
    t = ((x - xbar[:, None]) ** 3).mean(axis=1)
    return xbar, t


def trial_chunk(n: int) -> int:
    """Trials per random stream; shrinks for long samples to bound memory."""
    size = 1 << 15
    while size > 256 and size * n > 1 << 21:
        size >>= 1
    return size
