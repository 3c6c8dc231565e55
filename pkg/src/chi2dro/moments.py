"""Population and sample moments consumed by the closed-form estimators.

All moments are plug-in moments of the underlying measure: sample moments
divide by ``n``, never ``n - 1``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

# eigenvalues below this fraction of the spectral norm count as zero
RANK_TOL = 1e-10


class SampleFormatError(ValueError):
    """Raised when sample text cannot be parsed; carries the 1-based line."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


def _as_matrix(data) -> np.ndarray:
    """Coerce scalars / d-vectors into an ``(n, d)`` float array."""
    if isinstance(data, np.ndarray):
        arr = data.astype(float, copy=False)
    else:
        rows = list(data)
        if not rows:
            raise ValueError("empty sample")
        lens = {np.ndim(r) for r in rows}
        if lens == {0}:
            arr = np.asarray(rows, dtype=float)
        else:
            dims = {len(np.atleast_1d(r)) for r in rows}
            if len(dims) != 1:
                raise ValueError(f"dimension mismatch in sample: {sorted(dims)}")
            arr = np.asarray([np.atleast_1d(r) for r in rows], dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError("sample must be a list of scalars or d-vectors")
    if arr.shape[0] == 0:
        raise ValueError("empty sample")
    return arr


@dataclass(frozen=True)
class MomentSet:
    """Moments needed by the closed forms.

    ``zeta_minus`` is ``2(E[|X|^2 X] - E|X|^2 E X)`` and ``alpha`` is
    ``E(|X|^2 - E|X|^2)^2``. ``m2``, ``m3`` and ``m4`` are the central
    moments of each coordinate.
    """

    mean: np.ndarray
    covariance: np.ndarray
    zeta_minus: np.ndarray
    alpha: float
    m2: np.ndarray
    m3: np.ndarray
    m4: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        d = mean.shape[0]
        cov = np.asarray(self.covariance, dtype=float).reshape(d, d)
        scale = max(1.0, float(np.max(np.abs(cov))) if cov.size else 1.0)
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * scale):
            raise ValueError("covariance is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", 0.5 * (cov + cov.T))
        object.__setattr__(self, "zeta_minus", np.atleast_1d(np.asarray(self.zeta_minus, dtype=float)))
        object.__setattr__(self, "alpha", float(self.alpha))
        for name in ("m2", "m3", "m4"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        object.__setattr__(self, "dim", d)

    @property
    def mmse(self) -> float:
        """E|X - E X|^2, the trace of the covariance."""
        return float(np.trace(self.covariance))

    @property
    def second_moment(self) -> float:
        """E|X|^2."""
        return self.mmse + float(self.mean @ self.mean)

    def scalar(self) -> tuple[float, float, float, float]:
        """``(mean, m2, m3, m4)`` for a scalar law."""
        if self.dim != 1:
            raise ValueError("scalar only")
        return float(self.mean[0]), float(self.m2[0]), float(self.m3[0]), float(self.m4[0])

    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenpairs of the covariance with sub-tolerance eigenvalues zeroed."""
        vals, vecs = np.linalg.eigh(self.covariance)
        norm = float(np.max(np.abs(vals))) if vals.size else 0.0
        vals = np.where(vals <= RANK_TOL * norm, 0.0, vals)
        return vals, vecs


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finite-support probability measure.

    Duplicate atoms are merged with summed weights and zero-weight atoms are
    dropped, so every atom carries positive mass.
    """

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = _as_matrix(self.atoms)
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.shape[0] != atoms.shape[0]:
            raise ValueError("atoms and weights differ in length")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        uniq, inv = np.unique(atoms, axis=0, return_inverse=True)
        merged = np.zeros(uniq.shape[0])
        np.add.at(merged, inv.ravel(), w)
        keep = merged > 0
        object.__setattr__(self, "atoms", uniq[keep])
        object.__setattr__(self, "weights", merged[keep])

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    @property
    def size(self) -> int:
        return self.atoms.shape[0]

    @classmethod
    def uniform(cls, data) -> "DiscreteDistribution":
        """Empirical measure of a sample."""
        x = _as_matrix(data)
        return cls(x, np.full(x.shape[0], 1.0 / x.shape[0]))

    def expect(self, values: np.ndarray) -> np.ndarray:
        """Weighted expectation of per-atom values (leading axis = atoms)."""
        return np.tensordot(self.weights, values, axes=(0, 0))

    def to_dict(self) -> dict:
        return {"atoms": self.atoms.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, obj: dict) -> "DiscreteDistribution":
        try:
            return cls(obj["atoms"], obj["weights"])
        except KeyError as exc:
            raise ValueError(f"distribution JSON missing key {exc}") from None

    @classmethod
    def from_json(cls, text: str) -> "DiscreteDistribution":
        return cls.from_dict(json.loads(text))


def _weighted_moments(x: np.ndarray, w: np.ndarray) -> MomentSet:
    mean = w @ x
    y = x - mean
    cov = (y * w[:, None]).T @ y
    sq = np.einsum("ij,ij->i", x, x)
    esq = float(w @ sq)
    zeta = 2.0 * ((w * sq) @ x - esq * mean)
    alpha = float(w @ (sq - esq) ** 2)
    return MomentSet(
        mean=mean,
        covariance=cov,
        zeta_minus=zeta,
        alpha=alpha,
        m2=w @ y**2,
        m3=w @ y**3,
        m4=w @ y**4,
    )


def moments_from_sample(data) -> MomentSet:
    """Plug-in moments of the empirical measure of ``data``."""
    x = _as_matrix(data)
    return _weighted_moments(x, np.full(x.shape[0], 1.0 / x.shape[0]))


def moments_from_discrete(dist: DiscreteDistribution) -> MomentSet:
    return _weighted_moments(dist.atoms, dist.weights)


def moments_from_raw(r1: float, r2: float, r3: float, r4: float) -> MomentSet:
    """Scalar MomentSet from raw moments ``E X^k``, k = 1..4."""
    m2 = r2 - r1**2
    m3 = r3 - 3 * r1 * r2 + 2 * r1**3
    m4 = r4 - 4 * r1 * r3 + 6 * r1**2 * r2 - 3 * r1**4
    return MomentSet(
        mean=[r1],
        covariance=[[m2]],
        zeta_minus=[2.0 * (r3 - r2 * r1)],
        alpha=r4 - r2**2,
        m2=[m2],
        m3=[m3],
        m4=[m4],
    )


def kurtosis_gap(m: MomentSet) -> float:
    """``3 m2^2 - m4``; positive exactly for platykurtic laws."""
    if m.dim != 1:
        raise ValueError("scalar only")
    _, m2, _, m4 = m.scalar()
    return 3.0 * m2**2 - m4


def mixture_raw_moments(means: Sequence[float], sigmas: Sequence[float], props: Sequence[float]) -> tuple[float, float, float, float]:
    """Raw moments ``E X^k`` (k=1..4) of a scalar Gaussian mixture."""
    mu = np.asarray(means, dtype=float)
    s = np.asarray(sigmas, dtype=float)
    p = np.asarray(props, dtype=float)
    if not (mu.shape == s.shape == p.shape) or mu.ndim != 1 or mu.size == 0:
        raise ValueError("means, sigmas and props must be equal-length lists")
    if np.any(s <= 0):
        raise ValueError("sigmas must be positive")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ValueError("mixing proportions must be nonnegative and sum to 1")
    s2 = s**2
    r1 = p @ mu
    r2 = p @ (mu**2 + s2)
    r3 = p @ (mu**3 + 3 * mu * s2)
    r4 = p @ (mu**4 + 6 * mu**2 * s2 + 3 * s2**2)
    return float(r1), float(r2), float(r3), float(r4)


def analytic_mixture_moments(means: Sequence[float], sigmas: Sequence[float], props: Sequence[float]) -> MomentSet:
    """Exact moments of a scalar Gaussian mixture.

    Central moments are assembled per component from the offsets
    ``delta_i = mean_i - mean`` rather than from raw moments, which keeps
    them free of cancellation.
    """
    r = mixture_raw_moments(means, sigmas, props)
    mu = np.asarray(means, dtype=float)
    s2 = np.asarray(sigmas, dtype=float) ** 2
    p = np.asarray(props, dtype=float)
    delta = mu - r[0]
    m2 = p @ (s2 + delta**2)
    m3 = p @ (3 * s2 * delta + delta**3)
    m4 = p @ (3 * s2**2 + 6 * s2 * delta**2 + delta**4)
    return MomentSet(
        mean=[r[0]],
        covariance=[[m2]],
        zeta_minus=[2.0 * (r[2] - r[1] * r[0])],
        alpha=r[3] - r[1] ** 2,
        m2=[m2],
        m3=[m3],
        m4=[m4],
    )


def _is_number(tok: str) -> bool:
    try:
        v = float(tok)
    except ValueError:
        return False
    return math.isfinite(v)


def parse_sample_csv(text: str) -> np.ndarray:
    """Parse CSV text into an ``(n, d)`` array.

    A first row containing any non-numeric cell is treated as a header.
    Blank lines are skipped.
    """
    rows: list[tuple[int, list[str]]] = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        cells = [c.strip() for c in row]
        if not any(cells):
            continue
        rows.append((lineno, cells))
    if rows and not all(_is_number(c) for c in rows[0][1]):
        rows = rows[1:]
    if not rows:
        raise SampleFormatError("empty sample")
    width = len(rows[0][1])
    out = []
    for lineno, cells in rows:
        if len(cells) != width:
            raise SampleFormatError(f"expected {width} columns, got {len(cells)}", lineno)
        bad = [c for c in cells if not _is_number(c)]
        if bad:
            raise SampleFormatError(f"non-numeric value {bad[0]!r}", lineno)
        out.append([float(c) for c in cells])
    return np.asarray(out, dtype=float)


def read_sample_csv(path: str | Path) -> np.ndarray:
    return parse_sample_csv(Path(path).read_text())


def read_distribution_json(path: str | Path) -> DiscreteDistribution:
    return DiscreteDistribution.from_json(Path(path).read_text())
