"""Totient sums, coprime-pair counts and log-log growth exponents."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = [
    "GrowthSeries",
    "totient_table",
    "mobius_table",
    "totient_sum",
    "coprime_count",
    "coprime_count_series",
    "exponent_fit",
    "geodesic_count",
    "top_decade",
]


def totient_table(n: int) -> np.ndarray:
    """``phi(k)`` for ``k = 0..n`` by a prime sieve (``phi(0) = 0``)."""
    phi = np.arange(n + 1, dtype=np.int64)
    for p in range(2, n + 1):
        if phi[p] == p:  # p is prime
            phi[p::p] -= phi[p::p] // p
    return phi


def mobius_table(n: int) -> np.ndarray:
    mu = np.ones(n + 1, dtype=np.int64)
    mu[0] = 0
    is_prime = np.ones(n + 1, dtype=bool)
    is_prime[:2] = False
    for p in range(2, n + 1):
        if is_prime[p]:
            is_prime[2 * p::p] = False
            mu[p::p] *= -1
            mu[p * p::p * p] = 0
    return mu


def totient_sum(t: int) -> int:
    """``sum_{n <= t} phi(n)``, exact."""
    t = int(t)
    if t < 1:
        raise ValueError("t must be a positive integer")
    return int(totient_table(t)[1:].sum())


def _per_q_counts(a, b, t: int) -> np.ndarray:
    """``counts[q]`` = number of ``p`` coprime to ``q`` with ``a q < p < b q``."""
    a, b = Fraction(a), Fraction(b)
    if not a < b:
        raise ValueError("need a < b")
    mu = mobius_table(t)
    squarefree = np.flatnonzero(mu)
    counts = np.zeros(t + 1, dtype=np.int64)
    for q in range(1, t + 1):
        lo = math.floor(a * q) + 1
        hi = math.ceil(b * q) - 1
        if hi < lo:
            continue
        total = 0
        # inclusion-exclusion over squarefree divisors of q
        for d in squarefree[squarefree <= q]:
            if q % d == 0:
                total += int(mu[d]) * (hi // d - (lo - 1) // d)
        counts[q] = total
    return counts


def coprime_count(a, b, t: int) -> int:
    """Number of coprime ``(p, q)`` with ``p/q`` in ``(a, b)`` and ``1 <= q <= t``."""
    return int(_per_q_counts(a, b, int(t)).sum())


def coprime_count_series(a, b, t_values) -> np.ndarray:
    t_values = np.asarray(t_values, dtype=np.int64)
    cum = np.cumsum(_per_q_counts(a, b, int(t_values.max())))
    return cum[t_values]


def exponent_fit(t, counts=None, window=None) -> tuple[float, float]:
    """Least-squares slope of ``log(count)`` against ``log(t)``.

    Accepts a :class:`GrowthSeries` or two arrays.  Returns the slope and
    the RMS residual of the fit in log space.
    """
    if isinstance(t, GrowthSeries):
        t, counts = t.t, t.count
    t = np.asarray(t, dtype=float)
    counts = np.asarray(counts, dtype=float)
    mask = counts > 0
    if window is not None:
        mask &= (t >= window[0]) & (t <= window[1])
    if mask.sum() < 5:
        raise ValueError("exponent fit needs at least 5 points with positive count in the window")
    x, y = np.log(t[mask]), np.log(counts[mask])
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return float(coef[0]), float(np.sqrt(np.mean(resid ** 2)))


def top_decade(t, counts) -> tuple[float, float]:
    t = np.asarray(t, dtype=float)
    pos = t[np.asarray(counts) > 0]
    if pos.size == 0:
        raise ValueError("no positive counts")
    hi = float(pos.max())
    return hi / 10.0, hi


@dataclass
class GrowthSeries:
    t: np.ndarray
    count: np.ndarray
    window: tuple[float, float]
    exponent: float
    residual: float

    def __post_init__(self):
        c = np.asarray(self.count)
        if np.any(c < 0) or np.any(np.diff(c) < 0):
            raise ValueError("counts must be nonnegative and nondecreasing")

    @classmethod
    def from_counts(cls, t, count, window=None) -> "GrowthSeries":
        t = np.asarray(t, dtype=float)
        count = np.asarray(count, dtype=np.int64)
        window = tuple(window) if window is not None else top_decade(t, count)
        slope, resid = exponent_fit(t, count, window)
        return cls(t, count, window, slope, resid)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "count"])
            for ti, ci in zip(self.t, self.count):
                w.writerow([repr(float(ti)), int(ci)])

    def summary(self) -> dict:
        return {
            "window": [float(self.window[0]), float(self.window[1])],
            "exponent": self.exponent,
            "residual": self.residual,
            "n_points": int(len(self.t)),
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=1)


def geodesic_count(catalog, t_values=None, window=None) -> GrowthSeries:
    """``N(t)`` = number of cataloged closed geodesics of length at most ``t``.

    A catalog truncated at ``q_max`` misses only orbits longer than
    ``(q_max + 1) * M``, because every return time is at least the meridian
    length ``M``.  By default ``t`` is sampled geometrically over the top
    decade below that completeness limit and the fit uses the same decade.
    """
    lengths = np.sort(np.array([r.length for r in catalog.records]))
    if t_values is None:
        floor = catalog.meridian_length or min(r.tau for r in catalog.records)
        t_hi = (catalog.q_max + 1) * float(floor)
        t_values = np.geomspace(t_hi / 10, t_hi, 25)[:-1]
        t_values = np.append(t_values, np.nextafter(t_hi, 0))
    t_values = np.asarray(t_values, dtype=float)
    counts = np.searchsorted(lengths, t_values, side="right")
    return GrowthSeries.from_counts(t_values, counts, window)
