"""Area-preserving twist maps of the annulus and their periodic orbits.

The maps act on the universal cover ``(x, eta)``, ``x`` real and
``eta`` in ``(-1, 1)``, by

    eta' = eta + eps * g(x)
    x'   = x + f(eta')

which has unit Jacobian determinant for any ``f`` and ``g``.  With
``eps = 0`` this is the integrable twist ``(x, eta) -> (x + f(eta), eta)``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .counting_growth import GrowthSeries
from .orbit_catalog import enumerate_coprime

__all__ = [
    "AnnulusError",
    "AnnulusMapSpec",
    "PeriodicOrbit",
    "RotationEstimate",
    "OrbitCount",
    "TWISTS",
    "PERTURBATIONS",
    "make_map",
    "iterate_lift",
    "jacobian",
    "rotation_number",
    "find_periodic",
    "count_orbits",
]

ETA_GUARD = 1.0 - 1e-12
NEWTON_TOL = 1e-10
FAMILY_MIN_SEEDS = 8


class AnnulusError(RuntimeError):
    """Raised when an orbit leaves the open annulus."""


def _tan_twist(L):
    f = lambda eta: -L * np.tan(0.5 * np.pi * eta)  # noqa: E731
    df = lambda eta: -L * 0.5 * np.pi / np.cos(0.5 * np.pi * eta) ** 2  # noqa: E731
    return f, df


def _atanh_twist(L):
    f = lambda eta: -L * np.arctanh(eta)  # noqa: E731
    df = lambda eta: -L / (1.0 - eta * eta)  # noqa: E731
    return f, df


def _sin_perturbation(L):
    k = 2 * np.pi / L
    return (lambda x: np.sin(k * x)), (lambda x: k * np.cos(k * x))


def _zero_perturbation(L):
    return (lambda x: np.zeros_like(x)), (lambda x: np.zeros_like(x))


TWISTS = {"tan": _tan_twist, "atanh": _atanh_twist}
PERTURBATIONS = {"sin": _sin_perturbation, "zero": _zero_perturbation}


@dataclass(frozen=True)
class AnnulusMapSpec:
    """Twist map built from named profiles.

    ``twist`` names a decreasing ``f`` onto the reals (``"tan"`` is
    ``-L tan(pi eta / 2)``) and ``perturbation`` a zero-mean ``g`` on the
    circle of length ``L`` (``"sin"`` is ``sin(2 pi x / L)``).
    """

    L: float = 1.0
    twist: str = "tan"
    perturbation: str = "sin"
    epsilon: float = 0.0

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError("L must be positive")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.twist not in TWISTS:
            raise ValueError(f"unknown twist {self.twist!r}")
        if self.perturbation not in PERTURBATIONS:
            raise ValueError(f"unknown perturbation {self.perturbation!r}")

    @property
    def f(self) -> Callable:
        return TWISTS[self.twist](self.L)[0]

    @property
    def df(self) -> Callable:
        return TWISTS[self.twist](self.L)[1]

    @property
    def g(self) -> Callable:
        return PERTURBATIONS[self.perturbation](self.L)[0]

    @property
    def dg(self) -> Callable:
        return PERTURBATIONS[self.perturbation](self.L)[1]

    @property
    def integrable(self) -> bool:
        return self.epsilon == 0.0 or self.perturbation == "zero"

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump({"L": self.L, "twist": self.twist, "perturbation": self.perturbation,
                       "epsilon": self.epsilon}, fh, indent=1)

    @classmethod
    def from_json(cls, path) -> "AnnulusMapSpec":
        with open(path) as fh:
            return cls(**json.load(fh))


def make_map(epsilon_over_L: float = 0.0, L: float = 1.0, twist: str = "tan",
             perturbation: str = "sin") -> AnnulusMapSpec:
    return AnnulusMapSpec(L=L, twist=twist, perturbation=perturbation, epsilon=epsilon_over_L * L)


def _step(spec: AnnulusMapSpec, x, eta):
    eta1 = eta + spec.epsilon * spec.g(x) if spec.epsilon else eta
    if np.any(np.abs(eta1) >= ETA_GUARD):
        raise AnnulusError("orbit left the annulus (|eta| -> 1)")
    return x + spec.f(eta1), eta1


def iterate_lift(spec: AnnulusMapSpec, z, n: int) -> np.ndarray:
    """``n`` iterates of the lift from ``z = (x, eta)``; returns shape ``(n + 1, 2)``."""
    x, eta = float(z[0]), float(z[1])
    out = np.empty((n + 1, 2))
    out[0] = x, eta
    for k in range(1, n + 1):
        x, eta = _step(spec, x, eta)
        out[k] = x, eta
    return out


def jacobian(spec: AnnulusMapSpec, x, eta) -> np.ndarray:
    """Analytic derivative of one step; shape ``(..., 2, 2)`` in ``(x, eta)`` order."""
    x = np.asarray(x, dtype=float)
    eta = np.asarray(eta, dtype=float)
    eg = spec.epsilon * spec.dg(x)
    eta1 = eta + spec.epsilon * spec.g(x)
    fp = spec.df(eta1)
    J = np.empty(x.shape + (2, 2))
    J[..., 0, 0] = 1.0 + fp * eg
    J[..., 0, 1] = fp
    J[..., 1, 0] = eg
    J[..., 1, 1] = 1.0
    return J


@dataclass(frozen=True)
class RotationEstimate:
    value: float
    error: float
    converged: bool


def rotation_number(spec: AnnulusMapSpec, z, n: int = 10_000, threshold: float = 1e-3) -> RotationEstimate:
    """Birkhoff average ``(x_n - x_0) / (n L)``.

    The error bar is the difference of the averages over the two halves of
    the orbit.
    """
    orbit = iterate_lift(spec, z, n)
    x = orbit[:, 0]
    h = n // 2
    first = (x[h] - x[0]) / (h * spec.L)
    second = (x[n] - x[h]) / ((n - h) * spec.L)
    value = (x[n] - x[0]) / (n * spec.L)
    err = abs(first - second)
    return RotationEstimate(float(value), float(err), bool(err <= threshold))


@dataclass(frozen=True)
class PeriodicOrbit:
    x: float
    eta: float
    p: int
    q: int
    residual: float
    family: bool = False

    @property
    def point(self) -> tuple[float, float]:
        return (self.x, self.eta)


def _residual_and_jacobian(spec: AnnulusMapSpec, x, eta, p: int, q: int):
    """Vectorised ``F^q(z) - z - (pL, 0)`` and its Jacobian."""
    x0, e0 = x.copy(), eta.copy()
    J = np.broadcast_to(np.eye(2), x.shape + (2, 2)).copy()
    ok = np.ones(x.shape, dtype=bool)
    for _ in range(q):
        Jk = jacobian(spec, x, eta)
        J = Jk @ J
        eta1 = eta + spec.epsilon * spec.g(x) if spec.epsilon else eta
        bad = np.abs(eta1) >= ETA_GUARD
        ok &= ~bad
        eta1 = np.where(bad, 0.0, eta1)
        x = x + spec.f(eta1)
        eta = eta1
    R = np.stack([x - x0 - p * spec.L, eta - e0], axis=-1)
    return R, J - np.eye(2), ok


def _newton(spec: AnnulusMapSpec, x, eta, p: int, q: int, iters: int = 60, tol: float = NEWTON_TOL):
    """Damped Gauss-Newton with Levenberg regularisation, vectorised over seeds."""
    x, eta = np.array(x, dtype=float), np.array(eta, dtype=float)
    alive = np.ones(x.shape, dtype=bool)
    R, J, ok = _residual_and_jacobian(spec, x, eta, p, q)
    alive &= ok
    norm = np.where(alive, np.linalg.norm(R, axis=-1), np.inf)
    for _ in range(iters):
        active = alive & (norm > tol)
        if not active.any():
            break
        JT = np.swapaxes(J, -1, -2)
        A = JT @ J
        mu = 1e-12 * (np.trace(A, axis1=-2, axis2=-1) + 1.0)
        A = A + mu[..., None, None] * np.eye(2)
        step = -np.linalg.solve(A, (JT @ R[..., None]))[..., 0]
        lam = np.ones(x.shape)
        improved = np.zeros(x.shape, dtype=bool)
        xn, en, Rn, Jn, nn = x.copy(), eta.copy(), R.copy(), J.copy(), norm.copy()
        for _ in range(12):
            todo = active & ~improved
            if not todo.any():
                break
            xt = np.where(todo, x + lam * step[..., 0], x)
            et = np.clip(np.where(todo, eta + lam * step[..., 1], eta), -ETA_GUARD + 1e-15, ETA_GUARD - 1e-15)
            Rt, Jt, okt = _residual_and_jacobian(spec, xt, et, p, q)
            nt = np.where(okt, np.linalg.norm(Rt, axis=-1), np.inf)
            better = todo & (nt < norm)
            xn = np.where(better, xt, xn)
            en = np.where(better, et, en)
            Rn = np.where(better[..., None], Rt, Rn)
            Jn = np.where(better[..., None, None], Jt, Jn)
            nn = np.where(better, nt, nn)
            improved |= better
            lam = np.where(todo & ~better, 0.5 * lam, lam)
        alive &= improved | ~active
        x, eta, R, J, norm = xn, en, Rn, Jn, nn
    return x, eta, norm, alive


def _orbit_points(spec: AnnulusMapSpec, x: float, eta: float, q: int) -> np.ndarray:
    pts = iterate_lift(spec, (x, eta), q - 1)
    pts[:, 0] = np.mod(pts[:, 0], spec.L)
    return pts


def _circle_gap(a, b, L):
    d = np.mod(a - b, L)
    return np.minimum(d, L - d)


def _is_minimal(spec: AnnulusMapSpec, x: float, eta: float, q: int, tol: float = 1e-9) -> bool:
    orbit = iterate_lift(spec, (x, eta), q)
    for d in range(1, q):
        if q % d:
            continue
        if _circle_gap(orbit[d, 0], x, spec.L) < tol and abs(orbit[d, 1] - eta) < tol:
            return False
    return True


def _integrable_eta(spec: AnnulusMapSpec, p: int, q: int) -> float:
    target = spec.L * p / q
    g = lambda e: float(spec.f(e)) - target  # noqa: E731
    lo, hi = -0.5, 0.5
    while g(lo) < 0:
        lo = -1 + (1 + lo) * 0.1
        if lo <= -ETA_GUARD:
            raise AnnulusError("twist does not reach the target rotation")
    while g(hi) > 0:
        hi = 1 - (1 - hi) * 0.1
        if hi >= ETA_GUARD:
            raise AnnulusError("twist does not reach the target rotation")
    return brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


def default_seeds(spec: AnnulusMapSpec, n: int = 64, eta_max: float = 0.95) -> np.ndarray:
    xs = (np.arange(n) + 0.5) * spec.L / n
    es = np.linspace(-eta_max, eta_max, n)
    X, E = np.meshgrid(xs, es)
    return np.column_stack([X.ravel(), E.ravel()])


def find_periodic(
    spec: AnnulusMapSpec,
    p: int,
    q: int,
    seeds=None,
    *,
    tol: float = NEWTON_TOL,
    shortcut: bool = True,
    dedup_tol: float = 1e-7,
) -> list[PeriodicOrbit]:
    """Periodic orbits with ``F^q(z) = z + (pL, 0)``, one entry per orbit.

    For an integrable map with ``shortcut=True`` the invariant circle
    ``f(eta) = pL/q`` is found by a 1-d root solve and returned as a single
    family.  Otherwise a damped Newton solve runs from every seed; if at
    least eight seeds land on one ``eta`` with ``x`` spread around the
    circle the solutions are reported once as a family.  The same happens
    when eight or more distinct orbits survive deduplication, which only
    occurs for high-period resonances too thin to resolve.
    """
    if q < 1 or math.gcd(abs(p), q) != 1:
        raise ValueError(f"({p}, {q}) is not a coprime pair")
    L = spec.L
    if spec.integrable and shortcut:
        eta = _integrable_eta(spec, p, q)
        # F^q(x, eta) = (x + q f(eta), eta) on the invariant circle
        residual = abs(q * float(spec.f(eta)) - p * L)
        return [PeriodicOrbit(0.0, eta, p, q, residual, family=True)]

    seeds = default_seeds(spec) if seeds is None else np.atleast_2d(np.asarray(seeds, dtype=float))
    x, eta, norm, alive = _newton(spec, seeds[:, 0], seeds[:, 1], p, q, tol=tol)
    good = alive & (norm <= tol)
    xs, es, rs = x[good], eta[good], norm[good]
    if xs.size == 0:
        return []

    if xs.size >= FAMILY_MIN_SEEDS and np.ptp(es) < 1e-8:
        xm = np.unique(np.round(np.mod(xs, L) / L, 6)) * L
        gaps = np.diff(np.append(xm, xm[0] + L))
        # a circle of fixed points, not a few isolated orbits on one level
        if xm.size >= FAMILY_MIN_SEEDS and gaps.max() < 0.25 * L:
            i = int(np.argmin(rs))
            return [PeriodicOrbit(float(np.mod(xs[i], L)), float(es[i]), p, q, float(rs[i]), family=True)]

    # a Newton solution is only located to about tol / sigma_min of the
    # residual Jacobian, which is large near degenerate orbits
    _, Jr, _ = _residual_and_jacobian(spec, xs, es, p, q)
    smin = np.linalg.svd(Jr, compute_uv=False)[:, -1]
    radius = np.clip(10.0 * tol / np.maximum(smin, 1e-300), dedup_tol, 1e-2 * L)

    orbits: list[PeriodicOrbit] = []
    known: list[np.ndarray] = []
    for i in np.argsort(rs, kind="stable"):
        xi, ei = float(np.mod(xs[i], L)), float(es[i])
        if any(np.min(_circle_gap(pts[:, 0], xi, L) + np.abs(pts[:, 1] - ei)) < radius[i] for pts in known):
            continue
        if not _is_minimal(spec, xi, ei, q):
            continue
        pts = _orbit_points(spec, xi, ei, q)
        known.append(pts)
        # canonical representative: orbit point with the smallest x mod L,
        # re-polished there since iterating amplifies the residual
        j = int(np.argmin(pts[:, 0]))
        xc, ec, rc, ok = _newton(spec, pts[j:j + 1, 0], pts[j:j + 1, 1], p, q, tol=tol)
        if ok[0] and rc[0] <= tol:
            orbits.append(PeriodicOrbit(float(np.mod(xc[0], L)), float(ec[0]), p, q, float(rc[0])))
        else:
            orbits.append(PeriodicOrbit(xi, ei, p, q, float(rs[i])))
    if len(orbits) >= FAMILY_MIN_SEEDS:
        # resonance zone thinner than the solver can resolve: a near-circle of
        # approximate periodic points, counted once like a family
        best = min(orbits, key=lambda o: o.residual)
        return [PeriodicOrbit(best.x, best.eta, p, q, best.residual, family=True)]
    return orbits


def _pair_seeds(spec: AnnulusMapSpec, p: int, q: int, nx: int = 16, spread: float = 0.02) -> np.ndarray:
    """Seeds around the invariant circle of the unperturbed twist."""
    base = AnnulusMapSpec(spec.L, spec.twist, "zero", 0.0)
    eta0 = _integrable_eta(base, p, q)
    xs = (np.arange(nx) + 0.5) * spec.L / (nx * q)
    es = np.clip(eta0 + spread * np.array([-1.0, 0.0, 1.0]), -0.99, 0.99)
    X, E = np.meshgrid(xs, es)
    return np.column_stack([X.ravel(), E.ravel()])


@dataclass
class OrbitCount:
    band: tuple[float, float]
    t_max: int
    orbits: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)

    def periods(self) -> np.ndarray:
        return np.array(sorted(o.q for orbs in self.orbits.values() for o in orbs), dtype=np.int64)

    def counts(self, t_values) -> np.ndarray:
        return np.searchsorted(self.periods(), np.asarray(t_values), side="right")

    def series(self, t_values=None, window=None) -> GrowthSeries:
        t_values = np.arange(1, self.t_max + 1) if t_values is None else np.asarray(t_values)
        return GrowthSeries.from_counts(t_values, self.counts(t_values), window)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["p", "q", "x", "eta", "residual", "family_flag"])
            for (p, q) in sorted(self.orbits, key=lambda k: (k[1], Fraction(k[0], k[1]))):
                for o in sorted(self.orbits[(p, q)], key=lambda o: round(o.eta, 10)):
                    w.writerow([p, q, repr(o.x), repr(o.eta), repr(o.residual), int(o.family)])


def count_orbits(
    spec: AnnulusMapSpec,
    band,
    t_max: int,
    *,
    seeds_per_pair: int = 16,
) -> OrbitCount:
    """Periodic orbit classes with rotation number in ``band`` and prime period up to ``t_max``.

    An invariant circle of periodic points (a family) counts once.
    """
    a, b = band
    # the band must lie inside the range of rotation numbers
    lo_ok = hi_ok = False
    for e in (0.5, 0.75, 0.9, 0.95):
        try:
            if not hi_ok:
                hi_ok = rotation_number(spec, (0.0, -e), 2000, threshold=np.inf).value > float(b)
            if not lo_ok:
                lo_ok = rotation_number(spec, (0.0, e), 2000, threshold=np.inf).value < float(a)
        except AnnulusError:
            continue
    if not (lo_ok and hi_ok):
        raise AnnulusError(f"rotation numbers of the map do not cover {band}")

    result = OrbitCount((float(a), float(b)), int(t_max))
    for p, q in enumerate_coprime(a, b, t_max):
        try:
            if spec.integrable:
                found = find_periodic(spec, p, q)
            else:
                found = find_periodic(spec, p, q, _pair_seeds(spec, p, q, seeds_per_pair), shortcut=False)
        except AnnulusError as exc:
            result.failures[(p, q)] = str(exc)
            continue
        if found:
            result.orbits[(p, q)] = found
        else:
            result.failures[(p, q)] = "no convergent seed"
    return result
