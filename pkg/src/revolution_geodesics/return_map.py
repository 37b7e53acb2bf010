"""First-return map of the Birkhoff annulus at the minimal parallel.

Points of the annulus are ``(x, eta)`` with ``x`` the arclength along the
parallel ``s = M/4`` and ``eta = -cos(beta)``.  By rotational symmetry the
return map is ``(x, eta) -> (x + f(eta), eta)``.  Three quantities are
computed per ``eta``:

``f``
    lifted displacement, normalised so that ``f(0) = 0``.  A geodesic with
    ``eta < 0`` advances ``L * W`` along the parallel and ``f = L * (W - 1)``;
    the case ``eta > 0`` is the mirror image.
``tau``
    the return time, even in ``eta`` with ``tau(0) = M``.
``W``
    the winding number ``dtheta / 2 pi`` of one return.

Each has a flow-based and a quadrature-based evaluation; they serve as
oracles for one another.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .geodesic_flow import DEFAULT_ATOL, DEFAULT_RTOL, next_crossing
from .profile import Profile

__all__ = [
    "ReturnMapError",
    "ReturnData",
    "ReturnTable",
    "EtaSolver",
    "EtaSolution",
    "return_data_flow",
    "return_data_quadrature",
    "band_integrals",
    "cap_integral",
    "winding_quadrature",
    "tau_quadrature",
    "f_quadrature",
    "tau_from_F",
    "solve_eta",
    "tabulate",
    "CrossValidation",
    "cross_validate",
]

QUAD_EPSABS = 1e-10
QUAD_EPSREL = 1e-12


class ReturnMapError(RuntimeError):
    """Quadrature failure, bad table coverage or an unbracketable target."""


@dataclass(frozen=True)
class ReturnData:
    eta: float
    f: float
    tau: float
    W: float
    method: str


def _check_eta(eta: float) -> float:
    eta = float(eta)
    if not -1.0 < eta < 1.0:
        raise ValueError(f"eta must lie in (-1, 1), got {eta}")
    return eta


def return_data_flow(
    profile: Profile,
    eta: float,
    x0: float = 0.0,
    *,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> ReturnData:
    """Return data from one numerically integrated return to the annulus."""
    eta = _check_eta(eta)
    if eta == 0.0:
        return ReturnData(0.0, 0.0, profile.M, 1.0, "flow")
    c = next_crossing(profile, x0, eta, rtol=rtol, atol=atol)
    L = profile.circumference
    dx = c.x - x0
    # K = -eta * r_min; a geodesic with K > 0 makes one extra turn per return
    f = dx - L if eta < 0 else dx + L
    return ReturnData(eta, f, c.t, dx / L, "flow")


def _quad(fun, a: float, b: float, what: str) -> float:
    val, err, info = quad(fun, a, b, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=400, full_output=1)[:3]
    if err > 10 * QUAD_EPSABS + 1e-10 * abs(val):
        raise ReturnMapError(f"{what}: quadrature error estimate {err:.2e} too large")
    return float(val)


def band_integrals(profile: Profile, c: float) -> tuple[float, float]:
    """Band contributions ``(I, J)`` for Clairaut value ``c = |K|``.

    ``I = int (c/r^2) / sqrt(1 - c^2/r^2) ds`` and
    ``J = int ds / sqrt(1 - c^2/r^2)`` over ``[pi/2, M/4]``.
    """
    if not 0.0 <= c < profile.r_min:
        raise ValueError(f"need 0 <= c < r_min, got {c}")
    a, b = math.pi / 2, profile.s_min
    r = lambda s: profile.rdr(s)[0]  # noqa: E731

    def theta_rate(s):
        q = c / r(s)
        return q / r(s) / math.sqrt(1.0 - q * q)

    def time_rate(s):
        q = c / r(s)
        return 1.0 / math.sqrt(1.0 - q * q)

    I = _quad(theta_rate, a, b, "winding integral") if c > 0 else 0.0
    J = _quad(time_rate, a, b, "return-time integral")
    return I, J


def cap_integral(c: float) -> float:
    """``int_{arcsin c}^{pi/2} (c/sin^2 z) / sqrt(1 - c^2/sin^2 z) dz`` (equals pi/2).

    The substitution ``z = arcsin c + w^2`` removes the inverse square-root
    singularity at the turning point so the integrand is smooth.
    """
    if not 0.0 < c < 1.0:
        raise ValueError(f"c must lie in (0, 1), got {c}")
    z0 = math.asin(c)
    wmax = math.sqrt(math.pi / 2 - z0)

    def integrand(w):
        z = z0 + w * w
        sz = math.sin(z)
        # sin^2 z - c^2 = sin(z - z0) sin(z + z0), accurate near the turning point
        d = math.sin(z - z0) * math.sin(z + z0)
        if d <= 0.0:
            return 2.0 * c / math.sqrt(math.sin(2 * z0)) if w == 0.0 else 0.0
        return 2.0 * w * c / (sz * math.sqrt(d))

    return _quad(integrand, 0.0, wmax, "cap integral")


def winding_quadrature(profile: Profile, eta: float) -> float:
    """Winding number from the Clairaut quadrature.

    For ``eta < 0`` this evaluates
    ``pi W = pi - 2 int_{pi/2}^{M/4} (eta r_min / r^2) / sqrt(1 - (eta r_min / r)^2) ds``;
    positive ``eta`` uses the odd symmetry ``W(eta) = -W(-eta)``.
    """
    eta = _check_eta(eta)
    if eta == 0.0:
        return 1.0
    I, _ = band_integrals(profile, abs(eta) * profile.r_min)
    w = 1.0 + 2.0 * I / math.pi
    return w if eta < 0 else -w


def f_quadrature(profile: Profile, eta: float) -> float:
    eta = _check_eta(eta)
    if eta == 0.0:
        return 0.0
    I, _ = band_integrals(profile, abs(eta) * profile.r_min)
    f = 2.0 * profile.circumference * I / math.pi
    return f if eta < 0 else -f


def tau_quadrature(profile: Profile, eta: float) -> float:
    """Return time ``2 pi + 4 J``: two cap visits of length ``pi`` each plus four band crossings."""
    eta = _check_eta(eta)
    _, J = band_integrals(profile, abs(eta) * profile.r_min)
    return 2.0 * math.pi + 4.0 * J


def return_data_quadrature(profile: Profile, eta: float) -> ReturnData:
    eta = _check_eta(eta)
    if eta == 0.0:
        return ReturnData(0.0, 0.0, profile.M, 1.0, "quadrature")
    c = abs(eta) * profile.r_min
    I, J = band_integrals(profile, c)
    L = profile.circumference
    f = 2.0 * L * I / math.pi
    w = 1.0 + 2.0 * I / math.pi
    if eta > 0:
        f, w = -f, -w
    return ReturnData(eta, f, 2.0 * math.pi + 4.0 * J, w, "quadrature")


def tau_from_F(profile: Profile, eta: float, f_table) -> float:
    """Return time from ``tau = F - eta f`` with ``F(eta) = M + int_0^eta f``.

    ``f_table`` is a pair ``(etas, fs)`` or a :class:`ReturnTable`.  The
    table is interpolated by a cubic spline (with the point ``(0, 0)``
    added) and ``F`` is its exact integral.
    """
    etas, fs = (f_table.eta, f_table.f) if isinstance(f_table, ReturnTable) else f_table
    etas = np.asarray(etas, dtype=float)
    fs = np.asarray(fs, dtype=float)
    if not np.any(etas == 0.0):
        etas = np.append(etas, 0.0)
        fs = np.append(fs, 0.0)
    order = np.argsort(etas)
    etas, fs = etas[order], fs[order]
    lo, hi = min(eta, 0.0), max(eta, 0.0)
    if lo < etas[0] or hi > etas[-1]:
        raise ReturnMapError(f"f table covers [{etas[0]}, {etas[-1]}], need [{lo}, {hi}]")
    spline = CubicSpline(etas, fs)
    F = profile.M + float(spline.integrate(0.0, eta))
    return F - eta * float(spline(eta))


@dataclass(frozen=True)
class EtaSolution:
    eta: float
    f: float
    residual: float
    bracket: tuple[float, float]
    evaluations: int


@dataclass(frozen=True)
class EtaSolver:
    """Root finder for ``f(eta) = L * a``.

    ``f`` is strictly decreasing, so the root is bracketed by expanding
    toward ``eta = -1`` (``a > 0``) or ``+1`` (``a < 0``).  A Brent solve
    on the quadrature ``f`` gives a starting value, which is then polished
    on the flow ``f`` inside a small bracket.

    ``edge`` bounds how close to ``|eta| = 1`` the expansion may go.
    """

    tolerance: float = 1e-9
    xtol: float = 1e-15
    max_iter: int = 100
    edge: float = 1e-9
    polish: bool = True
    polish_width: float = 1e-7
    polish_xtol: float = 1e-13

    def _bracket(self, fun, target: float, side: float) -> tuple[float, float]:
        # side = -1 for a > 0 (root in (-1, 0)), +1 for a < 0
        inner = 0.0
        gap = 0.5
        while True:
            outer = side * (1.0 - gap)
            if (fun(outer) - target) * side > 0:
                inner = outer
                gap *= 0.1
                if gap < self.edge:
                    raise ReturnMapError(
                        f"no sign change of f - {target:.6g} before |eta| = 1 - {self.edge:g}"
                    )
                continue
            return (outer, inner) if side < 0 else (inner, outer)

    def solve(self, profile: Profile, a: float) -> EtaSolution:
        L = profile.circumference
        target = L * float(a)
        if target == 0.0:
            return EtaSolution(0.0, 0.0, 0.0, (0.0, 0.0), 0)
        side = -1.0 if target > 0 else 1.0
        lo, hi = self._bracket(lambda e: f_quadrature(profile, e), target, side)
        eta0 = brentq(lambda e: f_quadrature(profile, e) - target, lo, hi,
                      xtol=self.xtol, maxiter=self.max_iter)
        if not self.polish:
            f0 = f_quadrature(profile, eta0)
            return EtaSolution(eta0, f0, abs(f0 - target), (lo, hi), 0)

        calls = [0]

        def g(e):
            calls[0] += 1
            return return_data_flow(profile, e).f - target

        width = self.polish_width
        for _ in range(20):
            a_, b_ = max(eta0 - width, -1 + self.edge), min(eta0 + width, 1 - self.edge)
            if side < 0:
                b_ = min(b_, -self.edge)
            else:
                a_ = max(a_, self.edge)
            ga, gb = g(a_), g(b_)
            if ga * gb <= 0:
                break
            width *= 10
        else:
            raise ReturnMapError("flow polish could not bracket the root")
        if ga == 0.0:
            eta = a_
        elif gb == 0.0:
            eta = b_
        else:
            eta = brentq(g, a_, b_, xtol=self.polish_xtol, maxiter=self.max_iter)
        f = return_data_flow(profile, eta).f
        residual = abs(f - target)
        if residual > self.tolerance:
            raise ReturnMapError(f"|f(eta) - L a| = {residual:.2e} exceeds {self.tolerance:g}")
        return EtaSolution(eta, f, residual, (a_, b_), calls[0])


def solve_eta(profile: Profile, a: float, solver: EtaSolver | None = None) -> float:
    """Unique ``eta`` with ``f(eta) = L * a``."""
    return (solver or EtaSolver()).solve(profile, a).eta


@dataclass
class ReturnTable:
    eta: np.ndarray
    f: np.ndarray
    tau: np.ndarray
    W: np.ndarray
    f_quadrature_residual: np.ndarray

    def to_csv(self, path) -> None:
        data = np.column_stack([self.eta, self.f, self.tau, self.W, self.f_quadrature_residual])
        np.savetxt(path, data, delimiter=",", header="eta,f,tau,W,f_quadrature_residual",
                   comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path) -> "ReturnTable":
        d = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(*(d[:, i].copy() for i in range(5)))


def tabulate(
    profile: Profile,
    n: int = 200,
    eta_max: float = 0.99,
    *,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> ReturnTable:
    """Flow-based return data on ``n`` evenly spaced points of ``[-eta_max, eta_max]``."""
    etas = np.linspace(-eta_max, eta_max, n)
    rows = [return_data_flow(profile, e, rtol=rtol, atol=atol) for e in etas]
    f = np.array([r.f for r in rows])
    fq = np.array([f_quadrature(profile, e) for e in etas])
    return ReturnTable(
        eta=etas,
        f=f,
        tau=np.array([r.tau for r in rows]),
        W=np.array([r.W for r in rows]),
        f_quadrature_residual=f - fq,
    )


@dataclass
class CrossValidation:
    """Agreement of a flow table with the quadrature formulas and the symmetries."""

    winding_max_diff: float
    tau_max_rel_diff: float
    f_decreasing_margin: float
    f_odd_residual: float
    tau_even_residual: float

    def passed(self, winding_tol: float = 1e-7, tau_tol: float = 1e-5, symmetry_tol: float = 1e-8) -> bool:
        return (
            self.winding_max_diff < winding_tol
            and self.tau_max_rel_diff < tau_tol
            and self.f_decreasing_margin > 0.0
            and self.f_odd_residual < symmetry_tol
            and self.tau_even_residual < symmetry_tol
        )

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def cross_validate(profile: Profile, table: ReturnTable) -> CrossValidation:
    """Compare ``W`` with quadrature, ``tau`` with ``F - eta f``, and check symmetry.

    The symmetry residuals pair ``eta`` with ``-eta``, so the table grid
    must be symmetric about zero (as produced by :func:`tabulate`).
    """
    eta = table.eta
    if not np.allclose(eta, -eta[::-1], rtol=0.0, atol=1e-15):
        raise ReturnMapError("table grid is not symmetric about eta = 0")
    w_quad = np.array([winding_quadrature(profile, e) for e in eta])
    tau_F = np.array([tau_from_F(profile, e, table) for e in eta])
    return CrossValidation(
        winding_max_diff=float(np.max(np.abs(table.W - w_quad))),
        tau_max_rel_diff=float(np.max(np.abs(table.tau - tau_F) / table.tau)),
        f_decreasing_margin=float(np.min(-np.diff(table.f))),
        f_odd_residual=float(np.max(np.abs(table.f + table.f[::-1]))),
        tau_even_residual=float(np.max(np.abs(table.tau - table.tau[::-1]))),
    )
