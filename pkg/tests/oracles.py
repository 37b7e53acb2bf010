"""Independent reference computations used as test oracles.

Nothing here calls the solver paths under test: the ODE oracle uses
LSODA with scipy events, quadratures use mpmath, counts use brute force.
"""
from __future__ import annotations

import math
from fractions import Fraction

import mpmath
import numpy as np
from scipy.integrate import solve_ivp


# ----------------------------------------------------------------- profile
def quintic_oracle(r_min: float, M: float, kappa: float = 1.0):
    """Band quintic in ``s`` from the six Hermite conditions, via numpy.polynomial."""
    a, b = math.pi / 2, M / 4
    # unknown coefficients of r(s) = sum c_k (s - a)^k; impose value, slope, curvature at both ends
    h = b - a
    rows, rhs = [], []
    for x, vals in ((0.0, (1.0, 0.0, -1.0)), (h, (r_min, 0.0, kappa))):
        for order, v in enumerate(vals):
            row = []
            for k in range(6):
                coef = math.perm(k, order) if k >= order else 0
                row.append(coef * x ** (k - order) if k >= order else 0.0)
            rows.append(row)
            rhs.append(v)
    c = np.linalg.solve(np.array(rows), np.array(rhs))
    return np.polynomial.Polynomial(c, domain=[a, a + 1], window=[0, 1])


def r_oracle(s: float, r_min: float, M: float, kappa: float = 1.0) -> float:
    s = M / 2 - s if s > M / 4 else s
    if s <= math.pi / 2:
        return math.sin(s)
    return float(quintic_oracle(r_min, M, kappa)(s))


# ----------------------------------------------------------------- flow / return
def lsoda_return(profile, eta: float, rtol: float = 1e-12, atol: float = 1e-13):
    """``(dtheta, tau)`` of one return to ``s = M/4`` with ``beta`` in ``(0, pi)``.

    Uses LSODA with terminal events, not the package integrator.
    """
    s0 = profile.M / 4
    y0 = [s0, 0.0, math.acos(-eta)]

    def rhs(t, y):
        r = float(profile.r(y[0]))
        dr = float(profile.dr(y[0]))
        return [math.sin(y[2]), math.cos(y[2]) / r, dr / r * math.cos(y[2])]

    def up(t, y):
        return y[0] - s0

    up.direction = 1.0
    # leave the section first, then stop at the next upward crossing
    first = solve_ivp(rhs, (0, 0.5), y0, method="LSODA", rtol=rtol, atol=atol)
    ev = up
    ev.terminal = True
    sol = solve_ivp(rhs, (0.5, 10 * profile.M), first.y[:, -1], method="LSODA",
                    rtol=rtol, atol=atol, events=ev)
    t_hit = sol.t_events[0][0]
    theta = sol.y_events[0][0][1]
    return theta, t_hit


def winding_mpmath(profile, eta: float) -> float:
    """``W`` for ``eta < 0``: ``1 + (2/pi) int_{pi/2}^{M/4} c / (r sqrt(r^2 - c^2)) ds``."""
    c = abs(eta) * profile.r_min
    f = lambda s: c / (float(profile.r(float(s))) * mpmath.sqrt(float(profile.r(float(s))) ** 2 - c * c))
    I = mpmath.quad(f, [math.pi / 2, (math.pi / 2 + profile.M / 4) / 2, profile.M / 4])
    return 1.0 + 2.0 * float(I) / math.pi


def cap_integral_mpmath(c: float) -> float:
    """Cap integral at 30 digits after ``z = arcsin(c) + w^2`` removes the endpoint singularity."""
    with mpmath.workdps(30):
        a = mpmath.asin(c)

        def g(w):
            z = a + w * w
            # sin^2 z - sin^2 a = sin(z - a) sin(z + a), free of cancellation
            return 2 * w * c / (mpmath.sin(z) * mpmath.sqrt(mpmath.sin(w * w) * mpmath.sin(z + a)))

        return float(mpmath.quad(g, [0, mpmath.sqrt(mpmath.pi / 2 - a)]))


# ----------------------------------------------------------------- numbers
def totient_brute(n: int) -> int:
    return sum(1 for k in range(1, n + 1) if math.gcd(k, n) == 1)


def coprime_brute(a, b, t: int) -> int:
    count = 0
    for q in range(1, t + 1):
        lo, hi = math.floor(a * q) - 1, math.ceil(b * q) + 1
        for p in range(lo, hi + 1):
            if a < Fraction(p, q) < b and math.gcd(abs(p), q) == 1:
                count += 1
    return count


def gf2_rank_brute(rows) -> int:
    """Rank over GF(2) as log2 of the size of the row span (small matrices only)."""
    rows = [tuple(int(v) % 2 for v in r) for r in rows]
    if not rows:
        return 0
    span = {tuple(0 for _ in rows[0])}
    for r in rows:
        span |= {tuple((x + y) % 2 for x, y in zip(v, r)) for v in span}
    return int(round(math.log2(len(span))))


# ----------------------------------------------------------------- indices
def cz_rotation(angle: float) -> int:
    """Index of ``t -> rotation by angle * t``: odd integer between ``angle/pi`` neighbours."""
    k = math.floor(angle / (2 * math.pi))
    return 2 * k + 1


def winding_of(z: np.ndarray) -> int:
    """Winding number of a closed sampled complex loop about 0."""
    ang = np.unwrap(np.angle(z))
    return int(round((ang[-1] - ang[0]) / (2 * math.pi)))
