"""Arclength profile curves for the model sphere of revolution.

The profile ``s -> (r(s), z(s))`` runs from the south pole (``s = 0``) to the
north pole (``s = M/2``).  On ``[0, pi/2]`` it is the unit circle
(``r = sin s``, ``z = -cos s``); on ``[pi/2, M/4]`` the radius drops from 1 to
``r_min`` along a quintic that matches value, slope and curvature at both
ends; the upper half is the mirror image ``r(M/2 - s) = r(s)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ProfileError",
    "ProfileParams",
    "Profile",
    "ValidationReport",
    "build_model_profile",
    "evaluate",
    "validate",
]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


class ProfileError(ValueError):
    """Raised for inadmissible profile parameters or out-of-range arclength."""


@dataclass(frozen=True)
class ProfileParams:
    r_min: float = 0.5
    M: float = 4 * math.pi
    cap_junction_curvature: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.r_min < 1.0:
            raise ProfileError(f"r_min must lie in (0, 1), got {self.r_min}")
        if not self.M > 2 * math.pi:
            raise ProfileError(f"total length M must exceed 2*pi, got {self.M}")
        if not self.cap_junction_curvature > 0.0:
            raise ProfileError("cap_junction_curvature must be positive")

    @property
    def s_min(self) -> float:
        """Arclength of the minimal parallel."""
        return self.M / 4

    @property
    def circumference(self) -> float:
        """Length ``L = 2 pi r_min`` of the minimal parallel."""
        return 2 * math.pi * self.r_min


def _quintic_coefficients(h: float, r_min: float, kappa: float) -> np.ndarray:
    # Hermite data in the unit variable u = (s - pi/2) / h; d/du = h d/ds.
    A = np.array(
        [
            [1, 0, 0, 0, 0, 0],
            [0, 1, 0, 0, 0, 0],
            [0, 0, 2, 0, 0, 0],
            [1, 1, 1, 1, 1, 1],
            [0, 1, 2, 3, 4, 5],
            [0, 0, 2, 6, 12, 20],
        ],
        dtype=float,
    )
    rhs = np.array([1.0, 0.0, -h * h, r_min, 0.0, kappa * h * h])
    return np.linalg.solve(A, rhs)


@dataclass(frozen=True, eq=False)
class Profile:
    """Immutable model profile; build it with :func:`build_model_profile`."""

    params: ProfileParams
    coeffs: np.ndarray = field(repr=False)
    grid: np.ndarray = field(repr=False)
    _z_band_knots: np.ndarray = field(repr=False)
    _z_band_values: np.ndarray = field(repr=False)

    # ------------------------------------------------------------------ scalars
    @property
    def M(self) -> float:
        return self.params.M

    @property
    def r_min(self) -> float:
        return self.params.r_min

    @property
    def half_length(self) -> float:
        return self.params.M / 2

    @property
    def s_min(self) -> float:
        return self.params.M / 4

    @property
    def circumference(self) -> float:
        return self.params.circumference

    @property
    def band_width(self) -> float:
        return self.params.M / 4 - math.pi / 2

    @property
    def z_mid(self) -> float:
        """Height of the minimal parallel (the mirror plane of the profile)."""
        return float(self._z_band_values[-1])

    # ---------------------------------------------------------------- internals
    def _poly(self, u, order):
        c = self.coeffs
        h = self.band_width
        if order == 0:
            return c[0] + u * (c[1] + u * (c[2] + u * (c[3] + u * (c[4] + u * c[5]))))
        if order == 1:
            d = c[1] + u * (2 * c[2] + u * (3 * c[3] + u * (4 * c[4] + u * 5 * c[5])))
            return d / h
        d2 = 2 * c[2] + u * (6 * c[3] + u * (12 * c[4] + u * 20 * c[5]))
        return d2 / (h * h)

    def _fold(self, s):
        """Map ``s`` into the lower half and return the derivative sign."""
        s = np.asarray(s, dtype=float)
        upper = s > self.s_min
        folded = np.where(upper, self.half_length - s, s)
        return folded, np.where(upper, -1.0, 1.0), upper

    def _lower(self, s, order):
        s = np.asarray(s, dtype=float)
        cap = s <= math.pi / 2
        u = (s - math.pi / 2) / self.band_width
        if order == 0:
            cap_val = np.sin(s)
        elif order == 1:
            cap_val = np.cos(s)
        else:
            cap_val = -np.sin(s)
        return np.where(cap, cap_val, self._poly(u, order))

    def _check_range(self, s):
        s_arr = np.asarray(s, dtype=float)
        if np.any(s_arr < -1e-14) or np.any(s_arr > self.half_length + 1e-14):
            raise ProfileError(f"arclength outside [0, M/2 = {self.half_length}]")

    # ------------------------------------------------------------ public curves
    def r(self, s):
        folded, _, _ = self._fold(s)
        return self._lower(folded, 0)

    def dr(self, s):
        folded, sign, _ = self._fold(s)
        return sign * self._lower(folded, 1)

    def ddr(self, s):
        folded, _, _ = self._fold(s)
        return self._lower(folded, 2)

    def dz(self, s):
        return np.sqrt(np.clip(1.0 - self.dr(s) ** 2, 0.0, None))

    def z(self, s):
        folded, _, upper = self._fold(s)
        folded = np.atleast_1d(folded)
        out = np.empty_like(folded)
        cap = folded <= math.pi / 2
        out[cap] = -np.cos(folded[cap])
        band = ~cap
        if np.any(band):
            out[band] = self._z_band(folded[band])
        out = np.where(np.atleast_1d(upper), 2 * self.z_mid - out, out)
        return out if np.ndim(s) else float(out[0])

    def _z_band(self, s: np.ndarray) -> np.ndarray:
        knots = self._z_band_knots
        idx = np.clip(np.searchsorted(knots, s, side="right") - 1, 0, len(knots) - 2)
        base = knots[idx]
        half = 0.5 * (s - base)
        nodes = base[:, None] + half[:, None] * (_GL_NODES[None, :] + 1.0)
        integrand = np.sqrt(np.clip(1.0 - self._poly_band_dr(nodes) ** 2, 0.0, None))
        return self._z_band_values[idx] + half * (integrand @ _GL_WEIGHTS)

    def _poly_band_dr(self, s):
        return self._poly((s - math.pi / 2) / self.band_width, 1)

    def rdr_many(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised ``(r(s), r'(s))`` in one pass; the batch right-hand side."""
        c0, c1, c2, c3, c4, c5 = self.coeffs
        h = self.band_width
        upper = s > self.s_min
        f = np.where(upper, self.params.M / 2 - s, s)
        u = (f - 1.5707963267948966) / h
        r = c0 + u * (c1 + u * (c2 + u * (c3 + u * (c4 + u * c5))))
        d = (c1 + u * (2 * c2 + u * (3 * c3 + u * (4 * c4 + u * 5 * c5)))) / h
        cap = f <= 1.5707963267948966
        if cap.any():
            r = np.where(cap, np.sin(f), r)
            d = np.where(cap, np.cos(f), d)
        return r, np.where(upper, -d, d)

    def rdr(self, s: float) -> tuple[float, float]:
        """Fast scalar ``(r(s), r'(s))`` used by the ODE right-hand side."""
        if s > self.s_min:
            s = self.params.M / 2 - s
            sign = -1.0
        else:
            sign = 1.0
        if s <= 1.5707963267948966:
            return math.sin(s), sign * math.cos(s)
        c = self.coeffs
        h = self.band_width
        u = (s - 1.5707963267948966) / h
        r = c[0] + u * (c[1] + u * (c[2] + u * (c[3] + u * (c[4] + u * c[5]))))
        d = c[1] + u * (2 * c[2] + u * (3 * c[3] + u * (4 * c[4] + u * 5 * c[5])))
        return r, sign * d / h

    # ----------------------------------------------------------------- export
    def to_dict(self) -> dict:
        g = self.grid
        table = np.column_stack([g, self.r(g), self.z(g), self.dr(g)])
        return {
            "r_min": self.params.r_min,
            "M": self.params.M,
            "cap_junction_curvature": self.params.cap_junction_curvature,
            "grid": table.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Profile":
        params = ProfileParams(
            r_min=float(data["r_min"]),
            M=float(data["M"]),
            cap_junction_curvature=float(data.get("cap_junction_curvature", 1.0)),
        )
        n = len(data["grid"]) if data.get("grid") else 2049
        return build_model_profile(params, n_grid=n)


def _band_admissibility(coeffs: np.ndarray, h: float) -> tuple[bool, float]:
    """Return (strictly decreasing on the open band, max |r'| on the band)."""
    dpoly = np.polynomial.Polynomial(coeffs).deriv()
    ddpoly = dpoly.deriv()
    # r' vanishes at u = 0 and u = 1; any other root in (0, 1) breaks monotonicity.
    interior = [
        z.real for z in dpoly.roots() if abs(z.imag) < 1e-9 and 1e-9 < z.real < 1 - 1e-9
    ]
    mid = dpoly(np.linspace(0.0, 1.0, 257)[1:-1])
    decreasing = not interior and bool(np.all(mid < 0))
    candidates = [0.0, 1.0] + [
        z.real for z in ddpoly.roots() if abs(z.imag) < 1e-9 and 0 <= z.real <= 1
    ]
    max_slope = max(abs(dpoly(u)) for u in candidates) / h
    return decreasing, float(max_slope)


def build_model_profile(
    params: ProfileParams | None = None, *, n_grid: int = 2049, check: bool = True
) -> Profile:
    """Construct the model profile for ``params``.

    Raises :class:`ProfileError` when the band quintic is not strictly
    decreasing or reaches ``|r'| >= 1`` (the profile would not be a regular
    arclength curve).  Pass ``check=False`` to build it anyway, e.g. to
    inspect the failure with :func:`validate`.
    """
    params = params or ProfileParams()
    h = params.M / 4 - math.pi / 2
    coeffs = _quintic_coefficients(h, params.r_min, params.cap_junction_curvature)
    if check:
        decreasing, max_slope = _band_admissibility(coeffs, h)
        if not decreasing or max_slope >= 1.0:
            raise ProfileError(
                "inadmissible profile: band interpolant "
                f"{'is not monotone' if not decreasing else 'is too steep'} "
                f"(max |r'| = {max_slope:.4g}); enlarge M or raise r_min"
            )

    # Cumulative arclength quadrature for z on the band knots.
    knots = np.linspace(math.pi / 2, params.M / 4, 65)
    u_nodes = 0.5 * (_GL_NODES + 1.0)
    values = [0.0]
    for a, b in zip(knots[:-1], knots[1:]):
        s_nodes = a + (b - a) * u_nodes
        dr = np.polynomial.polynomial.polyval((s_nodes - math.pi / 2) / h, np.polynomial.polynomial.polyder(coeffs)) / h
        dz = np.sqrt(np.clip(1.0 - dr * dr, 0.0, None))
        values.append(values[-1] + 0.5 * (b - a) * float(dz @ _GL_WEIGHTS))

    grid = np.linspace(0.0, params.M / 2, n_grid)
    return Profile(
        params=params,
        coeffs=coeffs,
        grid=grid,
        _z_band_knots=knots,
        _z_band_values=np.asarray(values),
    )


def evaluate(profile: Profile, s: float) -> tuple[float, float, float, float]:
    """Return ``(r, z, r', z')`` at arclength ``s`` in ``[0, M/2]``."""
    profile._check_range(s)
    s = min(max(float(s), 0.0), profile.half_length)
    return (
        float(profile.r(s)),
        float(profile.z(s)),
        float(profile.dr(s)),
        float(profile.dz(s)),
    )


@dataclass
class ValidationReport:
    checks: dict[str, bool]
    residuals: dict[str, float]
    critical_points: list[float]

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def failures(self) -> list[str]:
        return [name for name, ok in self.checks.items() if not ok]


def validate(
    profile: Profile,
    *,
    arclength_tol: float = 1e-10,
    quadrature_tol: float = 1e-8,
    symmetry_tol: float = 1e-10,
) -> ValidationReport:
    """Check every profile invariant on the sample grid and report residuals."""
    g = profile.grid
    half = profile.half_length
    r = profile.r(g)
    dr = profile.dr(g)
    interior = (g > 0) & (g < half)

    residuals: dict[str, float] = {}
    checks: dict[str, bool] = {}

    raw = 1.0 - dr**2
    residuals["max_abs_slope"] = float(np.max(np.abs(dr[interior])))
    checks["slope_below_one"] = bool(residuals["max_abs_slope"] < 1.0)

    dz = np.sqrt(np.clip(raw, 0.0, None))
    residuals["arclength"] = float(np.max(np.abs(dr**2 + dz**2 - 1.0)))
    checks["arclength"] = residuals["arclength"] < arclength_tol and checks["slope_below_one"]

    # Quadrature z against its own derivative (4th-order central differences).
    hstep = 1e-3
    inner = g[(g > 2 * hstep) & (g < half - 2 * hstep)]
    zd = (
        -profile.z(inner + 2 * hstep)
        + 8 * profile.z(inner + hstep)
        - 8 * profile.z(inner - hstep)
        + profile.z(inner - 2 * hstep)
    ) / (12 * hstep)
    residuals["z_quadrature"] = float(np.max(np.abs(zd - profile.dz(inner))))
    checks["z_quadrature"] = residuals["z_quadrature"] < quadrature_tol

    residuals["endpoints"] = float(max(abs(r[0]), abs(r[-1])))
    checks["poles"] = residuals["endpoints"] < 1e-12 and bool(np.all(r[interior] > 0))

    cap = g <= math.pi / 2
    residuals["cap"] = float(np.max(np.abs(r[cap] - np.sin(g[cap]))))
    checks["cap_is_unit_circle"] = residuals["cap"] < 1e-14

    residuals["symmetry"] = float(np.max(np.abs(profile.r(half - g) - r)))
    checks["symmetry"] = residuals["symmetry"] < symmetry_tol

    crit = _critical_points(profile)
    expected = [math.pi / 2, profile.s_min, half - math.pi / 2]
    spacing = float(g[1] - g[0])
    checks["critical_points"] = len(crit) == 3 and all(
        abs(a - b) <= spacing for a, b in zip(crit, expected)
    )
    residuals["r_at_max"] = abs(float(profile.r(math.pi / 2)) - 1.0)
    residuals["r_at_min"] = abs(float(profile.r(profile.s_min)) - profile.r_min)
    checks["critical_values"] = residuals["r_at_max"] < 1e-14 and residuals["r_at_min"] < 1e-12
    return ValidationReport(checks=checks, residuals=residuals, critical_points=crit)


def _critical_points(profile: Profile) -> list[float]:
    g = profile.grid[1:-1]
    dr = profile.dr(g)
    dr = np.where(np.abs(dr) < 1e-14, 0.0, dr)
    roots: list[float] = []
    for i in range(len(g) - 1):
        a, b = dr[i], dr[i + 1]
        if a == 0.0:
            root = float(g[i])
        elif a * b < 0:
            root = float(g[i] - a * (g[i + 1] - g[i]) / (b - a))
        else:
            continue
        if not roots or root - roots[-1] > 0.5 * (g[1] - g[0]):
            roots.append(root)
    return roots
