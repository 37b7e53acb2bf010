"""Conley-Zehnder indices in Sp(2), Morse-Bott perturbation data and Z/2 homology.

Conventions: ``J = [[0, -1], [1, 0]]`` and a path ``Psi`` with ``Psi(0) = I``
solves ``Psi' = J S(t) Psi`` for the symmetric ``S = -J Psi' Psi^{-1}``.
With these conventions ``t -> exp(pi t J)`` (rotation by ``pi t``) has index 1.

The index is computed from the crossing form: at every ``t`` where
``Psi(t)`` has eigenvalue 1 the quadratic form ``v -> <v, S(t) v>`` on
``ker(Psi(t) - I)`` contributes its signature (half of it at ``t = 0``).
A small endpoint-preserving homotopy first makes all crossings regular.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

__all__ = [
    "CZError",
    "J",
    "SymplecticPath",
    "PerturbationData",
    "PerturbedPair",
    "Flowline",
    "Z2ChainComplex",
    "HomologySummary",
    "expm_sl2",
    "logm_sl2",
    "rotation_path",
    "exp_path",
    "cz_index",
    "maslov_loop",
    "linearized_monodromy",
    "perturbed_pair",
    "gradient_flowlines",
    "gf2_rank",
    "z2_homology",
    "assemble_model_homology",
]

J = np.array([[0.0, -1.0], [1.0, 0.0]])
I2 = np.eye(2)
DET_TOL = 1e-10
REG_DELTA = 0.1
_REG_FORMS = (np.array([[1.0, 0.3], [0.3, 2.0]]), np.array([[2.5, -0.7], [-0.7, 0.8]]))


class CZError(ValueError):
    pass


def expm_sl2(A: np.ndarray) -> np.ndarray:
    """Closed-form exponential of traceless 2x2 matrices (any leading shape)."""
    A = np.asarray(A, dtype=float)
    d = A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]  # A^2 = -det(A) I
    w = np.sqrt(np.abs(d))
    small = w < 1e-8
    ws = np.where(small, 1.0, w)
    c = np.where(d > 0, np.cos(w), np.cosh(w))
    s = np.where(d > 0, np.sin(ws) / ws, np.sinh(ws) / ws)
    # Taylor branch near the nilpotent cone
    c = np.where(small, 1.0 - d / 2, c)
    s = np.where(small, 1.0 - d / 6, s)
    return c[..., None, None] * I2 + s[..., None, None] * A


def logm_sl2(B: np.ndarray) -> np.ndarray:
    """Principal logarithm of an ``SL(2)`` matrix near the identity."""
    B = np.asarray(B, dtype=float)
    h = 0.5 * (B[..., 0, 0] + B[..., 1, 1])
    if np.any(h <= -1.0 + 1e-12):
        raise CZError("logarithm undefined: trace too negative (refine the sampling)")
    A0 = B - h[..., None, None] * I2
    ell = h < 1.0
    w = np.where(ell, np.arccos(np.clip(h, -1.0, 1.0)), np.arccosh(np.maximum(h, 1.0)))
    sw = np.where(ell, np.sin(w), np.sinh(w))
    small = w < 1e-8
    factor = np.where(small, 1.0, w / np.where(small, 1.0, sw))
    return factor[..., None, None] * A0


@dataclass
class SymplecticPath:
    """Path of 2x2 symplectic matrices on ``[0, 1]`` starting at the identity.

    Either ``func`` (exact evaluation) or time-ordered ``samples`` is used;
    between samples the path is interpolated along one-parameter subgroups.
    """

    times: np.ndarray
    samples: np.ndarray
    func: object = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.shape != (len(self.times), 2, 2):
            raise CZError("samples must have shape (n, 2, 2) matching times")
        if self.times[0] != 0.0 or self.times[-1] != 1.0 or np.any(np.diff(self.times) <= 0):
            raise CZError("times must increase from 0 to 1")
        if not np.array_equal(self.samples[0], I2):
            raise CZError("path must start at the identity")
        dets = np.linalg.det(self.samples)
        if np.max(np.abs(dets - 1.0)) > DET_TOL:
            raise CZError("samples must have unit determinant")
        self._steps = None

    @classmethod
    def from_function(cls, func, n: int = 257) -> "SymplecticPath":
        t = np.linspace(0.0, 1.0, n)
        mats = np.array([func(ti) for ti in t])
        mats[0] = I2
        return cls(t, mats, func)

    @property
    def endpoint(self) -> np.ndarray:
        return self.samples[-1]

    def endpoint_margin(self) -> float:
        return abs(float(np.linalg.det(self.endpoint - I2)))

    @property
    def steps(self) -> np.ndarray:
        """Generators ``A_i`` with ``Psi_{i+1} = Psi_i exp(A_i)``."""
        if self._steps is None:
            self._steps = logm_sl2(np.linalg.solve(self.samples[:-1], self.samples[1:]))
        return self._steps

    def _piece(self, t):
        t = np.asarray(t, dtype=float)
        i = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2)
        return i, (t - self.times[i]) / (self.times[i + 1] - self.times[i])

    def interp(self, t) -> np.ndarray:
        """Piecewise one-parameter-subgroup interpolant of the samples (vectorised)."""
        i, s = self._piece(t)
        return self.samples[i] @ expm_sl2(s[..., None, None] * self.steps[i])

    def interp_rate(self, t) -> np.ndarray:
        """``Psi' Psi^{-1}`` of the interpolant."""
        i, s = self._piece(t)
        A = self.steps[i] / np.diff(self.times)[i][..., None, None]
        P = self.interp(t)
        return P @ A @ np.linalg.inv(P)

    def __call__(self, t: float) -> np.ndarray:
        if self.func is not None:
            return np.asarray(self.func(t), dtype=float)
        return self.interp(t)

    def compose(self, loop: "SymplecticPath") -> "SymplecticPath":
        """Pointwise product ``loop(t) @ self(t)``."""
        f, g = loop, self
        return SymplecticPath.from_function(lambda t: f(t) @ g(t), max(len(self.times), len(loop.times)))

    def inverse(self) -> "SymplecticPath":
        return SymplecticPath.from_function(lambda t: np.linalg.inv(self(t)), len(self.times))

    def reparametrize(self, phi) -> "SymplecticPath":
        return SymplecticPath.from_function(lambda t: self(phi(t)), len(self.times))

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump({"times": self.times.tolist(), "matrices": self.samples.tolist()}, fh)

    @classmethod
    def from_json(cls, path) -> "SymplecticPath":
        with open(path) as fh:
            doc = json.load(fh)
        return cls(np.array(doc["times"]), np.array(doc["matrices"]))


def rotation_path(rate: float, n: int = 257) -> SymplecticPath:
    """``t -> exp(rate * t * J)``, rotation by angle ``rate * t``."""
    return SymplecticPath.from_function(lambda t: expm_sl2(rate * t * J), n)


def exp_path(A, n: int = 257) -> SymplecticPath:
    """``t -> exp(t A)`` for traceless ``A``."""
    A = np.asarray(A, dtype=float)
    if abs(np.trace(A)) > 1e-12:
        raise CZError("generator must be traceless")
    return SymplecticPath.from_function(lambda t: expm_sl2(t * A), n)


def _signature(S: np.ndarray, tol: float = 1e-9) -> int:
    ev = np.linalg.eigvalsh(0.5 * (S + S.T))
    if np.any(np.abs(ev) < tol * max(1.0, np.max(np.abs(ev)))):
        raise CZError("degenerate crossing form")
    return int(np.sum(ev > 0) - np.sum(ev < 0))


def _cz_crossings(path: SymplecticPath, delta: float, P: np.ndarray, n_scan: int) -> int:
    JP = J @ P

    def psi(t):
        t = np.asarray(t, dtype=float)
        E = expm_sl2((delta * np.sin(np.pi * t))[..., None, None] * JP)
        return E @ path.interp(t)

    def S(t):
        E = expm_sl2(delta * math.sin(math.pi * t) * JP)
        rate = delta * math.pi * math.cos(math.pi * t) * JP + E @ path.interp_rate(t) @ np.linalg.inv(E)
        return -J @ rate

    def g(t):
        m = psi(t)
        return 2.0 - (m[..., 0, 0] + m[..., 1, 1])  # det(Psi - I) in Sp(2)

    total = _signature(S(0.0))  # half weight at t = 0; everything is doubled until the end
    ts = np.linspace(0.0, 1.0, n_scan + 1)
    ts[0] = 0.5 * ts[1]  # g vanishes to second order at t = 0
    vals = g(ts)
    for i in np.flatnonzero(vals[:-1] * vals[1:] <= 0):
        if vals[i] == 0.0:
            continue
        tc = brentq(lambda t: float(g(t)), ts[i], ts[i + 1], xtol=1e-15)
        if tc >= 1.0 - 1e-9:
            raise CZError("crossing at the endpoint: path is degenerate")
        v = np.linalg.svd(psi(tc) - I2)[2][-1]
        form = float(v @ S(tc) @ v)
        if abs(form) < 1e-9:
            raise CZError(f"non-regular crossing at t = {tc:.6g}")
        total += 2 if form > 0 else -2
    if total % 2:
        raise CZError("odd total signature: unresolved crossing cluster")
    return total // 2


def _generator_bound(path: SymplecticPath) -> float:
    rates = np.linalg.norm(path.steps, ord=2, axis=(1, 2)) / np.diff(path.times)
    return float(rates.max())


def cz_index(path: SymplecticPath, *, delta: float = REG_DELTA, n_scan: int | None = None) -> int:
    """Conley-Zehnder index by the crossing form.

    The sampled path (interpolated along one-parameter subgroups between
    samples) is replaced by ``exp(delta sin(pi t) J P) Psi(t)``, which has
    the same endpoints and is homotopic to ``Psi`` with fixed endpoints, so
    any ``delta`` gives the same index.  ``delta`` only has to be large
    enough that the crossings it splits apart are resolved by the scan
    grid, whose density is adapted to the rotation speed of the path.  The
    computation is repeated for a second symmetric ``P`` and the two results
    must agree.
    """
    if path.endpoint_margin() < DET_TOL:
        raise CZError("endpoint is degenerate: det(Psi(1) - I) = 0")
    if n_scan is None:
        n_scan = int(min(200_000, max(4000, 200 * (_generator_bound(path) + delta * math.pi) / delta)))
    results = {_cz_crossings(path, delta, P, n_scan) for P in _REG_FORMS}
    if len(results) != 1:
        raise CZError(f"regularisations disagree: {sorted(results)}")
    return results.pop()


def _polar_angle(M: np.ndarray) -> float:
    # rotation part of the polar decomposition of a 2x2 matrix with det > 0
    return math.atan2(M[1, 0] - M[0, 1], M[0, 0] + M[1, 1])


def maslov_loop(loop: SymplecticPath, n: int = 2001) -> int:
    """Winding number of the rotation part of a loop based at the identity."""
    if np.max(np.abs(loop(1.0) - I2)) > 1e-8:
        raise CZError("input is not a closed loop")
    ang = np.unwrap([_polar_angle(loop(t)) for t in np.linspace(0.0, 1.0, n)])
    return int(round((ang[-1] - ang[0]) / (2 * math.pi)))


@dataclass(frozen=True)
class PerturbationData:
    """Morse-Bott perturbation of one ``S^1``-family of action ``T``.

    ``c`` is the (unspecified, nonzero) twist constant of the family and
    ``delta`` the perturbation size; matrices are written in the frame
    ``(xi_1, xi_2)`` of the contact structure.
    """

    T: float
    delta: float
    c: float

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.c == 0:
            raise ValueError("c must be nonzero")

    def b(self, which: str) -> float:
        d = self.delta
        if which == "max":
            return d / (1.0 + d) ** 2
        if which == "min":
            return -d / (1.0 - d) ** 2
        raise ValueError("which must be 'max' or 'min'")

    def period(self, which: str) -> float:
        return (1.0 + self.delta) * self.T if which == "max" else (1.0 - self.delta) * self.T

    def generator(self, which: str) -> np.ndarray:
        return np.array([[0.0, self.c], [self.b(which), 0.0]])

    def kind(self, which: str) -> str:
        return "hyperbolic" if self.b(which) * self.c > 0 else "elliptic"


def linearized_monodromy(data: PerturbationData, which: str, n: int = 257) -> SymplecticPath:
    """``t -> exp(t T_w M)`` with ``M = [[0, c], [b, 0]]`` on ``[0, 1]``."""
    A = data.period(which) * data.generator(which)
    path = exp_path(A, n)
    if path.endpoint_margin() < DET_TOL:
        raise CZError(f"degenerate monodromy for P_{which}; adjust delta")
    return path


@dataclass(frozen=True)
class PerturbedPair:
    mu_max: int
    mu_min: int
    action_max: float
    action_min: float
    kind_max: str
    kind_min: str


def perturbed_pair(data: PerturbationData) -> PerturbedPair:
    """The two nondegenerate orbits left from a perturbed family."""
    return PerturbedPair(
        mu_max=cz_index(linearized_monodromy(data, "max")),
        mu_min=cz_index(linearized_monodromy(data, "min")),
        action_max=(1.0 + data.delta) * data.T,
        action_min=(1.0 - data.delta) * data.T,
        kind_max=data.kind("max"),
        kind_min=data.kind("min"),
    )


@dataclass(frozen=True)
class Flowline:
    through: float
    source: float
    sink: float
    backward_time: float
    forward_time: float


def gradient_flowlines(delta: float, tol: float = 1e-8) -> list[Flowline]:
    """Heteroclinic orbits of ``x' = -sin(x) / (1 + delta cos(x))`` on the circle.

    Zeros are located on a grid and refined; every arc between neighbouring
    zeros carries one flowline, integrated from the arc midpoint in both time
    directions until it is within ``tol`` of the limiting zeros.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")

    def v(t, x):
        return -math.sin(x[0]) / (1.0 + delta * math.cos(x[0]))

    grid = np.linspace(0.0, 2 * math.pi, 721)
    vals = np.array([v(0, [x]) for x in grid])
    zeros = []
    for i in range(len(grid) - 1):
        if vals[i] == 0.0:
            zeros.append(grid[i])
        elif vals[i] * vals[i + 1] < 0:
            zeros.append(brentq(lambda x: v(0, [x]), grid[i], grid[i + 1], xtol=1e-15))
    zeros = sorted({round(z % (2 * math.pi), 12) for z in zeros})
    lines = []
    for k, z0 in enumerate(zeros):
        z1 = zeros[(k + 1) % len(zeros)] + (2 * math.pi if k + 1 == len(zeros) else 0.0)
        mid = 0.5 * (z0 + z1)
        ends = {}
        for sign in (1.0, -1.0):
            def near_end(t, x, lo=z0, hi=z1):
                return min(abs(x[0] - lo), abs(x[0] - hi)) - tol
            near_end.terminal = True
            sol = solve_ivp(lambda t, x: [sign * v(t, x)], (0.0, 1e4), [mid], events=near_end,
                            rtol=1e-12, atol=1e-14)
            if sol.status != 1:
                raise RuntimeError("flowline did not reach a zero")
            x_end = sol.y[0, -1]
            target = z0 if abs(x_end - z0) < abs(x_end - z1) else z1
            ends[sign] = (target % (2 * math.pi), float(sol.t[-1]))
        lines.append(Flowline(mid % (2 * math.pi), ends[-1.0][0], ends[1.0][0], ends[-1.0][1], ends[1.0][1]))
    return lines


def gf2_rank(A: np.ndarray) -> int:
    """Rank over GF(2) by Gaussian elimination."""
    M = (np.asarray(A, dtype=np.int64) % 2).astype(np.uint8)
    rows, cols = M.shape if M.ndim == 2 else (0, 0)
    rank = 0
    for c in range(cols):
        pivot = next((r for r in range(rank, rows) if M[r, c]), None)
        if pivot is None:
            continue
        M[[rank, pivot]] = M[[pivot, rank]]
        mask = M[:, c].astype(bool)
        mask[rank] = False
        M[mask] ^= M[rank]
        rank += 1
        if rank == rows:
            break
    return rank


@dataclass
class Z2ChainComplex:
    """Finite chain complex over GF(2).

    ``generators[k]`` is the number of generators in degree ``k`` and
    ``boundary[k]`` the ``generators[k-1] x generators[k]`` matrix of
    ``d: C_k -> C_{k-1}``.
    """

    generators: dict
    boundary: dict = field(default_factory=dict)

    def __post_init__(self):
        self.generators = {int(k): int(v) for k, v in self.generators.items()}
        bd = {}
        for k, D in self.boundary.items():
            k = int(k)
            D = np.asarray(D, dtype=np.int64) % 2
            shape = (self.generators.get(k - 1, 0), self.generators.get(k, 0))
            if D.shape != shape:
                raise ValueError(f"boundary[{k}] must have shape {shape}, got {D.shape}")
            bd[k] = D
        self.boundary = bd
        for k in bd:
            if k - 1 in bd and np.any((bd[k - 1] @ bd[k]) % 2):
                raise ValueError(f"d o d != 0 between degrees {k} and {k - 2}")

    def rank_d(self, k: int) -> int:
        D = self.boundary.get(k)
        return gf2_rank(D) if D is not None and D.size else 0

    def euler_characteristic(self) -> int:
        return sum((-1) ** (k % 2) * n for k, n in self.generators.items())


def z2_homology(cx: Z2ChainComplex) -> dict[int, int]:
    """Betti numbers over GF(2): ``dim ker d_k - rank d_{k+1}``."""
    return {k: n - cx.rank_d(k) - cx.rank_d(k + 1) for k, n in sorted(cx.generators.items())}


@dataclass(frozen=True)
class HomologySummary:
    degrees: dict
    offset: int
    mu_max: int
    mu_min: int
    cylinder_count: int

    def to_dict(self) -> dict:
        return {
            "degrees": {str(k): v for k, v in sorted(self.degrees.items())},
            "offset": self.offset,
            "mu_max": self.mu_max,
            "mu_min": self.mu_min,
            "cylinder_count": self.cylinder_count,
        }


def assemble_model_homology(pair: PerturbedPair, cylinder_count: int = 2, offset: int = 0) -> HomologySummary:
    """Two-generator complex of a perturbed family and its homology.

    ``P_min`` sits in degree ``mu_min + offset`` and ``P_max`` one degree
    higher; the differential counts connecting cylinders mod 2.
    """
    if pair.mu_max - pair.mu_min != 1:
        raise CZError("the pair does not sit in adjacent degrees")
    k = pair.mu_min + offset
    cx = Z2ChainComplex({k: 1, k + 1: 1}, {k + 1: [[cylinder_count % 2]]})
    return HomologySummary(z2_homology(cx), offset, pair.mu_max, pair.mu_min, cylinder_count)
