"""Euler-angle double cover ``S^3 -> T^1 S^2`` and numerical linking numbers.

Points of ``S^3`` are pairs ``(r1 e^{i t1}, r2 e^{i t2})`` with
``r1^2 + r2^2 = 1``; as real 4-vectors they are ``[re1, im1, re2, im2]``.
Linking numbers are computed by stereographic projection to 3-space and a
midpoint-rule Gauss double integral, then rounded.  The orientation of the
projection is calibrated so the Hopf link of the two core circles has
linking number ``+1``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "LinkingError",
    "EulerAngles",
    "S3Curve",
    "LinkResult",
    "LinkTableReport",
    "covering_map",
    "preimage",
    "core_circle",
    "torus_curve",
    "lift_satellite_model",
    "model_link",
    "linking_number",
    "verify_link_table",
    "LINK_TABLE",
]

DEFAULT_SAMPLES = 2048
CORE_TOL = 1e-9
MIN_SEPARATION = 1e-3
MAX_RESIDUAL = 0.1
_BLOCK = 256


class LinkingError(ValueError):
    pass


@dataclass(frozen=True)
class EulerAngles:
    phi: float
    theta: float
    nu: float

    def __post_init__(self):
        if not 0.0 < self.nu < math.pi:
            raise LinkingError(f"nu must lie in (0, pi), got {self.nu}")


@dataclass
class S3Curve:
    """Closed sampled curve on the unit 3-sphere.

    ``samples`` has shape ``(n + 1, 4)`` with the last row repeating the
    first; the traversal direction is the sample order.
    """

    samples: np.ndarray
    name: str = ""

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim != 2 or x.shape[1] != 4 or x.shape[0] < 4:
            raise LinkingError("samples must have shape (n, 4) with n >= 4")
        norms = np.linalg.norm(x, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-12:
            raise LinkingError("samples must be unit vectors")
        if np.linalg.norm(x[0] - x[-1]) > 1e-9:
            raise LinkingError("curve is not closed (first and last samples differ)")
        self.samples = x

    @property
    def n(self) -> int:
        return self.samples.shape[0] - 1

    def reversed(self) -> "S3Curve":
        return S3Curve(self.samples[::-1].copy(), self.name + "^-1" if self.name else "")

    def complex_pair(self) -> tuple[np.ndarray, np.ndarray]:
        x = self.samples
        return x[:, 0] + 1j * x[:, 1], x[:, 2] + 1j * x[:, 3]

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.samples.tolist(), fh)

    @classmethod
    def from_json(cls, path, name: str = "") -> "S3Curve":
        with open(path) as fh:
            return cls(np.array(json.load(fh), dtype=float), name)

    @classmethod
    def from_complex(cls, z1: np.ndarray, z2: np.ndarray, name: str = "") -> "S3Curve":
        x = np.column_stack([z1.real, z1.imag, z2.real, z2.imag])
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        x[-1] = x[0]
        return cls(x, name)


def covering_map(point) -> EulerAngles:
    """``(r1 e^{i t1}, r2 e^{i t2}) -> (t1 + t2, t1 - t2, 2 arccos r1)`` with angles mod ``2 pi``."""
    x = np.asarray(point, dtype=float)
    z1, z2 = complex(x[0], x[1]), complex(x[2], x[3])
    r1, r2 = abs(z1), abs(z2)
    if r1 < CORE_TOL or r2 < CORE_TOL:
        raise LinkingError("point lies on a core circle, where the Euler angles are undefined")
    t1, t2 = math.atan2(z1.imag, z1.real), math.atan2(z2.imag, z2.real)
    nu = 2.0 * math.atan2(r2, r1)  # = 2 arccos(r1), stable near the ends
    return EulerAngles((t1 + t2) % (2 * math.pi), (t1 - t2) % (2 * math.pi), nu)


def preimage(angles: EulerAngles) -> tuple[np.ndarray, np.ndarray]:
    """The two points ``±(cos(nu/2) e^{i(phi+theta)/2}, sin(nu/2) e^{i(phi-theta)/2})``."""
    a = math.cos(angles.nu / 2) * np.exp(0.5j * (angles.phi + angles.theta))
    b = math.sin(angles.nu / 2) * np.exp(0.5j * (angles.phi - angles.theta))
    x = np.array([a.real, a.imag, b.real, b.imag])
    return x, -x


def torus_curve(c1: float, m: float, n: float, t_max: float, samples: int = DEFAULT_SAMPLES,
                phase1: float = 0.0, phase2: float = 0.0, name: str = "") -> S3Curve:
    """``t -> (c1 e^{i(m t + phase1)}, c2 e^{i(n t + phase2)})`` on ``[0, t_max]``."""
    if not 0.0 < c1 < 1.0:
        raise ValueError("c1 must lie in (0, 1)")
    c2 = math.sqrt(1.0 - c1 * c1)
    t = np.linspace(0.0, t_max, samples + 1)
    return S3Curve.from_complex(c1 * np.exp(1j * (m * t + phase1)),
                                c2 * np.exp(1j * (n * t + phase2)), name)


def core_circle(which: int, direction: int = 1, samples: int = DEFAULT_SAMPLES, name: str = "") -> S3Curve:
    """``t -> (e^{±it}, 0)`` for ``which = 1`` or ``(0, e^{±it})`` for ``which = 2``."""
    t = np.linspace(0.0, 2 * np.pi, samples + 1)
    z = np.exp(1j * direction * t)
    zero = np.zeros_like(z)
    pair = (z, zero) if which == 1 else (zero, z)
    return S3Curve.from_complex(*pair, name=name)


def lift_satellite_model(p: int, q: int, c1: float = 0.6, samples: int = DEFAULT_SAMPLES) -> S3Curve:
    """Model lift ``t -> (c1 e^{i p t/2}, c2 e^{i (p - 2q) t/2})`` of a ``(p, q)``-satellite.

    The curve closes after ``t = 2 pi`` when ``p`` is even and only after
    ``t = 4 pi`` when ``p`` is odd.
    """
    t_max = 2 * math.pi if p % 2 == 0 else 4 * math.pi
    return torus_curve(c1, p / 2, (p - 2 * q) / 2, t_max, samples, name=f"sat({p},{q})")


def model_link(samples: int = DEFAULT_SAMPLES, c1: float = 0.8) -> dict[str, S3Curve]:
    """Torus-curve representatives of the lifts of ``E+``, ``D+``, ``E-``, ``D-``.

    ``E+`` and ``E-`` are the core circles ``(e^{it}, 0)`` and
    ``(0, e^{-it})``.  ``D+`` is the model lift with ``(p, q) = (1, 0)`` on
    the torus ``r1 = c1`` and ``D-`` is its image under the
    orientation-preserving involution ``(z1, z2) -> (conj z2, conj z1)``,
    which also exchanges ``E+`` and ``E-``.
    """
    e_plus = core_circle(1, +1, samples, "E+")
    e_minus = core_circle(2, -1, samples, "E-")
    d_plus = torus_curve(c1, 0.5, 0.5, 4 * math.pi, samples, name="D+")
    z1, z2 = d_plus.complex_pair()
    d_minus = S3Curve.from_complex(np.conj(z2), np.conj(z1), "D-")
    return {"E+": e_plus, "D+": d_plus, "E-": e_minus, "D-": d_minus}


def _rotation_to_north(pole: np.ndarray) -> np.ndarray:
    # product of two reflections: orientation preserving, sends pole to e4
    e4 = np.array([0.0, 0.0, 0.0, 1.0])
    v = pole - e4
    if np.linalg.norm(v) < 1e-14:
        return np.eye(4)
    v /= np.linalg.norm(v)
    H = np.eye(4) - 2.0 * np.outer(v, v)
    F = np.diag([-1.0, 1.0, 1.0, 1.0])
    return F @ H


def _stereographic(x: np.ndarray, R: np.ndarray) -> np.ndarray:
    y = x @ R.T
    return y[:, :3] / (1.0 - y[:, 3:4])


def _choose_pole(curves: list[np.ndarray], rng: np.random.Generator, candidates: int = 64) -> np.ndarray:
    pts = np.vstack(curves)
    cand = rng.standard_normal((candidates, 4))
    cand /= np.linalg.norm(cand, axis=1, keepdims=True)
    # maximise the minimal distance to the curves so the projection stays bounded
    best, best_d = cand[0], -1.0
    for c in cand:
        d = np.min(np.linalg.norm(pts - c, axis=1))
        if d > best_d:
            best, best_d = c, d
    return best


def _gauss_sum(a: np.ndarray, b: np.ndarray) -> float:
    da, db = np.diff(a, axis=0), np.diff(b, axis=0)
    ma, mb = 0.5 * (a[1:] + a[:-1]), 0.5 * (b[1:] + b[:-1])
    total = 0.0
    for i in range(0, len(ma), _BLOCK):
        sl = slice(i, i + _BLOCK)
        rx = ma[sl, 0, None] - mb[None, :, 0]
        ry = ma[sl, 1, None] - mb[None, :, 1]
        rz = ma[sl, 2, None] - mb[None, :, 2]
        ax, ay, az = (da[sl, k, None] for k in range(3))
        bx, by, bz = db[:, 0], db[:, 1], db[:, 2]
        # (da x db) . r
        triple = (ay * bz - az * by) * rx + (az * bx - ax * bz) * ry + (ax * by - ay * bx) * rz
        dist2 = rx * rx + ry * ry + rz * rz
        total += float(np.sum(triple / (dist2 * np.sqrt(dist2))))
    return total / (4.0 * math.pi)


def _min_distance(a: np.ndarray, b: np.ndarray) -> float:
    best = np.inf
    for i in range(0, len(a), _BLOCK):
        d2 = np.sum(a[i:i + _BLOCK, None, :] ** 2, axis=2) + np.sum(b * b, axis=1)[None, :] \
            - 2.0 * a[i:i + _BLOCK] @ b.T
        best = min(best, float(d2.min()))
    return math.sqrt(max(best, 0.0))


@lru_cache(maxsize=1)
def _orientation() -> float:
    h1, h2 = core_circle(1, 1, 512), core_circle(2, 1, 512)
    R = _rotation_to_north(_choose_pole([h1.samples, h2.samples], np.random.default_rng(0)))
    raw = _gauss_sum(_stereographic(h1.samples, R), _stereographic(h2.samples, R))
    return 1.0 if raw > 0 else -1.0


@dataclass(frozen=True)
class LinkResult:
    value: int
    raw: float
    residual: float
    min_distance: float


def linking_number(a: S3Curve, b: S3Curve, *, seed: int = 0) -> LinkResult:
    """Linking number of two disjoint closed curves in ``S^3``."""
    dmin = _min_distance(a.samples, b.samples)
    if dmin < MIN_SEPARATION:
        raise LinkingError(f"curves too close (min sample distance {dmin:.2e})")
    R = _rotation_to_north(_choose_pole([a.samples, b.samples], np.random.default_rng(seed)))
    raw = _orientation() * _gauss_sum(_stereographic(a.samples, R), _stereographic(b.samples, R))
    value = int(round(raw))
    residual = abs(raw - value)
    if residual > MAX_RESIDUAL:
        raise LinkingError(f"rounding residual {residual:.3f} too large; refine the sampling")
    return LinkResult(value, raw, residual, dmin)


# same-side pairs link +1, mixed pairs -1
LINK_TABLE = {
    ("E+", "D+"): 1,
    ("E-", "D-"): 1,
    ("E+", "E-"): -1,
    ("E+", "D-"): -1,
    ("D+", "E-"): -1,
    ("D+", "D-"): -1,
}


@dataclass
class LinkTableReport:
    values: dict
    residuals: dict
    sigma: int
    refined_stable: bool
    matches: bool
    mismatches: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.matches and self.refined_stable


def verify_link_table(samples: int = DEFAULT_SAMPLES, check_refinement: bool = True) -> LinkTableReport:
    """Recompute the six pairwise linking numbers of the model link.

    The table is matched up to one global sign ``sigma``.
    """
    curves = model_link(samples)
    values, residuals = {}, {}
    for pair in LINK_TABLE:
        res = linking_number(curves[pair[0]], curves[pair[1]])
        values[pair], residuals[pair] = res.value, res.residual
    first = next(iter(LINK_TABLE))
    sigma = 1 if values[first] == LINK_TABLE[first] else -1
    mismatches = [pair for pair, v in LINK_TABLE.items() if values[pair] != sigma * v]
    stable = True
    if check_refinement:
        fine = model_link(2 * samples)
        stable = all(linking_number(fine[a], fine[b]).value == values[(a, b)] for a, b in LINK_TABLE)
    return LinkTableReport(values, residuals, sigma, stable, not mismatches, mismatches)
