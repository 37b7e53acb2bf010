"""Closed geodesics of the model sphere, one S^1-family per coprime ``(p, q)``.

The family with rotation ratio ``p/q`` meets the Birkhoff annulus ``q``
times at the ``eta`` solving ``f(eta) = L p / q``.  Its length is
``q * tau(eta)`` and its unit-tangent lift to ``S^3`` has twice that action.
Homology classes are 4-tuples of linking numbers with the lifts of the
equators ``E+``, ``E-`` and the minimal parallels ``D+``, ``D-``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from functools import reduce

from .geodesic_flow import DEFAULT_ATOL, DEFAULT_RTOL, flow, state_on_section
from .profile import Profile
from .return_map import (
    EtaSolver,
    f_quadrature,
    return_data_flow,
    tau_quadrature,
    winding_quadrature,
)

__all__ = [
    "CatalogError",
    "HomologyClass",
    "OrbitRecord",
    "Catalog",
    "enumerate_coprime",
    "homology_class",
    "closed_geodesic",
    "catalog",
    "expected_winding",
    "f_target_residual",
    "CLOSURE_TOL",
]

CLOSURE_TOL = 1e-6
SIDE_PLUS = "E+D+"
SIDE_MINUS = "E-D-"


class CatalogError(RuntimeError):
    pass


@dataclass(frozen=True)
class HomologyClass:
    """Linking numbers with the lifts of ``E+``, ``D+``, ``E-``, ``D-``."""

    e_plus: int
    d_plus: int
    e_minus: int
    d_minus: int

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.e_plus, self.d_plus, self.e_minus, self.d_minus)

    @property
    def primitive(self) -> bool:
        return reduce(math.gcd, (abs(v) for v in self.as_tuple())) == 1


@dataclass(frozen=True)
class OrbitRecord:
    p: int
    q: int
    eta: float
    tau: float
    length: float
    lift_action: float
    winding_total: int
    satellite: tuple[int, int]
    side: str
    homology: HomologyClass
    clairaut: float
    closure_residual: float
    method: str = "flow"

    def row(self) -> dict:
        P, Q = self.satellite
        d = {
            "p": self.p, "q": self.q, "eta": self.eta, "K": self.clairaut,
            "length": self.length, "lift_action": self.lift_action,
            "P": P, "Q": Q, "side": self.side,
        }
        for name, v in zip(("lk_E+", "lk_D+", "lk_E-", "lk_D-"), self.homology.as_tuple()):
            d[name] = v
        d["closure_residual"] = self.closure_residual
        return d


def enumerate_coprime(a, b, q_max: int) -> list[tuple[int, int]]:
    """Coprime ``(p, q)`` with ``a < p/q < b`` and ``1 <= q <= q_max``.

    Sorted by ``q`` and then by ``p``, i.e. Farey order within each ``q``.
    """
    a, b = Fraction(a), Fraction(b)
    if not a < b:
        raise ValueError("need a < b")
    out = []
    for q in range(1, q_max + 1):
        p_lo = math.floor(a * q) + 1
        p_hi = math.ceil(b * q) - 1
        out.extend((p, q) for p in range(p_lo, p_hi + 1) if math.gcd(abs(p), q) == 1)
    return out


def homology_class(P: int, Q: int, side: str = SIDE_PLUS) -> HomologyClass:
    """Class of the lift of a ``(P, Q)``-satellite of ``E+ D+`` or ``E- D-``.

    For odd ``P`` the ``E+ D+`` entries are ``(P - 2Q, P - 2Q, -P, -P)``;
    the lift of an even satellite closes after half the parameter range, so
    the entries are halved.  ``E- D-`` swaps the two halves.
    """
    if P < 1 or Q < 0:
        raise ValueError("need P >= 1 and Q >= 0")
    a, b = P - 2 * Q, -P
    if P % 2 == 0:
        a, b = a // 2, b // 2
    if side == SIDE_PLUS:
        return HomologyClass(a, a, b, b)
    if side == SIDE_MINUS:
        return HomologyClass(b, b, a, a)
    raise ValueError(f"unknown side {side!r}")


def expected_winding(p: int, q: int) -> int:
    """Total ``theta`` winding of the ``(p, q)`` family: ``p + q`` for ``p >= 0``, ``p - q`` otherwise."""
    return p + q if p >= 0 else p - q


def _circle_distance(a: float, b: float) -> float:
    d = math.fmod(a - b, 2 * math.pi)
    return abs(math.remainder(d, 2 * math.pi))


def _assemble(p, q, eta, tau, winding, residual, profile, method) -> OrbitRecord:
    P, Q = abs(p) + q, q
    side = SIDE_PLUS if p >= 0 else SIDE_MINUS
    length = q * tau
    return OrbitRecord(
        p=p, q=q, eta=eta, tau=tau, length=length, lift_action=2.0 * length,
        winding_total=winding, satellite=(P, Q), side=side,
        homology=homology_class(P, Q, side), clairaut=-eta * profile.r_min,
        closure_residual=residual, method=method,
    )


def closed_geodesic(
    profile: Profile,
    p: int,
    q: int,
    solver: EtaSolver | None = None,
    *,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> OrbitRecord:
    """Solve, flow and classify the ``(p, q)`` family.

    Closure is checked by flowing for time ``q * tau`` from the annulus and
    measuring ``|ds|`` plus circle distances in ``theta`` and ``beta``.
    """
    if q < 1 or math.gcd(abs(p), q) != 1:
        raise ValueError(f"({p}, {q}) is not a coprime pair with q >= 1")
    sol = (solver or EtaSolver()).solve(profile, Fraction(p, q))
    eta = sol.eta
    if eta == 0.0:
        # meridian family (p = 0, q = 1): analytic, never flowed; winding is
        # the eta -> 0- limit, matching the E+ D+ side it is filed under
        return _assemble(p, q, 0.0, profile.M, expected_winding(p, q), 0.0, profile, "flow")
    tau = return_data_flow(profile, eta, rtol=rtol, atol=atol).tau
    start = state_on_section(profile, 0.0, eta)
    traj = flow(profile, start, q * tau, rtol=rtol, atol=atol)
    end = traj.final
    residual = (
        abs(end.s - start.s)
        + _circle_distance(end.theta, start.theta)
        + _circle_distance(end.beta, start.beta)
    )
    winding = round((end.theta - start.theta) / (2 * math.pi))
    return _assemble(p, q, eta, tau, winding, residual, profile, "flow")


def _closed_geodesic_quadrature(profile: Profile, p: int, q: int, solver: EtaSolver) -> OrbitRecord:
    eta = solver.solve(profile, Fraction(p, q)).eta
    tau = tau_quadrature(profile, eta)
    winding = round(q * winding_quadrature(profile, eta)) if eta != 0.0 else expected_winding(p, q)
    return _assemble(p, q, eta, tau, winding, math.nan, profile, "quadrature")


@dataclass
class Catalog:
    band: tuple[float, float]
    q_max: int
    records: list[OrbitRecord]
    failures: dict = field(default_factory=dict)
    meridian_length: float | None = None

    @property
    def max_tau(self) -> float:
        """The constant ``c`` bounding every return time in the band."""
        return max(r.tau for r in self.records)

    def action_bound_holds(self) -> bool:
        c = self.max_tau
        return all(r.lift_action <= 2 * r.q * c for r in self.records)

    def homology_distinct(self) -> bool:
        classes = [r.homology.as_tuple() for r in self.records]
        return len(set(classes)) == len(classes)

    def to_csv(self, path) -> None:
        rows = [r.row() for r in self.records]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["p", "q"])
            w.writeheader()
            for row in rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})

    def to_json(self, path) -> None:
        doc = {
            "band": list(self.band),
            "q_max": self.q_max,
            "max_tau": self.max_tau if self.records else None,
            "meridian_length": self.meridian_length,
            "records": [
                {**asdict(r), "homology": list(r.homology.as_tuple()), "satellite": list(r.satellite)}
                for r in self.records
            ],
            "failures": {f"{p},{q}": msg for (p, q), msg in self.failures.items()},
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1, allow_nan=True)

    @classmethod
    def from_json(cls, path) -> "Catalog":
        with open(path) as fh:
            doc = json.load(fh)
        records = []
        for r in doc["records"]:
            r = dict(r)
            r["homology"] = HomologyClass(*r["homology"])
            r["satellite"] = tuple(r["satellite"])
            records.append(OrbitRecord(**r))
        failures = {tuple(int(v) for v in k.split(",")): m for k, m in doc.get("failures", {}).items()}
        return cls(tuple(doc["band"]), doc["q_max"], records, failures, doc.get("meridian_length"))


def catalog(
    profile: Profile,
    a,
    b,
    q_max: int,
    *,
    method: str = "flow",
    solver: EtaSolver | None = None,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> Catalog:
    """All coprime families with ``p/q`` in ``(a, b)`` and ``q <= q_max``.

    ``method="flow"`` solves and closes every orbit numerically;
    ``method="quadrature"`` uses the Clairaut integrals only, which is fast
    enough for large censuses.  Failed pairs are collected in
    ``Catalog.failures`` and the remaining records are still returned.
    """
    if method not in ("flow", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    if method == "quadrature":
        solver = solver or EtaSolver(polish=False)
    records, failures = [], {}
    for p, q in enumerate_coprime(a, b, q_max):
        try:
            if method == "flow":
                records.append(closed_geodesic(profile, p, q, solver, rtol=rtol, atol=atol))
            else:
                records.append(_closed_geodesic_quadrature(profile, p, q, solver))
        except Exception as exc:  # aggregated per pair
            failures[(p, q)] = f"{type(exc).__name__}: {exc}"
    return Catalog((float(a), float(b)), q_max, records, failures, profile.M)


def f_target_residual(profile: Profile, record: OrbitRecord) -> float:
    """``|f(eta) - L p/q|`` evaluated by quadrature, for quick audits."""
    return abs(f_quadrature(profile, record.eta) - profile.circumference * record.p / record.q)
