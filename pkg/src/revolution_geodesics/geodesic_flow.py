"""Geodesic (Reeb) flow of the model sphere in ``(s, theta, beta)`` coordinates.

``s`` is the profile arclength, ``theta`` the rotation angle and ``beta`` the
angle between the velocity and the parallel through the base point.  The
equations of motion are

    s'     = sin(beta)
    beta'  = r'(s) / r(s) * cos(beta)
    theta' = cos(beta) / r(s)

and ``K = r(s) cos(beta)`` is conserved.  Angles are integrated as unwrapped
reals so that winding numbers can be read off directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import DOP853, solve_ivp

from .profile import Profile

__all__ = [
    "FlowError",
    "PoleApproachError",
    "GeodesicState",
    "SectionCrossing",
    "GeodesicTrajectory",
    "vector_field",
    "clairaut",
    "flow",
    "flow_batch",
    "state_on_section",
    "next_crossing",
]

POLE_GUARD = 1e-4
DEFAULT_RTOL = 1e-12
DEFAULT_ATOL = 1e-13
EVENT_TOL = 1e-12
BATCH_RTOL = 1e-12
BATCH_ATOL = 1e-13


class FlowError(RuntimeError):
    """Integration failed (step underflow, missing section crossing, ...)."""


class PoleApproachError(FlowError):
    """The trajectory came within the pole guard radius, where theta' blows up."""


@dataclass(frozen=True)
class GeodesicState:
    s: float
    theta: float
    beta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.s, self.theta, self.beta], dtype=float)


@dataclass(frozen=True)
class SectionCrossing:
    """A crossing of the minimal parallel ``s = M/4``.

    ``x`` is arclength along the parallel (``r_min * theta``, unwrapped),
    ``eta = -cos(beta)`` and ``direction`` the sign of ``s'``.
    """

    t: float
    x: float
    eta: float
    direction: int
    theta: float
    beta: float
    s: float


@dataclass
class GeodesicTrajectory:
    t: np.ndarray
    states: np.ndarray  # columns: s, theta, beta
    clairaut: float
    clairaut_drift: float
    crossings: list[SectionCrossing] = field(default_factory=list)

    @property
    def final(self) -> GeodesicState:
        s, theta, beta = self.states[-1]
        return GeodesicState(float(s), float(theta), float(beta))

    def to_csv(self, path, profile: Profile) -> None:
        r = profile.r(self.states[:, 0])
        K = r * np.cos(self.states[:, 2])
        table = np.column_stack([self.t, self.states, K])
        np.savetxt(path, table, delimiter=",", header="t,s,theta,beta,K", comments="")


def _guarded_rdr(profile: Profile, s: float) -> tuple[float, float]:
    if not 0.0 < s < profile.half_length:
        raise PoleApproachError(f"trajectory left (0, M/2): s = {s}")
    r, dr = profile.rdr(s)
    if r < POLE_GUARD:
        raise PoleApproachError(f"trajectory reached r = {r:.3g} < {POLE_GUARD} (near a pole)")
    return r, dr


def vector_field(profile: Profile, state: GeodesicState) -> tuple[float, float, float]:
    """Return ``(s', beta', theta')`` at ``state``."""
    r, dr = _guarded_rdr(profile, state.s)
    sb, cb = math.sin(state.beta), math.cos(state.beta)
    return sb, dr / r * cb, cb / r


def clairaut(profile: Profile, state: GeodesicState) -> float:
    return float(profile.r(state.s)) * math.cos(state.beta)


def _rhs(profile: Profile):
    def fun(t, y):
        r, dr = _guarded_rdr(profile, y[0])
        sb, cb = math.sin(y[2]), math.cos(y[2])
        return np.array([sb, cb / r, dr / r * cb])

    return fun


def _bisect_crossing(sol, t_lo: float, t_hi: float, level: float, tol: float) -> float:
    g_lo = sol(t_lo)[0] - level
    for _ in range(200):
        if t_hi - t_lo <= tol:
            break
        t_mid = 0.5 * (t_lo + t_hi)
        if t_mid <= t_lo or t_mid >= t_hi:
            break
        g_mid = sol(t_mid)[0] - level
        if g_mid == 0.0:
            return t_mid
        if (g_mid < 0) == (g_lo < 0):
            t_lo, g_lo = t_mid, g_mid
        else:
            t_hi = t_mid
    return 0.5 * (t_lo + t_hi)


def _crossing(profile: Profile, t: float, y: np.ndarray, direction: int) -> SectionCrossing:
    s, theta, beta = y
    return SectionCrossing(
        t=float(t),
        x=profile.r_min * float(theta),
        eta=-math.cos(beta),
        direction=direction,
        theta=float(theta),
        beta=float(beta),
        s=float(s),
    )


def _advance(profile: Profile, t0: float, y0: np.ndarray, t1: float, rtol: float, atol: float) -> np.ndarray:
    solver = DOP853(_rhs(profile), t0, y0, t1, rtol=rtol, atol=atol)
    while solver.status == "running":
        msg = solver.step()
        if solver.status == "failed":
            raise FlowError(f"integrator failed: {msg}")
    return solver.y.copy()


def _integrate(
    profile: Profile,
    y0: np.ndarray,
    t_end: float,
    rtol: float,
    atol: float,
    event_tol: float,
    stop_on_upward: bool = False,
):
    # The profile is only C^2 at the cap junctions and at M/4, so steps are
    # never allowed to straddle those levels: each crossing is located on the
    # dense output, the step is redone up to it and the solver restarts there.
    breaks = np.array([math.pi / 2, profile.s_min, profile.half_length - math.pi / 2])
    section = 1
    ts = [0.0]
    ys = [y0.copy()]
    crossings: list[SectionCrossing] = []
    g_old = y0[0] - breaks
    solver = DOP853(_rhs(profile), 0.0, y0, t_end, rtol=rtol, atol=atol)
    while solver.status == "running":
        t_prev, y_prev = solver.t, solver.y.copy()
        msg = solver.step()
        if solver.status == "failed":
            raise FlowError(f"integrator failed: {msg}")
        g_new = solver.y[0] - breaks
        up = (g_old < 0) & (g_new >= 0)
        down = (g_old > 0) & (g_new <= 0)
        hit = np.flatnonzero(up | down)
        if hit.size == 0:
            ts.append(solver.t)
            ys.append(solver.y.copy())
            g_old = g_new
            continue
        sol = solver.dense_output()
        times = [_bisect_crossing(sol, t_prev, solver.t, breaks[i], event_tol) for i in hit]
        k = int(np.argmin(times))
        i, t_b = int(hit[k]), times[k]
        direction = 1 if up[i] else -1
        if t_b - t_prev > 1e-13:
            y_b = _advance(profile, t_prev, y_prev, t_b, rtol, atol)
        else:
            y_b = np.asarray(sol(t_b), dtype=float)
        ts.append(t_b)
        ys.append(y_b)
        if i == section:
            crossings.append(_crossing(profile, t_b, y_b, direction))
            if stop_on_upward and direction == 1:
                return np.array(ts), np.array(ys), crossings, True
        g_old = y_b[0] - breaks
        g_old[i] = direction * np.inf
        if t_end - t_b <= 1e-13:
            break
        solver = DOP853(_rhs(profile), t_b, y_b, t_end, rtol=rtol, atol=atol)
    return np.array(ts), np.array(ys), crossings, False


def flow(
    profile: Profile,
    start: GeodesicState,
    t_end: float,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    event_tol: float = EVENT_TOL,
) -> GeodesicTrajectory:
    """Integrate the geodesic equations from ``start`` up to time ``t_end``.

    Crossings of the minimal parallel are located by sign changes of
    ``s - M/4`` between accepted steps and refined by bisection on the
    step's dense output.
    """
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    y0 = start.as_array()
    K0 = clairaut(profile, start)
    ts, ys, crossings, _ = _integrate(profile, y0, t_end, rtol, atol, event_tol)
    K = profile.r(ys[:, 0]) * np.cos(ys[:, 2])
    return GeodesicTrajectory(
        t=ts,
        states=ys,
        clairaut=K0,
        clairaut_drift=float(np.max(np.abs(K - K0))),
        crossings=crossings,
    )


_MIN_SPEED = 0.05


class _BatchDOP853(DOP853):
    """DOP853 whose step control uses the worst single trajectory.

    The stock error norm is an RMS over all ``3n`` components, which lets
    one trajectory's local error exceed the tolerance by about ``sqrt(3n)``.

    Shared steps cannot restart at the profile's ``C^2`` levels ``breaks``,
    and a step straddling one has a low-order error the estimate misses.
    Capping the step by each trajectory's distance to the nearest break
    over its speed ``|ds/dt|`` keeps steps from crossing one until they are
    shorter than ``kink_step``.
    """

    def __init__(self, fun, t0, y0, t_bound, breaks=(), kink_step=1e-2, **kw):
        super().__init__(fun, t0, y0, t_bound, **kw)
        self._breaks = np.asarray(breaks, dtype=float)
        self._kink_step = kink_step
        self._n = self.y.size // 3
        self._base_max_step = self.max_step

    def _step_impl(self):
        if self._breaks.size:
            n = self._n
            d = np.min(np.abs(self.y[:n, None] - self._breaks), axis=1)
            # distance over speed |ds/dt| = |sin beta|, with a floor for slow passes
            reach = np.min(d / np.maximum(np.abs(np.sin(self.y[2 * n:])), _MIN_SPEED))
            self.max_step = min(self._base_max_step, max(reach, self._kink_step))
        return super()._step_impl()

    def _estimate_error_norm(self, K, h, scale):
        err5 = (np.dot(K.T, self.E5) / scale).reshape(3, -1)
        err3 = (np.dot(K.T, self.E3) / scale).reshape(3, -1)
        e5 = np.sum(err5**2, axis=0)
        e3 = np.sum(err3**2, axis=0)
        denom = e5 + 0.01 * e3
        live = denom > 0
        if not np.any(live):
            return 0.0
        return float(np.max(np.abs(h) * e5[live] / np.sqrt(3.0 * denom[live])))


def flow_batch(
    profile: Profile,
    starts: np.ndarray,
    t_end: float,
    rtol: float = BATCH_RTOL,
    atol: float = BATCH_ATOL,
    n_checkpoints: int = 201,
    kink_step: float = 1e-2,
):
    """Flow many initial conditions at once (rows of ``starts`` = s, theta, beta).

    Returns ``(t, states, drift)`` where ``states`` has shape
    ``(n_checkpoints, n, 3)`` and ``drift`` is the per-trajectory maximal
    Clairaut deviation over the checkpoints.  All trajectories share one
    adaptive step sequence, controlled by the worst trajectory.
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    n = starts.shape[0]

    def fun(t, y):
        s, beta = y[:n], y[2 * n:]
        r, dr = profile.rdr_many(s)
        # r < 0 outside (0, M/2), so this also catches trajectories leaving the chart
        if r.min() < POLE_GUARD:
            raise PoleApproachError("batch trajectory reached the pole guard")
        cb = np.cos(beta)
        return np.concatenate([np.sin(beta), cb / r, dr / r * cb])

    y0 = np.concatenate([starts[:, 0], starts[:, 1], starts[:, 2]])
    t_eval = np.linspace(0.0, t_end, n_checkpoints)
    breaks = (math.pi / 2, profile.s_min, profile.half_length - math.pi / 2)
    sol = solve_ivp(fun, (0.0, t_end), y0, method=_BatchDOP853, rtol=rtol, atol=atol, t_eval=t_eval,
                    breaks=breaks, kink_step=kink_step)
    if not sol.success:
        raise FlowError(sol.message)
    states = sol.y.reshape(3, n, -1).transpose(2, 1, 0)
    K = profile.r(states[:, :, 0]) * np.cos(states[:, :, 2])
    drift = np.max(np.abs(K - K[0]), axis=0)
    return sol.t, states, drift


def state_on_section(profile: Profile, x: float, eta: float) -> GeodesicState:
    """State on the Birkhoff annulus at ``(x, eta)``; ``beta`` lies in ``(0, pi)``."""
    if not -1.0 < eta < 1.0:
        raise ValueError(f"eta must lie in (-1, 1), got {eta}")
    return GeodesicState(profile.s_min, x / profile.r_min, math.acos(-eta))


def next_crossing(
    profile: Profile,
    x: float,
    eta: float,
    *,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    horizon: float | None = None,
) -> SectionCrossing:
    """First return to the Birkhoff annulus (upward crossing of ``s = M/4``).

    The returned crossing has ``t`` equal to the return time and ``x`` the
    unwrapped arclength position.  ``eta = 0`` (a meridian) is handled
    analytically: return time ``M`` and no displacement.
    """
    if eta == 0.0:
        return SectionCrossing(
            t=profile.M, x=x, eta=0.0, direction=1,
            theta=x / profile.r_min, beta=math.pi / 2, s=profile.s_min,
        )
    start = state_on_section(profile, x, eta)
    horizon = horizon if horizon is not None else 200.0 * profile.M
    _, _, crossings, found = _integrate(
        profile, start.as_array(), horizon, rtol, atol, EVENT_TOL, stop_on_upward=True
    )
    if not found:
        raise FlowError(f"no return to the annulus within t = {horizon} (eta = {eta})")
    return crossings[-1]
