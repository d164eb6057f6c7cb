"""Direct integration of the wall system.

Between events the smooth Hamiltonian flow is advanced by an embedded
8(5,3) Runge-Kutta method with dense output. Wall crossings and section
crossings are located on the dense output by bracketed root finding; an
impact reflects the momentum about the wall normal and restarts the stepper.

The Poincare section is p1 = 0 with dp1/dt < 0 (the right turning point of
the q1 oscillation). The wall sits on the left.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import DOP853
from scipy.optimize import brentq

from .map_core import DomainError, wrap_angle
from .systems import SystemSpec

GRAZING_TOL = 1e-9
EVENT_XTOL = 1e-13
DEFAULT_TOL = 1e-11


class FlowError(RuntimeError):
    """Base class for integration failures."""


class StepSizeError(FlowError):
    pass


class MultipleImpactError(FlowError):
    pass


class MaxTimeExceeded(FlowError):
    pass


@dataclass(frozen=True)
class FlowState:
    q1: float
    p1: float
    q2: float
    p2: float
    t: float = 0.0

    @property
    def y(self) -> np.ndarray:
        return np.array([self.q1, self.p1, self.q2, self.p2])

    @classmethod
    def from_array(cls, y, t: float = 0.0) -> "FlowState":
        return cls(float(y[0]), float(y[1]), float(y[2]), float(y[3]), float(t))


@dataclass(frozen=True)
class ImpactEvent:
    t: float
    before: FlowState
    after: FlowState
    normal_momentum: float
    grazing: bool = False


@dataclass(frozen=True)
class SectionCrossing:
    state: FlowState
    impact_flag: bool
    return_time: float
    events: tuple[ImpactEvent, ...] = ()
    grazing_flag: bool = False
    energy_error: float = 0.0
    min_clearance: float = math.inf


def reflect(spec: SystemSpec, y: np.ndarray) -> tuple[np.ndarray, float]:
    """Elastic reflection p <- p - 2 (p.n) n about the wall normal."""
    n1, n2 = spec.wall_normal
    pn = y[1] * n1 + y[3] * n2
    out = y.copy()
    out[1] = y[1] - 2.0 * pn * n1
    out[3] = y[3] - 2.0 * pn * n2
    return out, pn


# ------------------------------------------------------------------ core loop

@dataclass
class _Run:
    t: float
    y: np.ndarray
    events: list = field(default_factory=list)
    crossing_t: float | None = None
    min_clearance: float = math.inf
    steps: int = 0


def _make_solver(spec, t0, y0, t_bound, tol, first_step=None):
    return DOP853(spec.rhs, t0, np.asarray(y0, dtype=float), t_bound,
                  rtol=tol, atol=tol, first_step=first_step)


def _root(fn, a, b):
    fa, fb = fn(a), fn(b)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    return brentq(fn, a, b, xtol=EVENT_XTOL, rtol=4 * np.finfo(float).eps)


def _wall_hit(spec, sol, t0, t1, y0, y1):
    """Earliest time in (t0, t1] at which the gap g turns negative, or None."""
    g0 = spec.wall_gap(y0)
    if g0 < 0.0:
        return None
    g = lambda t: spec.wall_gap(sol(t))  # noqa: E731
    if spec.wall_gap(y1) < 0.0:
        # a dip and re-dip inside one step is ruled out by the step size
        return _root(g, t0, t1)
    gd0, gd1 = spec.wall_gap_rate(y0), spec.wall_gap_rate(y1)
    if gd0 < 0.0 < gd1:
        tm = _root(lambda t: spec.wall_gap_rate(sol(t)), t0, t1)
        if g(tm) < 0.0:
            return _root(g, t0, tm)
    return None


def _gap_minimum(spec, sol, t0, t1, y0, y1):
    """Value of g at an interior minimum inside the step, or None."""
    gd0, gd1 = spec.wall_gap_rate(y0), spec.wall_gap_rate(y1)
    if gd0 < 0.0 <= gd1:
        tm = _root(lambda t: spec.wall_gap_rate(sol(t)), t0, t1)
        return spec.wall_gap(sol(tm))
    return None


def _advance(spec: SystemSpec, t0: float, y0, tol: float, t_bound: float, *,
             walls: bool, section: bool, max_impacts: int | None = None,
             clearance: bool = False, armed: bool = False) -> _Run:
    """Integrate from (t0, y0) toward t_bound.

    Stops at the first armed section crossing when ``section`` is set. The
    section arms once p1 < 0 has been seen, so a start on the section itself
    is not reported.
    """
    run = _Run(t0, np.asarray(y0, dtype=float).copy())
    forward = t_bound >= t0
    solver = _make_solver(spec, t0, run.y, t_bound, tol)
    impacts = 0
    while True:
        if solver.status == "finished":
            run.t, run.y = solver.t, solver.y.copy()
            return run
        t_old, y_old = solver.t, solver.y.copy()
        msg = solver.step()
        if solver.status == "failed":
            raise StepSizeError(f"integration failed at t={t_old:.17g}, y={y_old}: {msg}")
        run.steps += 1
        t_new, y_new = solver.t, solver.y
        sol = solver.dense_output()

        t_sec = None
        if section and forward:
            if armed and y_old[1] > 0.0 >= y_new[1]:
                t_sec = _root(lambda t: sol(t)[1], t_old, t_new)
            elif y_new[1] < 0.0:
                armed = True
        t_imp = _wall_hit(spec, sol, t_old, t_new, y_old, y_new) if walls else None
        if clearance:
            tc = t_new if t_sec is None else t_sec
            gm = _gap_minimum(spec, sol, t_old, tc, y_old, sol(tc))
            for v in (gm, spec.wall_gap(sol(tc))):
                if v is not None and v < run.min_clearance:
                    run.min_clearance = v

        if t_imp is not None and (t_sec is None or t_imp < t_sec):
            yb = sol(t_imp)
            ya, pn = reflect(spec, yb)
            graze = abs(pn) < GRAZING_TOL
            if graze:
                ya = yb
            run.events.append(ImpactEvent(t_imp, FlowState.from_array(yb, t_imp),
                                          FlowState.from_array(ya, t_imp), pn, graze))
            if not graze:
                impacts += 1
                if max_impacts is not None and impacts > max_impacts:
                    raise MultipleImpactError(
                        f"{impacts} impacts before the next section crossing (t={t_imp:.17g})")
                armed = True
                solver = _make_solver(spec, t_imp, ya, t_bound, tol, first_step=None)
                continue
        if t_sec is not None:
            run.crossing_t = t_sec
            run.t, run.y = t_sec, sol(t_sec)
            return run


# ------------------------------------------------------------------ public API

def integrate_smooth(s: FlowState, spec: SystemSpec, t_end: float,
                     tol: float = DEFAULT_TOL) -> FlowState:
    """Smooth flow of H_int + eps_r*V_c, ignoring the wall; t_end may precede s.t."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    if t_end == s.t:
        return s
    run = _advance(spec, s.t, s.y, tol, t_end, walls=False, section=False)
    return FlowState.from_array(run.y, run.t)


def integrate_impact(s: FlowState, spec: SystemSpec, t_end: float,
                     tol: float = DEFAULT_TOL) -> tuple[FlowState, list[ImpactEvent]]:
    """Wall flow up to t_end with elastic impacts; returns the final state and the impact log."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    if spec.wall_gap(s.y) < -1e-10:
        raise DomainError("initial state lies behind the wall")
    if t_end < s.t:
        raise ValueError("impact flow integrates forward only")
    if t_end == s.t:
        return s, []
    run = _advance(spec, s.t, s.y, tol, t_end, walls=True, section=False)
    return FlowState.from_array(run.y, run.t), run.events


def return_map(s0: FlowState, spec: SystemSpec, tol: float = DEFAULT_TOL,
               t_max: float = 1e3, walls: bool = True,
               clearance: bool = False) -> SectionCrossing:
    """Next crossing of p1 = 0 with dp1/dt < 0.

    With ``walls=False`` the smooth flow is used (the continuation through
    tangency from the non-impacting side).
    """
    if walls and spec.wall_gap(s0.y) < -1e-10:
        raise DomainError("initial state lies behind the wall")
    e0 = spec.energy(s0.y)
    run = _advance(spec, s0.t, s0.y, tol, s0.t + t_max, walls=walls, section=True,
                   max_impacts=1, clearance=clearance)
    if run.crossing_t is None:
        raise MaxTimeExceeded(f"no section crossing within t_max={t_max}")
    st = FlowState.from_array(run.y, run.t)
    real = [e for e in run.events if not e.grazing]
    return SectionCrossing(st, bool(real), run.t - s0.t, tuple(run.events),
                           any(e.grazing for e in run.events),
                           abs(spec.energy(run.y) - e0), run.min_clearance)


def trajectory(s: FlowState, spec: SystemSpec, t_end: float, dt: float,
               tol: float = DEFAULT_TOL) -> np.ndarray:
    """Uniformly sampled wall-flow trajectory with event rows.

    Columns t, q1, p1, q2, p2, flag where flag is 0 for samples, 1 for the
    pre-impact state, 2 for the post-impact state, 3 for a grazing contact.
    """
    rows = []
    t, st = s.t, s
    grid = np.arange(s.t, t_end + 0.5 * dt, dt)
    for tk in grid:
        if tk > t:
            st, evs = integrate_impact(st, spec, float(tk), tol)
            for e in evs:
                if e.grazing:
                    rows.append([e.t, *e.before.y, 3])
                else:
                    rows.append([e.t, *e.before.y, 1])
                    rows.append([e.t, *e.after.y, 2])
            t = tk
        rows.append([st.t, *st.y, 0])
    return np.asarray(rows, dtype=float)


# ------------------------------------------------------------------ coordinates

def _harmonic(spec: SystemSpec) -> tuple[float, float]:
    w = spec.V2.harmonic_omega
    if w is None:
        raise DomainError("action-angle coordinates require a harmonic V2")
    return w, spec.V2.shift


def action_angle_q2(q2: float, p2: float, spec: SystemSpec) -> tuple[float, float]:
    """(theta, I) of the q2 oscillator; theta advances at rate omega and p2 -> -p2 maps theta -> -theta."""
    w, c = _harmonic(spec)
    x = q2 - c
    I = p2 * p2 / (2.0 * w) + 0.5 * w * x * x
    if I == 0.0:
        raise DomainError("angle undefined at I = 0")
    return wrap_angle(math.atan2(-p2, w * x)), I


def action_angle_inverse(theta: float, I: float, spec: SystemSpec) -> tuple[float, float]:
    w, c = _harmonic(spec)
    if I < 0:
        raise DomainError("action must be non-negative")
    return c + math.sqrt(2.0 * I / w) * math.cos(theta), -math.sqrt(2.0 * I * w) * math.sin(theta)


def section_q1(q2: float, p2: float, spec: SystemSpec) -> float:
    """Right turning point q1 on the energy surface with p1 = 0 at the given (q2, p2)."""
    E1 = spec.E - spec.V2(q2) - 0.5 * p2 * p2
    poly = spec.V1.poly() + spec.eps_r * spec.Vc.poly_in_q1(q2) - E1
    roots = poly.roots()
    real = np.sort(roots[np.abs(roots.imag) <= 1e-9 * np.maximum(1.0, np.abs(roots))].real)
    if real.size == 0:
        raise DomainError(f"no section point: energy surface misses p1 = 0 at q2={q2}")
    r = float(real[-1])
    dpoly = poly.deriv()
    for _ in range(3):
        d = dpoly(r)
        if d == 0.0:
            break
        r -= poly(r) / d
    if not dpoly(r) > 0.0:
        raise DomainError("largest root is not a transversal right turning point")
    return r


def section_point(theta: float, I: float, spec: SystemSpec, t: float = 0.0) -> FlowState:
    q2, p2 = action_angle_inverse(theta, I, spec)
    return FlowState(section_q1(q2, p2, spec), 0.0, q2, p2, t)


def section_coords(s: FlowState, spec: SystemSpec) -> tuple[float, float]:
    return action_angle_q2(s.q2, s.p2, spec)


def return_map_theta_I(theta: float, I: float, spec: SystemSpec, tol: float = DEFAULT_TOL,
                       walls: bool = True) -> tuple[float, float, SectionCrossing]:
    """One return in section coordinates: (theta_bar, I_bar, crossing)."""
    c = return_map(section_point(theta, I, spec), spec, tol, walls=walls)
    th, Ib = section_coords(c.state, spec)
    return th, Ib, c


# ------------------------------------------------------------------ dumps

def write_trajectory_csv(path, rows: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "q1", "p1", "q2", "p2", "event_flag"])
        for r in rows:
            w.writerow([format(v, ".17g") for v in r[:5]] + [int(r[5])])
