"""Closed-form fixed points of the truncated tangency map and their bifurcations.

A fixed point sits at a zero phi* of the forcing with an action K* that closes
the rotation, omega + tau*K* - alpha*sqrt(-K*)*[K*<0] = 2*pi*j. For each j there
is a positive branch (K* > 0) and up to two negative branches obtained from the
quadratic in sqrt(-K*).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .map_core import DomainError, MapParams, PhasePoint, TWO_PI, ttm_step, wrap_angle

PARABOLIC_TOL = 1e-12


class Branch(str, Enum):
    POS = "POS"
    NEG_MINUS = "NEG_MINUS"
    NEG_PLUS = "NEG_PLUS"


class Stability(str, Enum):
    CENTER = "CENTER"
    SADDLE = "SADDLE"
    SADDLE_NEG_MULTIPLIERS = "SADDLE_NEG_MULTIPLIERS"
    PARABOLIC = "PARABOLIC"


@dataclass(frozen=True)
class FixedPointRecord:
    phi_star: float
    K_star: float
    branch: Branch
    j: int
    trace: float | None = None
    stability: Stability | None = None
    on_singularity: bool = False


def branch_positive(j: int, omega: float, tau: int) -> float | None:
    """K+* = (2 pi j - omega)/tau if positive, 0 exactly at omega = 2 pi j, else None."""
    if omega == TWO_PI * j:
        return 0.0
    K = (TWO_PI * j - omega) / tau
    return K if K > 0.0 else None


def branch_negative(j: int, omega: float, tau: int, alpha: float) -> list[tuple[float, Branch]]:
    """Valid negative-K fixed points of branch j as (K*, branch) pairs."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    delta = omega - TWO_PI * j
    out: list[tuple[float, Branch]] = []
    if tau == 1:
        if delta >= 0.0:
            # sqrt(-K) = (alpha/2)(-1 + sqrt(1 + 4 delta/alpha^2)), written without cancellation
            s = 2.0 * delta / (alpha * (1.0 + math.sqrt(1.0 + 4.0 * delta / alpha**2)))
            out.append((-s * s, Branch.NEG_MINUS))
        return out
    if tau != -1:
        raise ValueError("tau must be +1 or -1")
    disc = 1.0 - 4.0 * delta / alpha**2
    if -1e-14 < disc < 0.0:
        disc = 0.0
    if disc < 0.0:
        return out
    root = math.sqrt(disc)
    if delta >= 0.0:
        s = 2.0 * delta / (alpha * (1.0 + root))
        out.append((-s * s, Branch.NEG_MINUS))
    s = 0.5 * alpha * (1.0 + root)
    out.append((-s * s, Branch.NEG_PLUS))
    return out


def fixed_point_trace(phi_star: float, K_star: float, m: MapParams) -> float:
    if K_star == 0.0:
        raise DomainError("trace is undefined on the singularity line")
    twist = m.tau + (m.alpha / (2.0 * math.sqrt(-K_star)) if K_star < 0.0 else 0.0)
    return 2.0 + m.epsilon * m.forcing.derivative(phi_star) * twist


def stability_of_trace(trace: float) -> Stability:
    if abs(trace - 2.0) < PARABOLIC_TOL or abs(trace + 2.0) < PARABOLIC_TOL:
        return Stability.PARABOLIC
    if abs(trace) < 2.0:
        return Stability.CENTER
    return Stability.SADDLE if trace > 2.0 else Stability.SADDLE_NEG_MULTIPLIERS


def classify(rec: FixedPointRecord, m: MapParams) -> FixedPointRecord:
    tr = fixed_point_trace(rec.phi_star, rec.K_star, m)
    return replace(rec, trace=tr, stability=stability_of_trace(tr), on_singularity=False)


def period_doubling_omega(j: int, phi_star: float, m: MapParams) -> float:
    """Analytic omega at which the NEG_MINUS center of branch j period-doubles."""
    fp = m.forcing.derivative(phi_star)
    if not fp < 0.0:
        raise ValueError(f"period doubling needs f'(phi*) < 0, got {fp}")
    a = m.epsilon * abs(fp)
    if m.tau == 1:
        shift = a * (1.0 - a / 8.0) / (1.0 - a / 4.0) ** 2
    else:
        shift = a * (1.0 + a / 8.0) / (1.0 + a / 4.0) ** 2
    return TWO_PI * j + m.alpha**2 / 8.0 * shift


def map_residual(rec: FixedPointRecord, m: MapParams) -> float:
    """max(|phi' - phi*| on the circle, |K' - K*|) after one step."""
    p = PhasePoint(rec.phi_star, rec.K_star)
    q = ttm_step(p, m)
    return max(abs(wrap_angle(q.phi - p.phi)), abs(q.K - p.K))


def default_j_window(m: MapParams) -> int:
    """Half-width that covers every multi-valued negative-shear branch."""
    return max(2, math.ceil(m.alpha**2 / (4 * TWO_PI)) + 1)


def enumerate_fixed_points(omega: float, m: MapParams,
                           j_window: int | None = None) -> list[FixedPointRecord]:
    """All fixed points with |j - floor(omega/2pi)| <= j_window, classified.

    Records on the singularity line (omega exactly 2 pi j) are kept once, flagged,
    and left unclassified.
    """
    if j_window is None:
        j_window = default_j_window(m)
    if j_window < 1:
        raise ValueError("j_window must be >= 1")
    j0 = math.floor(omega / TWO_PI)
    out = []
    for phi_star in m.forcing.zeros():
        for j in range(j0 - j_window, j0 + j_window + 1):
            cands: list[tuple[float, Branch]] = []
            kp = branch_positive(j, omega, m.tau)
            if kp is not None:
                cands.append((kp, Branch.POS))
            for K, br in branch_negative(j, omega, m.tau, m.alpha):
                if K == 0.0 and kp == 0.0:
                    continue
                cands.append((K, br))
            for K, br in cands:
                rec = FixedPointRecord(float(phi_star), K, br, j)
                if K == 0.0:
                    out.append(replace(rec, on_singularity=True))
                else:
                    out.append(classify(rec, m))
    return out


@dataclass
class BifurcationScan:
    omega_grid: np.ndarray
    records: list[list[FixedPointRecord]]
    thresholds: dict[str, list[float]] = field(default_factory=dict)


def scan_grid(lo: float, hi: float, step: float) -> np.ndarray:
    """lo, lo+step, ... strictly below hi; empty when hi <= lo."""
    if step <= 0:
        raise ValueError("step must be positive")
    if hi <= lo:
        return np.empty(0)
    n = int(math.ceil((hi - lo) / step - 1e-9))
    return lo + step * np.arange(n)


def bifurcation_thresholds(lo: float, hi: float, m: MapParams) -> dict[str, list[float]]:
    """Threshold omegas falling in [lo, hi)."""
    reach = int(math.ceil(m.alpha**2 / (4 * TWO_PI))) + 2
    js = range(math.floor(lo / TWO_PI) - reach, math.floor(hi / TWO_PI) + 2)
    inside = lambda w: lo <= w < hi  # noqa: E731
    th = {"omega_c": [], "omega_sn": [], "omega_pd_plus": [], "omega_pd_minus": []}
    pd_key = "omega_pd_plus" if m.tau == 1 else "omega_pd_minus"
    zeros = m.forcing.zeros()
    for j in js:
        if inside(TWO_PI * j):
            th["omega_c"].append(TWO_PI * j)
        if m.tau == -1 and inside(TWO_PI * j + m.alpha**2 / 4):
            th["omega_sn"].append(TWO_PI * j + m.alpha**2 / 4)
        if m.epsilon > 0:
            for z in zeros:
                if m.forcing.derivative(z) < 0:
                    w = period_doubling_omega(j, z, m)
                    if inside(w):
                        th[pd_key].append(w)
    return {k: sorted(v) for k, v in th.items()}


def bifurcation_scan(omega_range: tuple[float, float], step: float, m: MapParams,
                     j_window: int | None = None) -> BifurcationScan:
    lo, hi = omega_range
    grid = scan_grid(lo, hi, step)
    records = [enumerate_fixed_points(float(w), m, j_window) for w in grid]
    th = bifurcation_thresholds(lo, hi, m) if grid.size else {
        "omega_c": [], "omega_sn": [], "omega_pd_plus": [], "omega_pd_minus": []}
    return BifurcationScan(grid, records, th)
