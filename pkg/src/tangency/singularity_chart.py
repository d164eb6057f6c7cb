"""Quadrature quantities of the unperturbed wall system and the perturbed singularity curve.

Period integrals use the polynomial structure of V1: on a single-well level set
E1 - V1(q) = (b - q)(q - a) R(q) with R > 0 on [a, b], so after the substitution
q = mid + half*sin(s) the inverse-square-root endpoint singularities cancel
exactly and the integrand becomes 1/sqrt(2 R(q(s))), analytic in s.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial.legendre import leggauss
from scipy.integrate import DOP853, solve_ivp
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from . import flow_engine as fe
from .map_core import TWO_PI, DomainError, Forcing, MapParams, PhasePoint, gs, wrap_angle
from .systems import Potential1D, SystemSpec


class ComponentAmbiguityError(DomainError):
    """The level set {V <= E} is not a single interval."""


@lru_cache(maxsize=None)
def _gl(n: int) -> tuple[np.ndarray, np.ndarray]:
    return leggauss(n)


def _gl_interval(fn, lo: float, hi: float, n: int) -> float:
    x, w = _gl(n)
    mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
    return half * float(np.dot(w, fn(mid + half * x)))


def _adaptive(fn, lo, hi, rel: float = 1e-14, n0: int = 32, n_max: int = 4096) -> float:
    n = n0
    prev = _gl_interval(fn, lo, hi, n)
    while n < n_max:
        n *= 2
        cur = _gl_interval(fn, lo, hi, n)
        if abs(cur - prev) <= rel * abs(cur):
            return cur
        prev = cur
    return prev


# ------------------------------------------------------------------ level sets

@dataclass(frozen=True)
class LevelSet:
    """Single-interval level set a <= q <= b of a polynomial potential at energy E1."""

    E1: float
    a: float
    b: float
    R: Polynomial          # in the local variable x = q - shift
    shift: float

    def Rq(self, q):
        return self.R(np.asarray(q) - self.shift)


def _polish(p: Polynomial, x: float, steps: int = 4) -> float:
    dp = p.deriv()
    for _ in range(steps):
        d = dp(x)
        if d == 0.0:
            break
        x -= p(x) / d
    return x


def turning_points(E1: float, V: Potential1D) -> LevelSet:
    """Turning points of the level set V(q) = E1 and the deflated remainder R."""
    N = E1 - V.poly_local()
    if N.degree() < 2:
        raise DomainError("potential must be at least quadratic")
    roots = N.roots()
    scale = np.maximum(1.0, np.abs(roots))
    real = np.sort(roots[np.abs(roots.imag) <= 1e-10 * scale].real)
    if real.size != 2:
        raise ComponentAmbiguityError(
            f"level set at E1={E1} has {real.size} real turning points; "
            "only a single closed curve is supported")
    xa, xb = (_polish(N, float(r)) for r in real)
    if not xa < xb or not N(0.5 * (xa + xb)) > 0:
        raise ComponentAmbiguityError(f"no bounded allowed interval at E1={E1}")
    # N = -(x - xa)(x - xb) R
    R, _ = divmod(-N, Polynomial([xa * xb, -(xa + xb), 1.0]))
    xs = np.linspace(xa, xb, 33)
    if np.any(R(xs) <= 0):
        raise ComponentAmbiguityError(f"level set at E1={E1} is not a single well")
    return LevelSet(E1, xa + V.shift, xb + V.shift, R, V.shift)


def quad_T1(E1: float, V1: Potential1D, rel: float = 1e-14) -> float:
    """Period 2*int dq/sqrt(2(E1 - V1)) of the closed level set."""
    ls = turning_points(E1, V1)
    mid, half = 0.5 * (ls.a + ls.b), 0.5 * (ls.b - ls.a)
    f = lambda s: 1.0 / np.sqrt(2.0 * ls.Rq(mid + half * np.sin(s)))  # noqa: E731
    return 2.0 * _adaptive(f, -0.5 * math.pi, 0.5 * math.pi, rel)


def quad_dt_travel(E1: float, V1: Potential1D, q1w: float, rel: float = 1e-14) -> float:
    """Time spent beyond the wall q1w (left of the well) by the free oscillation; 0 without impact."""
    if E1 <= V1(q1w):
        return 0.0
    ls = turning_points(E1, V1)
    if not ls.a < q1w < ls.b:
        raise DomainError(f"wall q1w={q1w} outside the level set [{ls.a}, {ls.b}]")
    L = q1w - ls.a
    # q = a + L t^2 removes the endpoint singularity at a
    f = lambda t: 2.0 * math.sqrt(L) / np.sqrt(2.0 * (ls.b - (ls.a + L * t * t)) * ls.Rq(ls.a + L * t * t))  # noqa: E731
    return 2.0 * _adaptive(f, 0.0, 1.0, rel)


# ------------------------------------------------------------------ q2 oscillator

def H2_action(E2: float, V2: Potential1D) -> float:
    """Action of the q2 oscillation at energy E2."""
    w = V2.harmonic_omega
    if w is not None:
        return (E2 - V2.coeffs[0]) / w
    ls = turning_points(E2, V2)
    mid, half = 0.5 * (ls.a + ls.b), 0.5 * (ls.b - ls.a)
    f = lambda s: half * half * np.cos(s) ** 2 * np.sqrt(2.0 * ls.Rq(mid + half * np.sin(s)))  # noqa: E731
    return _adaptive(f, -0.5 * math.pi, 0.5 * math.pi) / math.pi


def H2_of_I(I: float, V2: Potential1D) -> float:
    """Energy of the q2 oscillation with action I."""
    if I < 0:
        raise DomainError("action must be non-negative")
    w = V2.harmonic_omega
    if w is not None:
        return V2.coeffs[0] + w * I
    lo = V2.coeffs[0]
    hi = lo + 1.0
    while H2_action(hi, V2) < I:
        hi = lo + 2.0 * (hi - lo)
    return brentq(lambda e: H2_action(e, V2) - I, lo + 1e-300, hi, xtol=1e-15, rtol=1e-15)


def omega2_of_I(I: float, V2: Potential1D) -> float:
    w = V2.harmonic_omega
    if w is not None:
        return w
    return TWO_PI / quad_T1(H2_of_I(I, V2), V2)


def I_tan(spec: SystemSpec) -> float:
    """Tangency action H2^{-1}(E - V1(q1w))."""
    E2 = spec.E - spec.V1(spec.q1_wall)
    if not E2 > spec.V2.coeffs[0]:
        raise DomainError("E must exceed V1(q1_wall) for a tangent torus to exist")
    return H2_action(E2, spec.V2)


def rotation_Theta(I: float, E: float, spec: SystemSpec) -> float:
    """Unperturbed rotation omega2(I)*(T1(E1) - dt_travel(E1)), E1 = E - H2(I)."""
    E1 = E - H2_of_I(I, spec.V2)
    return omega2_of_I(I, spec.V2) * (quad_T1(E1, spec.V1) - quad_dt_travel(E1, spec.V1, spec.q1_wall))


def _smooth_rotation(I: float, E: float, spec: SystemSpec) -> float:
    return omega2_of_I(I, spec.V2) * quad_T1(E - H2_of_I(I, spec.V2), spec.V1)


@dataclass(frozen=True)
class TwistEstimate:
    value: float
    error: float
    degenerate: bool


def twist_tau(I: float, E: float, spec: SystemSpec, h: float | None = None) -> TwistEstimate:
    """d/dI of the smooth-branch rotation by Richardson-extrapolated central differences."""
    if h is None:
        h = 1e-5 * max(1.0, abs(I))
    if I - h <= 0.0:
        raise DomainError("finite-difference step reaches I = 0")
    F = lambda x: _smooth_rotation(x, E, spec)  # noqa: E731
    try:
        d1 = (F(I + h) - F(I - h)) / (2 * h)
        d2 = (F(I + h / 2) - F(I - h / 2)) / h
    except ComponentAmbiguityError as exc:
        raise DomainError(f"finite-difference step leaves the single-well range: {exc}") from exc
    val = (4.0 * d2 - d1) / 3.0
    err = abs(val - d2)
    # both periods constant: differences are pure rounding noise
    degenerate = abs(val) <= max(10.0 * err, 1e-8)
    return TwistEstimate(val, err, degenerate)


# ------------------------------------------------------------------ profile

@dataclass(frozen=True)
class UnperturbedProfile:
    E: float
    I_tan: float
    T1_tan: float
    omega2_tan: float
    Omega: float
    twist_tan: float
    twist_error: float
    alpha_phys: float
    alpha_rescaled: float
    eps_rescaled: float
    tau_sign: int
    E1_tan: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    def map_params(self, forcing: Forcing | None = None, epsilon: float | None = None) -> MapParams:
        """MapParams in the |twist|-rescaled action k = |tau| K."""
        eps = self.eps_rescaled if epsilon is None else epsilon * abs(self.twist_tan)
        return MapParams(epsilon=eps, alpha=self.alpha_rescaled, omega=wrap_angle(self.Omega),
                         tau=self.tau_sign, forcing=forcing or Forcing())


def unperturbed_profile(spec: SystemSpec, eps: float | None = None) -> UnperturbedProfile:
    Itan = I_tan(spec)
    E1 = spec.V1(spec.q1_wall)
    T1 = quad_T1(E1, spec.V1)
    w2 = omega2_of_I(Itan, spec.V2)
    tw = twist_tau(Itan, spec.E, spec)
    dV = abs(spec.V1.d(spec.q1_wall))
    if dV == 0.0:
        raise DomainError("V1'(q1_wall) = 0: wall at a critical point")
    a_phys = (2.0 * w2) ** 1.5 / dV
    eps = spec.eps_r if eps is None else eps
    if tw.degenerate or tw.value == 0.0:
        a_res, e_res, sgn = a_phys, eps, 1
    else:
        a_res = a_phys / math.sqrt(abs(tw.value))
        e_res = eps * abs(tw.value)
        sgn = 1 if tw.value > 0 else -1
    return UnperturbedProfile(spec.E, Itan, T1, w2, w2 * T1, tw.value, tw.error, a_phys,
                              a_res, e_res, sgn, E1, tw.degenerate)


def gs_eval(K, profile: UnperturbedProfile):
    """Leading-order phase advance in physical action units."""
    return gs(K, profile.alpha_phys, profile.twist_tan)


# ------------------------------------------------------------------ Melnikov

class _TangentQ1:
    """Unperturbed q1 motion from the right turning point at the tangency energy."""

    def __init__(self, spec: SystemSpec, T: float, n_seg: int = 64, n_gl: int = 10,
                 tol: float = 1e-13):
        b = turning_points(spec.V1(spec.q1_wall), spec.V1).b
        V1 = spec.V1
        rhs = lambda t, y: np.array([y[1], -V1.d(y[0])])  # noqa: E731
        x, w = _gl(n_gl)
        edges = np.linspace(0.0, T, n_seg + 1)
        mids, halves = 0.5 * (edges[1:] + edges[:-1]), 0.5 * np.diff(edges)
        self.t = (mids[:, None] + halves[:, None] * x[None, :]).ravel()
        self.w = (halves[:, None] * w[None, :]).ravel()
        sol = solve_ivp(rhs, (0.0, T), [b, 0.0], method="DOP853", rtol=tol, atol=tol,
                        t_eval=self.t)
        self.q1 = sol.y[0]


def melnikov_f(theta, profile: UnperturbedProfile, spec: SystemSpec,
               _cache: dict | None = None):
    """Integral of {I, V_c} = -(p2/omega) dV_c/dq2 along the tangent trajectory from (theta, I_tan)."""
    w = spec.V2.harmonic_omega
    if w is None:
        raise DomainError("melnikov_f requires a harmonic V2")
    key = (id(spec), profile.T1_tan)
    traj = None if _cache is None else _cache.get(key)
    if traj is None:
        traj = _TangentQ1(spec, profile.T1_tan)
        if _cache is not None:
            _cache[key] = traj
    c = spec.V2.shift
    A = math.sqrt(2.0 * profile.I_tan / w)
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    out = np.empty(th.size)
    for k, t0 in enumerate(th):
        ph = t0 + w * traj.t
        q2 = c + A * np.cos(ph)
        p2 = -A * w * np.sin(ph)
        dvc = np.array([spec.Vc.grad(a, b)[1] for a, b in zip(traj.q1, q2)])
        out[k] = float(np.dot(traj.w, -(p2 / w) * dvc))
    return out if np.ndim(theta) else float(out[0])


# ------------------------------------------------------------------ singularity curve

def clearance(theta: float, I: float, spec: SystemSpec, tol: float = 1e-12) -> float:
    """Minimum wall gap along the smooth flow over one return; negative means impacting."""
    c = fe.return_map(fe.section_point(theta, I, spec), spec, tol, walls=False, clearance=True)
    return c.min_clearance


def singularity_action(theta: float, spec: SystemSpec, tol: float = 1e-9,
                       flow_tol: float = 1e-12, I_guess: float | None = None,
                       verify: bool = False) -> float:
    """I_tan^eps(theta): the action whose return touches the wall tangentially."""
    I0 = I_tan(spec) if I_guess is None else I_guess
    g = lambda I: clearance(theta, I, spec, flow_tol)  # noqa: E731
    step = 1e-3 * max(1.0, I0)
    lo, hi = I0 - step, I0 + step
    glo, ghi = g(lo), g(hi)
    for _ in range(60):
        if glo < 0.0 < ghi:
            break
        if glo >= 0.0:
            lo, glo = max(lo - 2 * step, 0.5 * lo), g(max(lo - 2 * step, 0.5 * lo))
        if ghi <= 0.0:
            hi, ghi = hi + 2 * step, g(hi + 2 * step)
        step *= 2
    else:
        raise DomainError(f"could not bracket the tangency at theta={theta}")
    I = brentq(g, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps)
    if verify:
        below = fe.return_map(fe.section_point(theta, I - 10 * tol, spec), spec, flow_tol)
        above = fe.return_map(fe.section_point(theta, I + 10 * tol, spec), spec, flow_tol)
        if below.impact_flag == above.impact_flag:
            raise DomainError(f"bracket at theta={theta} classifies identically "
                              f"(impact={below.impact_flag}) on both sides")
    return I


def tangent_image(theta: float, I: float, spec: SystemSpec,
                  flow_tol: float = 1e-12) -> tuple[float, float]:
    """Forward return of a tangent point, continued through the tangency on the smooth flow."""
    th, Ib, _ = fe.return_map_theta_I(theta, I, spec, flow_tol, walls=False)
    return th, Ib


class PeriodicCurve:
    """Monotone cubic interpolant of a 2 pi periodic graph."""

    def __init__(self, theta, values):
        th = np.asarray(theta, dtype=float)
        v = np.asarray(values, dtype=float)
        order = np.argsort(th)
        th, v = th[order], v[order]
        self.span = (th[0], th[-1])
        self.periodic = th.size >= 4 and (th[0] + TWO_PI - th[-1]) <= 4 * np.max(np.diff(th))
        if self.periodic:
            th = np.concatenate([th - TWO_PI, th, th + TWO_PI])
            v = np.concatenate([v, v, v])
        self._f = PchipInterpolator(th, v, extrapolate=False)

    def __call__(self, theta):
        t = np.asarray(theta, dtype=float)
        if self.periodic:
            t = wrap_angle(t)
        elif np.any(t < self.span[0]) or np.any(t > self.span[1]):
            raise DomainError("angle outside the curve grid (extrapolation)")
        out = self._f(t)
        return float(out) if np.ndim(out) == 0 else out


@dataclass
class SingularityCurve:
    theta: np.ndarray
    I_tan_eps: np.ndarray
    I_tan_image: np.ndarray          # image curve resampled on theta
    melnikov: np.ndarray
    image_theta: np.ndarray          # raw forward images (theta_bar, I_bar)
    image_I: np.ndarray
    tol: float
    eps: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def curve(self) -> PeriodicCurve:
        return PeriodicCurve(self.theta, self.I_tan_eps)

    @property
    def image(self) -> PeriodicCurve:
        return PeriodicCurve(self.image_theta, self.image_I)

    def to_dict(self) -> dict:
        return {"theta": self.theta.tolist(), "I_tan_eps": self.I_tan_eps.tolist(),
                "I_tan_image": self.I_tan_image.tolist(), "melnikov": self.melnikov.tolist(),
                "image_theta": self.image_theta.tolist(), "image_I": self.image_I.tolist(),
                "tol": self.tol, "eps": self.eps, "meta": self.meta}

    @classmethod
    def from_dict(cls, d: dict) -> "SingularityCurve":
        arr = lambda k: np.asarray(d[k], dtype=float)  # noqa: E731
        return cls(arr("theta"), arr("I_tan_eps"), arr("I_tan_image"), arr("melnikov"),
                   arr("image_theta"), arr("image_I"), float(d["tol"]), float(d.get("eps", 0.0)),
                   dict(d.get("meta", {})))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["theta", "I_tan_eps", "I_tan_image", "f"])
            for row in zip(self.theta, self.I_tan_eps, self.I_tan_image, self.melnikov):
                w.writerow([format(float(v), ".17g") for v in row])


def default_theta_grid(n: int = 256) -> np.ndarray:
    return -math.pi + TWO_PI * np.arange(n) / n


def extract_singularity_curve(spec: SystemSpec, theta_grid=None, tol: float = 1e-9,
                              flow_tol: float = 1e-12, with_melnikov: bool = True,
                              verify: bool = False) -> SingularityCurve:
    """Tangency action on a theta grid and its forward image."""
    th = default_theta_grid() if theta_grid is None else np.asarray(theta_grid, dtype=float)
    I0 = I_tan(spec)
    Is = np.empty(th.size)
    img_t = np.empty(th.size)
    img_I = np.empty(th.size)
    guess = I0
    for k, t in enumerate(th):
        Is[k] = singularity_action(float(t), spec, tol, flow_tol, I_guess=guess, verify=verify)
        guess = Is[k]
        img_t[k], img_I[k] = tangent_image(float(t), Is[k], spec, flow_tol)
    image_on_grid = PeriodicCurve(img_t, img_I)(th) if th.size >= 4 else img_I.copy()
    mel = np.zeros(th.size)
    if with_melnikov and spec.V2.harmonic_omega is not None:
        prof = unperturbed_profile(spec)
        mel = np.asarray(melnikov_f(th, prof, spec), dtype=float)
    return SingularityCurve(th, Is, np.asarray(image_on_grid), mel, img_t, img_I, tol,
                            spec.eps_r, {"system": spec.to_dict()})


def symmetry_residual(curve: SingularityCurve, spec: SystemSpec, tol: float | None = None,
                      flow_tol: float = 1e-12) -> np.ndarray:
    """|I_bar(theta_bar) - I_tan^eps(-theta_bar)| per image point, by a direct solve at -theta_bar."""
    tol = curve.tol if tol is None else tol
    res = np.empty(curve.image_theta.size)
    for k, (tb, Ib) in enumerate(zip(curve.image_theta, curve.image_I)):
        res[k] = abs(Ib - singularity_action(-float(tb), spec, tol, flow_tol, I_guess=float(Ib)))
    return res


# ------------------------------------------------------------------ chart

def to_tangency_chart(crossing, curve: SingularityCurve | PeriodicCurve,
                      spec: SystemSpec) -> PhasePoint:
    """(phi, K) = (theta, I - I_tan^eps(theta)) of a section crossing."""
    st = crossing.state if hasattr(crossing, "state") else crossing
    theta, I = fe.section_coords(st, spec)
    f = curve.curve if isinstance(curve, SingularityCurve) else curve
    return PhasePoint(theta, I - f(theta))


def from_tangency_chart(p: PhasePoint, curve: SingularityCurve | PeriodicCurve,
                        spec: SystemSpec) -> fe.FlowState:
    f = curve.curve if isinstance(curve, SingularityCurve) else curve
    return fe.section_point(p.phi, p.K + f(p.phi), spec)


def sine_fit(theta, values, n_modes: int = 5) -> Forcing:
    """Least-squares odd Fourier series sum_k b_k sin(k theta)."""
    th = np.asarray(theta, dtype=float)
    A = np.column_stack([np.sin(k * th) for k in range(1, n_modes + 1)])
    b, *_ = np.linalg.lstsq(A, np.asarray(values, dtype=float), rcond=None)
    return Forcing(tuple(range(1, n_modes + 1)), tuple(float(x) for x in b))


@dataclass
class FlowMapComparison:
    phi: np.ndarray
    K: np.ndarray
    dK_flow: np.ndarray
    dK_map: np.ndarray
    std_flow: float
    std_map: float
    rel_diff: float
    forcing: Forcing
    profile: UnperturbedProfile


def flow_vs_map(spec: SystemSpec, n_points: int = 1000, K_range: float | None = None,
                seed: int = 0, curve: SingularityCurve | None = None, n_theta: int = 64,
                n_modes: int = 5, flow_tol: float = 1e-11) -> FlowMapComparison:
    """One-step action increments of the flow in the tangency chart against the tangency map.

    The forcing is the sine fit of the gap between image curve and curve, so
    the map sees the full finite-eps kick of both coupling and wall tilt.
    """
    prof = unperturbed_profile(spec)
    if curve is None:
        curve = extract_singularity_curve(spec, default_theta_grid(n_theta), 1e-10,
                                          with_melnikov=False)
    gap = curve.I_tan_image - curve.I_tan_eps
    eps = spec.eps_r if spec.eps_r > 0 else 1.0
    forcing = sine_fit(curve.theta, gap / eps, n_modes)
    if K_range is None:
        K_range = 3.0 * float(np.max(np.abs(gap))) + 1e-12
    rng = np.random.default_rng(seed)
    phi0 = rng.uniform(-math.pi, math.pi, n_points)
    K0 = rng.uniform(-K_range, K_range, n_points)
    cf = curve.curve
    dK_flow = np.empty(n_points)
    phis = np.empty(n_points)
    for i in range(n_points):
        p = PhasePoint(phi0[i], K0[i])
        c = fe.return_map(from_tangency_chart(p, cf, spec), spec, flow_tol)
        q = to_tangency_chart(c, cf, spec)
        phis[i] = q.phi
        dK_flow[i] = q.K - K0[i]
    # the map in physical units: phi' = phi + Omega + G_s(K), K' = K + eps f(phi')
    phib = wrap_angle(phi0 + prof.Omega + gs_eval(K0, prof))
    dK_map = eps * forcing(phib)
    sf, sm = float(np.std(dK_flow)), float(np.std(dK_map))
    return FlowMapComparison(phi0, K0, dK_flow, dK_map, sf, sm, abs(sf - sm) / sm, forcing, prof)


def save_json(obj, path) -> None:
    d = obj.to_dict() if hasattr(obj, "to_dict") else obj
    with open(path, "w") as fh:
        json.dump(d, fh, indent=2)
