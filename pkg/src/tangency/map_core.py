"""Truncated tangency map and its local generalisation.

The map acts on the cylinder (phi, K), where K is the signed action distance
from the singularity line (K < 0 is the impacting side):

    phi' = phi + omega + tau*K - alpha*sqrt(-K)*[K < 0]
    K'   = K + epsilon * f(phi')

phi' is computed first and the kick uses phi', so the map is explicit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np
from scipy.optimize import brentq

from . import _kernels

PI = math.pi
TWO_PI = 2.0 * math.pi


class DomainError(ValueError):
    """Raised when a quantity is undefined at the requested point."""


def wrap_angle(x):
    """Reduce an angle (scalar or array) to [-pi, pi)."""
    if np.ndim(x) == 0:
        y = (float(x) + PI) % TWO_PI - PI
        return y - TWO_PI if y >= PI else y
    y = np.mod(np.asarray(x, dtype=float) + PI, TWO_PI) - PI
    return np.where(y >= PI, y - TWO_PI, y)


@dataclass(frozen=True)
class Forcing:
    """Odd forcing f(phi) = sum_k a_k sin(m_k phi), a finite sine series."""

    modes: tuple[int, ...] = (1,)
    amplitudes: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(int(m) for m in self.modes))
        object.__setattr__(self, "amplitudes", tuple(float(a) for a in self.amplitudes))
        if len(self.modes) != len(self.amplitudes):
            raise ValueError("forcing modes and amplitudes differ in length")
        if any(m < 1 for m in self.modes):
            raise ValueError("forcing modes must be positive integers")

    def __call__(self, phi):
        if np.ndim(phi) == 0:
            return sum(a * math.sin(m * phi) for m, a in zip(self.modes, self.amplitudes))
        phi = np.asarray(phi, dtype=float)
        return sum(a * np.sin(m * phi) for m, a in zip(self.modes, self.amplitudes))

    def derivative(self, phi):
        if np.ndim(phi) == 0:
            return sum(a * m * math.cos(m * phi) for m, a in zip(self.modes, self.amplitudes))
        phi = np.asarray(phi, dtype=float)
        return sum(a * m * np.cos(m * phi) for m, a in zip(self.modes, self.amplitudes))

    @property
    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.asarray(self.modes, dtype=np.float64),
                np.asarray(self.amplitudes, dtype=np.float64))

    def zeros(self, tol: float = 1e-13) -> np.ndarray:
        """Zeros of f in [-pi, pi), sorted.

        A single pure mode sin(m phi) has the exact zeros k*pi/m. Otherwise sign
        changes on a fine grid are refined by bracketed root finding; zeros
        without a sign change (even multiplicity) are not reported.
        """
        active = [(m, a) for m, a in zip(self.modes, self.amplitudes) if a != 0.0]
        if not active:
            raise ValueError("forcing is identically zero")
        if len({m for m, _ in active}) == 1:
            m = active[0][0]
            return np.array([-PI + k * PI / m for k in range(2 * m)])
        n = 64 * max(m for m, _ in active)
        grid = -PI + TWO_PI * np.arange(n + 1) / n
        vals = self(grid)
        # grid nodes such as 0 and -pi are often exact zeros up to roundoff
        tiny = 64 * np.finfo(float).eps * sum(abs(a) for _, a in active)
        vals[np.abs(vals) <= tiny] = 0.0
        roots = []
        for k in range(n):
            a, b = grid[k], grid[k + 1]
            fa, fb = vals[k], vals[k + 1]
            if fa == 0.0:
                roots.append(a)
            elif fa * fb < 0.0:
                roots.append(brentq(self, a, b, xtol=tol, rtol=4 * np.finfo(float).eps))
        return np.array(sorted(wrap_angle(r) for r in roots))

    def to_json(self) -> list[dict]:
        return [{"mode": m, "amplitude": a} for m, a in zip(self.modes, self.amplitudes)]

    @classmethod
    def from_json(cls, items: Sequence[dict]) -> "Forcing":
        return cls(tuple(d["mode"] for d in items), tuple(d["amplitude"] for d in items))


@dataclass(frozen=True)
class MapParams:
    epsilon: float
    alpha: float
    omega: float
    tau: int = 1
    forcing: Forcing = field(default_factory=Forcing)

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.tau not in (1, -1):
            raise ValueError(f"tau must be +1 or -1, got {self.tau}")
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")
        object.__setattr__(self, "tau", int(self.tau))

    def replace(self, **changes) -> "MapParams":
        d = dict(epsilon=self.epsilon, alpha=self.alpha, omega=self.omega,
                 tau=self.tau, forcing=self.forcing)
        d.update(changes)
        return MapParams(**d)

    def kernel_args(self) -> tuple:
        modes, amps = self.forcing.arrays
        return (float(self.epsilon), float(self.omega), float(self.tau),
                float(self.alpha), modes, amps)

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "alpha": self.alpha, "omega": self.omega,
                "tau": self.tau, "forcing": self.forcing.to_json()}

    @classmethod
    def from_dict(cls, d: dict) -> "MapParams":
        forcing = Forcing.from_json(d["forcing"]) if "forcing" in d else Forcing()
        return cls(epsilon=float(d["epsilon"]), alpha=float(d["alpha"]),
                   omega=float(d["omega"]), tau=int(d["tau"]), forcing=forcing)


@dataclass(frozen=True)
class PhasePoint:
    phi: float
    K: float

    def __post_init__(self):
        object.__setattr__(self, "phi", wrap_angle(self.phi))
        object.__setattr__(self, "K", float(self.K))


def gs(K, alpha: float, tau: float):
    """Leading-order phase advance G_s(K): tau*K, minus alpha*sqrt(-K) when K < 0."""
    if np.ndim(K) == 0:
        K = float(K)
        return tau * K - alpha * math.sqrt(-K) if K < 0.0 else tau * K
    K = np.asarray(K, dtype=float)
    return tau * K - alpha * np.sqrt(np.where(K < 0.0, -K, 0.0))


def ttm_step(p: PhasePoint, m: MapParams) -> PhasePoint:
    phi, K = p.phi, p.K
    phib = phi + m.omega + m.tau * K
    if K < 0.0:
        phib -= m.alpha * math.sqrt(-K)
    phib = wrap_angle(phib)
    return PhasePoint(phib, K + m.epsilon * m.forcing(phib))


def ttm_step_arrays(phi: np.ndarray, K: np.ndarray, m: MapParams) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised ttm_step over arrays of points."""
    K = np.asarray(K, dtype=float)
    phib = np.asarray(phi, dtype=float) + m.omega + m.tau * K
    phib = wrap_angle(phib - m.alpha * np.sqrt(np.where(K < 0.0, -K, 0.0)))
    return phib, K + m.epsilon * m.forcing(phib)


def ttm_jacobian(p: PhasePoint, m: MapParams) -> np.ndarray:
    """Exact Jacobian d(phi', K')/d(phi, K); undefined on the line K = 0."""
    if p.K == 0.0:
        raise DomainError("Jacobian of the tangency map is undefined at K = 0")
    dphi_dK = m.tau + (m.alpha / (2.0 * math.sqrt(-p.K)) if p.K < 0.0 else 0.0)
    phib = ttm_step(p, m).phi
    kick = m.epsilon * m.forcing.derivative(phib)
    return np.array([[1.0, dphi_dK],
                     [kick, 1.0 + kick * dphi_dK]])


def fd_step_size(K: float) -> tuple[float, float]:
    """Central-difference steps (h_phi, h_K) for the Jacobian check.

    Both start from 1e-7*max(1,|K|). The action step is further capped at
    1e-3*|K| so the stencil never straddles the square-root singularity; the
    angle direction is smooth and keeps the full step.
    """
    h = 1e-7 * max(1.0, abs(K))
    aK = abs(K)
    return h, (min(h, 1e-3 * aK) if aK > 0 else h)


def fd_jacobian(p: PhasePoint, m: MapParams, h: float | tuple[float, float] | None = None) -> np.ndarray:
    """Central finite-difference Jacobian of ttm_step, unwrapping the angle."""
    if h is None:
        h = fd_step_size(p.K)
    hp, hk = (h, h) if np.ndim(h) == 0 else h
    a = ttm_step(PhasePoint(p.phi + hp, p.K), m)
    b = ttm_step(PhasePoint(p.phi - hp, p.K), m)
    c = ttm_step(PhasePoint(p.phi, p.K + hk), m)
    d = ttm_step(PhasePoint(p.phi, p.K - hk), m)
    return np.array([[wrap_angle(a.phi - b.phi) / (2 * hp), wrap_angle(c.phi - d.phi) / (2 * hk)],
                     [(a.K - b.K) / (2 * hp), (c.K - d.K) / (2 * hk)]])


def ttm_jacobian_arrays(phi, K, m: MapParams) -> np.ndarray:
    """Vectorised exact Jacobians, shape (n, 2, 2); K must be nonzero everywhere."""
    K = np.asarray(K, dtype=float)
    if np.any(K == 0.0):
        raise DomainError("Jacobian of the tangency map is undefined at K = 0")
    dphi_dK = m.tau + np.where(K < 0.0, m.alpha / (2.0 * np.sqrt(np.abs(K))), 0.0)
    phib, _ = ttm_step_arrays(phi, K, m)
    kick = m.epsilon * m.forcing.derivative(phib)
    J = np.empty(K.shape + (2, 2))
    J[..., 0, 0] = 1.0
    J[..., 0, 1] = dphi_dK
    J[..., 1, 0] = kick
    J[..., 1, 1] = 1.0 + kick * dphi_dK
    return J


def fd_jacobian_arrays(phi, K, m: MapParams) -> np.ndarray:
    """Vectorised :func:`fd_jacobian` with the default steps."""
    phi = np.asarray(phi, dtype=float)
    K = np.asarray(K, dtype=float)
    hp = 1e-7 * np.maximum(1.0, np.abs(K))
    hk = np.where(K != 0.0, np.minimum(hp, 1e-3 * np.abs(K)), hp)
    pa, ka = ttm_step_arrays(wrap_angle(phi + hp), K, m)
    pb, kb = ttm_step_arrays(wrap_angle(phi - hp), K, m)
    pc, kc = ttm_step_arrays(phi, K + hk, m)
    pd, kd = ttm_step_arrays(phi, K - hk, m)
    J = np.empty(K.shape + (2, 2))
    J[..., 0, 0] = wrap_angle(pa - pb) / (2 * hp)
    J[..., 0, 1] = wrap_angle(pc - pd) / (2 * hk)
    J[..., 1, 0] = (ka - kb) / (2 * hp)
    J[..., 1, 1] = (kc - kd) / (2 * hk)
    return J


def local_map_step(p: PhasePoint, m: MapParams,
                   g1: Callable[[float, float], float] | None = None,
                   g2: Callable[[float, float], float] | None = None) -> PhasePoint:
    """Local return map with injectable higher-order corrections g1(K, phi), g2(K, phi).

    With both corrections absent this coincides with :func:`ttm_step`.
    """
    phib = p.phi + m.omega + m.tau * p.K
    if p.K < 0.0:
        phib -= m.alpha * math.sqrt(-p.K)
    if g1 is not None:
        phib += g1(p.K, p.phi)
    phib = wrap_angle(phib)
    Kb = p.K + m.epsilon * m.forcing(phib)
    if g2 is not None:
        Kb += g2(p.K, p.phi)
    return PhasePoint(phib, Kb)


class OrbitSink(Protocol):
    def push(self, phi: float, K: float) -> None: ...


class CountingSink:
    def __init__(self):
        self.count = 0

    def push(self, phi, K):
        self.count += 1


class ExtremaSink:
    def __init__(self):
        self.count = 0
        self.K_max = -math.inf
        self.K_min = math.inf

    def push(self, phi, K):
        self.count += 1
        if K > self.K_max:
            self.K_max = K
        if K < self.K_min:
            self.K_min = K


class OrbitRecorder:
    """Keeps every ``stride``-th iterate (1-based iterate numbers)."""

    def __init__(self, stride: int = 1):
        if stride < 1:
            raise ValueError("stride must be >= 1")
        self.stride = stride
        self.count = 0
        self.iterates: list[int] = []
        self.phi: list[float] = []
        self.K: list[float] = []

    def push(self, phi, K):
        self.count += 1
        if self.count % self.stride == 0:
            self.iterates.append(self.count)
            self.phi.append(phi)
            self.K.append(K)


def ttm_orbit(p0: PhasePoint, m: MapParams, n: int, sink: OrbitSink | None = None) -> PhasePoint:
    """Apply ttm_step n times, pushing each iterate to ``sink``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    p = p0
    for _ in range(n):
        p = ttm_step(p, m)
        if sink is not None:
            sink.push(p.phi, p.K)
    return p


def orbit_arrays(p0: PhasePoint, m: MapParams, n: int, stride: int = 1):
    """Compiled orbit dump: (iterate, phi, K) arrays for iterates stride, 2*stride, ..."""
    if n < 0 or stride < 1:
        raise ValueError("need n >= 0 and stride >= 1")
    return _kernels.orbit_dump(float(p0.phi), float(p0.K), int(n), int(stride), *m.kernel_args())
