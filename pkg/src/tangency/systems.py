"""Concrete wall systems: separable potentials, coupling, wall geometry, presets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial


def _horner(coeffs: tuple[float, ...], x: float) -> float:
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


@dataclass(frozen=True)
class Potential1D:
    """Polynomial potential V(q) = sum_k c_k (q - shift)^k."""

    coeffs: tuple[float, ...]
    shift: float = 0.0
    _d1: tuple[float, ...] = field(init=False, repr=False, compare=False)
    _d2: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        c = tuple(float(x) for x in self.coeffs)
        object.__setattr__(self, "coeffs", c)
        d1 = tuple(k * c[k] for k in range(1, len(c))) or (0.0,)
        d2 = tuple(k * d1[k] for k in range(1, len(d1))) or (0.0,)
        object.__setattr__(self, "_d1", d1)
        object.__setattr__(self, "_d2", d2)

    def __call__(self, q: float) -> float:
        return _horner(self.coeffs, q - self.shift)

    def d(self, q: float) -> float:
        return _horner(self._d1, q - self.shift)

    def d2(self, q: float) -> float:
        return _horner(self._d2, q - self.shift)

    def poly(self) -> Polynomial:
        """The potential as a polynomial in q (unshifted)."""
        return Polynomial(self.coeffs)(Polynomial([-self.shift, 1.0]))

    def poly_local(self) -> Polynomial:
        """The potential as a polynomial in x = q - shift."""
        return Polynomial(self.coeffs)

    @property
    def harmonic_omega(self) -> float | None:
        """omega if V = c0 + (omega^2/2)(q - shift)^2, else None."""
        c = self.coeffs + (0.0,) * max(0, 3 - len(self.coeffs))
        if len(c) == 3 and c[1] == 0.0 and c[2] > 0.0:
            return math.sqrt(2.0 * c[2])
        if all(x == 0.0 for x in c[3:]) and c[1] == 0.0 and c[2] > 0.0:
            return math.sqrt(2.0 * c[2])
        return None

    def to_dict(self) -> dict:
        return {"coeffs": list(self.coeffs), "shift": self.shift}

    @classmethod
    def from_dict(cls, d: dict) -> "Potential1D":
        return cls(tuple(d["coeffs"]), float(d.get("shift", 0.0)))


@dataclass(frozen=True)
class Coupling:
    """Polynomial coupling V_c = sum_{ij} C[i][j] (q1 - a)^i (q2 - b)^j."""

    C: tuple[tuple[float, ...], ...] = ((0.0, 0.0), (0.0, 1.0))
    a: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "C", tuple(tuple(float(x) for x in row) for row in self.C))

    def _terms(self, q1, q2):
        x, y = q1 - self.a, q2 - self.b
        v = d1 = d2 = 0.0
        for i, row in enumerate(self.C):
            for j, c in enumerate(row):
                if c == 0.0:
                    continue
                v += c * x**i * y**j
                if i:
                    d1 += c * i * x ** (i - 1) * y**j
                if j:
                    d2 += c * j * x**i * y ** (j - 1)
        return v, d1, d2

    def __call__(self, q1: float, q2: float) -> float:
        return self._terms(q1, q2)[0]

    def poly_in_q1(self, q2: float) -> Polynomial:
        """V_c(., q2) as a polynomial in q1."""
        y = q2 - self.b
        x = Polynomial([-self.a, 1.0])
        out = Polynomial([0.0])
        for i, row in enumerate(self.C):
            for j, c in enumerate(row):
                if c:
                    out = out + c * y**j * x**i
        return out

    def grad(self, q1: float, q2: float) -> tuple[float, float]:
        _, d1, d2 = self._terms(q1, q2)
        return d1, d2

    def to_dict(self) -> dict:
        return {"C": [list(r) for r in self.C], "a": self.a, "b": self.b}

    @classmethod
    def from_dict(cls, d: dict) -> "Coupling":
        return cls(tuple(tuple(r) for r in d["C"]), float(d.get("a", 0.0)), float(d.get("b", 0.0)))


BILINEAR = ((0.0, 0.0), (0.0, 1.0))


@dataclass(frozen=True)
class SystemSpec:
    """H = p1^2/2 + p2^2/2 + V1(q1) + V2(q2) + eps_r*Vc(q1, q2), hard wall g(q) = 0.

    The wall is the line q1 = q1_wall + eps_w*q2; motion is confined to g > 0
    with g = q1 - q1_wall - eps_w*q2.
    """

    V1: Potential1D
    V2: Potential1D
    Vc: Coupling = field(default_factory=Coupling)
    eps_r: float = 0.0
    eps_w: float = 0.0
    q1_wall: float = 0.0
    E: float = 1.0
    name: str = "custom"

    def replace(self, **changes) -> "SystemSpec":
        d = {k: getattr(self, k) for k in
             ("V1", "V2", "Vc", "eps_r", "eps_w", "q1_wall", "E", "name")}
        d.update(changes)
        return SystemSpec(**d)

    def energy(self, y) -> float:
        q1, p1, q2, p2 = y[0], y[1], y[2], y[3]
        return (0.5 * (p1 * p1 + p2 * p2) + self.V1(q1) + self.V2(q2)
                + self.eps_r * self.Vc(q1, q2))

    def H1(self, y) -> float:
        return 0.5 * y[1] ** 2 + self.V1(y[0])

    def H2(self, y) -> float:
        return 0.5 * y[3] ** 2 + self.V2(y[2])

    def rhs(self, t, y):
        q1, p1, q2, p2 = float(y[0]), float(y[1]), float(y[2]), float(y[3])
        f1 = self.V1.d(q1)
        f2 = self.V2.d(q2)
        if self.eps_r:
            c1, c2 = self.Vc.grad(q1, q2)
            f1 += self.eps_r * c1
            f2 += self.eps_r * c2
        return np.array([p1, -f1, p2, -f2])

    def wall_gap(self, y) -> float:
        return y[0] - self.q1_wall - self.eps_w * y[2]

    def wall_gap_rate(self, y) -> float:
        return y[1] - self.eps_w * y[3]

    @property
    def wall_normal(self) -> tuple[float, float]:
        """Unit normal (n_q1, n_q2) pointing into the allowed region."""
        s = math.hypot(1.0, self.eps_w)
        return 1.0 / s, -self.eps_w / s

    @property
    def omega2(self) -> float | None:
        return self.V2.harmonic_omega

    def unperturbed(self) -> "SystemSpec":
        return self.replace(eps_r=0.0, eps_w=0.0)

    def to_dict(self) -> dict:
        return {"name": self.name, "V1": self.V1.to_dict(), "V2": self.V2.to_dict(),
                "Vc": self.Vc.to_dict(), "eps_r": self.eps_r, "eps_w": self.eps_w,
                "q1_wall": self.q1_wall, "E": self.E}

    @classmethod
    def from_dict(cls, d: dict) -> "SystemSpec":
        if "preset" in d:
            base = preset(d["preset"])
            over = {k: v for k, v in d.items() if k != "preset"}
            return cls.from_dict({**base.to_dict(), **over})
        return cls(V1=Potential1D.from_dict(d["V1"]), V2=Potential1D.from_dict(d["V2"]),
                   Vc=Coupling.from_dict(d["Vc"]) if "Vc" in d else Coupling(),
                   eps_r=float(d.get("eps_r", 0.0)), eps_w=float(d.get("eps_w", 0.0)),
                   q1_wall=float(d.get("q1_wall", 0.0)), E=float(d["E"]),
                   name=str(d.get("name", "custom")))

    def diagnostics(self) -> list[str]:
        """Semantic problems that make the tangency construction meaningless."""
        out = []
        if not self.E > self.V1(self.q1_wall):
            out.append(f"E={self.E} must exceed V1(q1_wall)={self.V1(self.q1_wall)} "
                       "for a tangent torus to exist (E > V1(q1^w))")
        if not self.q1_wall < self.V1.shift:
            out.append(f"q1_wall={self.q1_wall} must lie left of the V1 reference "
                       f"point {self.V1.shift}")
        if self.V2.harmonic_omega is None:
            out.append("V2 must be harmonic for the action-angle chart")
        return out


def duffing_center(H: float = 10.0, lam: float = math.sqrt(5.0) - 1.0, omega: float = 1.0,
                   eps_w: float = 0.01, eps_r: float = 0.02, q1s: float = 2.5,
                   q2c: float = 0.0) -> SystemSpec:
    return SystemSpec(
        V1=Potential1D((0.0, 0.0, -lam / 2.0, 0.0, 0.25), shift=q1s),
        V2=Potential1D((0.0, 0.0, omega**2 / 2.0), shift=q2c),
        Vc=Coupling(BILINEAR, a=q1s, b=q2c),
        eps_r=eps_r, eps_w=eps_w, q1_wall=0.0, E=H, name="duffing-center")


def quartic_example(eps_r: float = 0.0) -> SystemSpec:
    return SystemSpec(
        V1=Potential1D((0.0, 0.0, 2.0, 1.0, 0.25)),
        V2=Potential1D((0.0, 0.0, 1.5)),
        Vc=Coupling(BILINEAR),
        eps_r=eps_r, eps_w=0.0, q1_wall=-0.8, E=2.0, name="quartic-example")


PRESETS = {
    "duffing-center": duffing_center,
    "quartic-example": quartic_example,
}


def preset(name: str) -> SystemSpec:
    try:
        return PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; known: {sorted(PRESETS)}") from None
