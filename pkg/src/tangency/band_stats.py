"""Long-orbit statistics of the tangency band.

All orbits start on the singularity line (K0 = 0). Statistics use every
iterate; only orbit dumps are diluted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .map_core import PI, TWO_PI, MapParams, PhasePoint, wrap_angle


def tangent_phases(n_ic: int) -> np.ndarray:
    """n_ic initial phases evenly spaced on [-pi, pi)."""
    if n_ic < 1:
        raise ValueError("n_ic must be >= 1")
    return -PI + TWO_PI * np.arange(n_ic) / n_ic


@dataclass
class WindowStats:
    """Phase windows |phi - center| < half_width with running K extrema."""

    centers: np.ndarray
    half_width: float
    max_K: np.ndarray = None
    min_K: np.ndarray = None
    hits: np.ndarray = None

    def __post_init__(self):
        self.centers = np.asarray(wrap_angle(np.asarray(self.centers, dtype=float)), dtype=float)
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")
        n = self.centers.size
        if self.max_K is None:
            self.max_K = np.full(n, -np.inf)
        if self.min_K is None:
            self.min_K = np.full(n, np.inf)
        if self.hits is None:
            self.hits = np.zeros(n, dtype=np.int64)

    @property
    def n(self) -> int:
        return self.centers.size

    def fresh(self) -> "WindowStats":
        return WindowStats(self.centers.copy(), self.half_width)

    def contains(self, phi: float) -> np.ndarray:
        return np.abs(wrap_angle(phi - self.centers)) < self.half_width

    def update(self, phi: float, K: float) -> None:
        inside = self.contains(phi)
        self.hits[inside] += 1
        self.max_K[inside] = np.maximum(self.max_K[inside], K)
        self.min_K[inside] = np.minimum(self.min_K[inside], K)

    push = update

    def widths(self) -> np.ndarray:
        """Per-window max - min, NaN for windows never hit."""
        return np.where(self.hits > 0, self.max_K - self.min_K, np.nan)


def make_windows(n_windows: int, half_width: float, seed: int) -> WindowStats:
    """Windows at seeded uniformly random phases."""
    rng = np.random.default_rng(seed)
    return WindowStats(rng.uniform(-PI, PI, size=n_windows), half_width)


def log_checkpoints(n_max: int, per_decade: int = 4) -> np.ndarray:
    """Distinct rounded 10**(k/per_decade) values up to n_max, always ending at n_max."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    k_max = int(math.floor(per_decade * math.log10(n_max) + 1e-9))
    pts = {int(round(10 ** (k / per_decade))) for k in range(k_max + 1)}
    pts = sorted(p for p in pts if 1 <= p < n_max)
    return np.asarray(pts + [n_max], dtype=np.int64)


def band_extrema(m: MapParams, n_ic: int, n_iter: int,
                 phi0: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-orbit (max K, min K) over iterates 1..n_iter from K0 = 0."""
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    phi0 = tangent_phases(n_ic) if phi0 is None else np.asarray(phi0, dtype=float)
    return _kernels.ensemble_extrema(phi0, 0.0, int(n_iter), *m.kernel_args())


def band_widths(m: MapParams, n_ic: int = 100, n_iter: int = 100_000) -> tuple[float, float]:
    """(W_plus, W_minus): max K and -min K over the tangent ensemble."""
    kmax, kmin = band_extrema(m, n_ic, n_iter)
    return max(0.0, float(kmax.max())), max(0.0, float(-kmin.min()))


@dataclass(frozen=True)
class ScalingFit:
    exponent: float
    prefactor: float
    residual: float
    n_points: int


def fit_scaling(eps, W) -> ScalingFit:
    """Least-squares power law W = prefactor * eps**exponent in log-log space."""
    eps = np.asarray(eps, dtype=float)
    W = np.asarray(W, dtype=float)
    if eps.shape != W.shape or eps.ndim != 1:
        raise ValueError("eps and W must be 1-D arrays of equal length")
    if eps.size < 4:
        raise ValueError(f"need at least 4 points, got {eps.size}")
    if np.any(W <= 0) or np.any(eps <= 0):
        raise ValueError("eps and W must be positive")
    if math.log10(eps.max() / eps.min()) < 1.5 - 1e-12:
        raise ValueError("eps grid must span at least 1.5 decades")
    x, y = np.log(eps), np.log(W)
    slope, icpt = np.polyfit(x, y, 1)
    res = np.max(np.abs(y - (slope * x + icpt)))
    return ScalingFit(float(slope), float(math.exp(icpt)), float(res), int(eps.size))


def fit_scaling_trimmed(eps, W, max_residual: float = 0.1) -> ScalingFit:
    """Drop the largest eps values until the fit residual is acceptable.

    Stops at the minimal admissible grid (4 points, 1.5 decades) and returns
    the best fit reached.
    """
    order = np.argsort(eps)
    eps = np.asarray(eps, dtype=float)[order]
    W = np.asarray(W, dtype=float)[order]
    fit = fit_scaling(eps, W)
    n = eps.size
    while fit.residual > max_residual and n > 4:
        try:
            cand = fit_scaling(eps[: n - 1], W[: n - 1])
        except ValueError:
            break
        n -= 1
        fit = cand
    return fit


@dataclass
class BandWidthReport:
    epsilon: np.ndarray
    W_plus: np.ndarray
    W_minus: np.ndarray
    omega: float
    alpha: float
    tau: int
    n_ic: int
    n_iter: int
    seed: int | None = None
    fit_plus: ScalingFit | None = None
    fit_minus: ScalingFit | None = None
    fit_plus_trimmed: ScalingFit | None = None
    fit_minus_trimmed: ScalingFit | None = None

    def metadata(self) -> dict:
        return {"omega": self.omega, "alpha": self.alpha, "tau": self.tau,
                "n_ic": self.n_ic, "n_iter": self.n_iter, "seed": self.seed}

    def fits(self) -> dict:
        out = {}
        for name in ("fit_plus", "fit_minus", "fit_plus_trimmed", "fit_minus_trimmed"):
            f = getattr(self, name)
            out[name] = None if f is None else vars(f).copy()
        return out


def band_width_report(m: MapParams, eps_grid, n_ic: int = 100, n_iter: int = 100_000,
                      seed: int | None = None, fit: bool = True) -> BandWidthReport:
    eps_grid = np.asarray(eps_grid, dtype=float)
    Wp = np.empty(eps_grid.size)
    Wm = np.empty(eps_grid.size)
    for k, e in enumerate(eps_grid):
        Wp[k], Wm[k] = band_widths(m.replace(epsilon=float(e)), n_ic, n_iter)
    rep = BandWidthReport(eps_grid, Wp, Wm, m.omega, m.alpha, m.tau, n_ic, n_iter, seed)
    if fit:
        for sign, W in (("plus", Wp), ("minus", Wm)):
            try:
                setattr(rep, f"fit_{sign}", fit_scaling(eps_grid, W))
                setattr(rep, f"fit_{sign}_trimmed", fit_scaling_trimmed(eps_grid, W))
            except ValueError:
                pass
    return rep


def linear_departure(eps_small, W_small, eps_big: float, W_big: float) -> float:
    """W_big over the through-origin linear extrapolation of the small-eps data."""
    e = np.asarray(eps_small, dtype=float)
    w = np.asarray(W_small, dtype=float)
    c = float(e @ w / (e @ e))
    return W_big / (c * eps_big)


# ---------------------------------------------------------------- trajectories

@dataclass
class WidthSeries:
    checkpoints: np.ndarray
    width: np.ndarray
    empty: np.ndarray  # True where no window had a hit yet


def _window_run(phi0s, m: MapParams, n: int, windows: WindowStats, checkpoints,
                positive_only: bool):
    ck = np.asarray(checkpoints, dtype=np.int64)
    if ck.size and (np.any(np.diff(ck) <= 0) or ck[0] < 1 or ck[-1] > n):
        raise ValueError("checkpoints must be strictly increasing within [1, n]")
    phi0s = np.asarray(phi0s, dtype=float)
    K0s = np.zeros_like(phi0s)
    return _kernels.ensemble_windows(phi0s, K0s, int(n), windows.centers,
                                     float(windows.half_width), ck, bool(positive_only),
                                     *m.kernel_args())


def _window_run_points(points, m, n, windows, checkpoints, positive_only):
    phi = np.array([p.phi for p in points])
    K = np.array([p.K for p in points])
    ck = np.asarray(checkpoints, dtype=np.int64)
    if ck.size and (np.any(np.diff(ck) <= 0) or ck[0] < 1 or ck[-1] > n):
        raise ValueError("checkpoints must be strictly increasing within [1, n]")
    return _kernels.ensemble_windows(phi, K, int(n), windows.centers,
                                     float(windows.half_width), ck, bool(positive_only),
                                     *m.kernel_args())


def _width_from(rmax, rmin, hits) -> tuple[np.ndarray, np.ndarray]:
    """Reduce (..., n_w) running extrema to the max width over hit windows."""
    w = np.where(hits > 0, rmax - rmin, -np.inf)
    width = w.max(axis=-1)
    empty = ~np.isfinite(width)
    return np.where(empty, 0.0, width), empty


def trajectory_width(p0: PhasePoint, m: MapParams, n: int, windows: WindowStats,
                     checkpoints, positive_only: bool = False) -> WidthSeries:
    """W(n_k) for one orbit: max over hit windows of running (max K - min K).

    ``positive_only`` restricts the statistic to K >= 0 (positive-shear strong
    resonance). ``windows`` is filled with the final running extrema.
    """
    ck = np.asarray(checkpoints, dtype=np.int64)
    if n not in ck:
        ck_run = np.append(ck, n)
    else:
        ck_run = ck
    rmax, rmin, hits = _window_run_points([p0], m, n, windows, ck_run, positive_only)
    windows.max_K[:] = rmax[0, -1]
    windows.min_K[:] = rmin[0, -1]
    windows.hits[:] = hits[0, -1]
    width, empty = _width_from(rmax[0, : ck.size], rmin[0, : ck.size], hits[0, : ck.size])
    return WidthSeries(ck, width, empty)


def distance_from_extrema(rmax, rmin, hits, band_max, band_min) -> np.ndarray:
    """Boundary distance d from running per-window extrema (last axis = windows).

    A window never visited contributes the full normalised gap 1 on both sides.
    """
    band_max = np.asarray(band_max, dtype=float)
    band_min = np.asarray(band_min, dtype=float)
    span = band_max - band_min
    if np.any(span <= 0) or not np.all(np.isfinite(span)):
        raise ValueError("every window needs K_max > K_min in the band reference")
    top = np.where(hits > 0, (band_max - rmax) / span, 1.0)
    bot = np.where(hits > 0, (rmin - band_min) / span, 1.0)
    return np.maximum(top.min(axis=-1), bot.min(axis=-1))


def boundary_distance(p0: PhasePoint, m: MapParams, n: int, windows: WindowStats,
                      band: tuple[np.ndarray, np.ndarray], checkpoints=None):
    """d(n) for one orbit against per-window band extrema ``band = (K_min, K_max)``.

    With ``checkpoints`` returns the series d(n_k); otherwise the scalar d(n).
    """
    kmin, kmax = band
    ck = np.asarray([n] if checkpoints is None else checkpoints, dtype=np.int64)
    rmax, rmin, hits = _window_run_points([p0], m, n, windows, ck, False)
    d = distance_from_extrema(rmax[0], rmin[0], hits[0], kmax, kmin)
    return float(d[-1]) if checkpoints is None else d


def window_band(m: MapParams, windows: WindowStats, n_ic: int, n: int,
                positive_only: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Per-window (K_min, K_max) over a tangent ensemble run for n iterates."""
    rmax, rmin, hits = _window_run(tangent_phases(n_ic), m, n, windows,
                                   np.array([n]), positive_only)
    hit = hits[:, 0, :].sum(axis=0) > 0
    kmax = np.where(hit, rmax[:, 0, :].max(axis=0), np.nan)
    kmin = np.where(hit, rmin[:, 0, :].min(axis=0), np.nan)
    return kmin, kmax


# ---------------------------------------------------------------- connection

@dataclass
class ConnectionRecord:
    checkpoints: np.ndarray
    widths: np.ndarray          # (n_ic, n_checkpoints) per-phi0 W(N)
    distances: np.ndarray       # (n_ic, n_checkpoints) per-phi0 d(N), NaN if undefined
    normalized: np.ndarray      # (1/(alpha^2 eps)) max_phi0 W(N) / W_band
    min_distance: np.ndarray
    band_width: float
    slope: float
    intercept: float
    centers: np.ndarray
    half_width: float
    meta: dict = field(default_factory=dict)


def connection_metrics(m: MapParams, n_ic: int, N: int, seed: int, n_windows: int = 5,
                       half_width: float | None = None, checkpoints=None,
                       fit_range: tuple[int, int] | None = None,
                       positive_only: bool = False) -> ConnectionRecord:
    """Width-growth curve of tangent orbits in random windows of half-width eps/2.

    The band reference per window is the ensemble extremum at the final
    iterate; the slope is a log-log fit of the normalised curve over
    ``fit_range`` (default: all checkpoints with a positive value).
    """
    ck = log_checkpoints(N) if checkpoints is None else np.asarray(checkpoints, dtype=np.int64)
    delta = m.epsilon / 2.0 if half_width is None else half_width
    meta = {"omega": m.omega, "alpha": m.alpha, "tau": m.tau, "epsilon": m.epsilon,
            "n_ic": n_ic, "N": N, "seed": seed, "n_windows": n_windows}
    if m.epsilon == 0.0:
        z = np.zeros((n_ic, ck.size))
        return ConnectionRecord(ck, z, np.full_like(z, np.nan), np.zeros(ck.size),
                                np.full(ck.size, np.nan), 0.0, 0.0, 0.0,
                                np.zeros(0), 0.0, meta)
    windows = make_windows(n_windows, delta, seed)
    rmax, rmin, hits = _window_run(tangent_phases(n_ic), m, N, windows, ck, positive_only)
    widths, _ = _width_from(rmax, rmin, hits)

    bmax = np.max(np.where(hits[:, -1, :] > 0, rmax[:, -1, :], -np.inf), axis=0)
    bmin = np.min(np.where(hits[:, -1, :] > 0, rmin[:, -1, :], np.inf), axis=0)
    bw = np.where(np.isfinite(bmax), bmax - bmin, -np.inf).max()
    band_width = float(bw) if np.isfinite(bw) else 0.0

    usable = np.isfinite(bmax) & (bmax > bmin)
    if usable.any():
        d = distance_from_extrema(rmax[..., usable], rmin[..., usable], hits[..., usable],
                                  bmax[usable], bmin[usable])
    else:
        d = np.full(widths.shape, np.nan)

    if band_width > 0:
        norm = widths.max(axis=0) / band_width / (m.alpha**2 * m.epsilon)
    else:
        norm = np.zeros(ck.size)
    sel = norm > 0
    if fit_range is not None:
        sel &= (ck >= fit_range[0]) & (ck <= fit_range[1])
    if sel.sum() >= 2:
        slope, icpt = np.polyfit(np.log10(ck[sel]), np.log10(norm[sel]), 1)
    else:
        slope, icpt = float("nan"), float("nan")
    return ConnectionRecord(ck, widths, d, norm, np.nanmin(d, axis=0) if usable.any() else d[0],
                            band_width, float(slope), float(icpt), windows.centers,
                            float(delta), meta)


def count_plateaus(series: np.ndarray, rel_tol: float = 1e-12, min_len: int = 3) -> int:
    """Number of runs of >= min_len consecutive checkpoints with no width growth."""
    s = np.asarray(series, dtype=float)
    flat = np.abs(np.diff(s)) <= rel_tol * np.maximum(np.abs(s[1:]), 1e-300)
    runs, cur = 0, 0
    for f in flat:
        cur = cur + 1 if f else 0
        if cur == min_len - 1:
            runs += 1
    return runs
