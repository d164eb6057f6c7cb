import math

import numpy as np
import pytest

from conftest import GOLDEN
from tangency import band_stats as bs
from tangency.map_core import MapParams, PhasePoint, ttm_step


def window_oracle(p0, m, n, windows, checkpoints):
    """Straight loop over ttm_step feeding a WindowStats copy."""
    w = windows.fresh()
    out, ck = [], set(int(c) for c in checkpoints)
    p = p0
    for k in range(1, n + 1):
        p = ttm_step(p, m)
        w.update(p.phi, p.K)
        if k in ck:
            out.append(np.nanmax(w.widths()) if (w.hits > 0).any() else 0.0)
    return np.array(out), w


class TestWindows:
    def test_wraparound_membership(self):
        w = bs.WindowStats([math.pi - 0.01], 0.05)
        assert w.contains(-math.pi + 0.02)[0]
        assert not w.contains(0.0)[0]

    def test_update_keeps_order(self):
        w = bs.WindowStats([0.0, 1.0], 0.1)
        for K in (0.3, -0.2, 0.1):
            w.update(0.05, K)
        assert w.hits.tolist() == [3, 0]
        assert w.max_K[0] >= w.min_K[0]
        assert w.widths()[0] == pytest.approx(0.5)
        assert np.isnan(w.widths()[1])

    def test_seeded_windows(self):
        a, b = bs.make_windows(5, 0.01, 7), bs.make_windows(5, 0.01, 7)
        assert np.array_equal(a.centers, b.centers)
        assert np.all((a.centers >= -math.pi) & (a.centers < math.pi))

    def test_bad_half_width(self):
        with pytest.raises(ValueError):
            bs.WindowStats([0.0], 0.0)

    def test_checkpoints(self):
        ck = bs.log_checkpoints(1000)
        assert ck.tolist() == [1, 2, 3, 6, 10, 18, 32, 56, 100, 178, 316, 562, 1000]
        assert bs.log_checkpoints(7).tolist() == [1, 2, 3, 6, 7]


class TestBandWidths:
    def test_zero_eps(self):
        assert bs.band_widths(MapParams(0.0, 1.0, GOLDEN, 1), 10, 1000) == (0.0, 0.0)

    def test_positive_when_perturbed(self):
        Wp, Wm = bs.band_widths(MapParams(1e-4, 1.0, GOLDEN, 1), 20, 100)
        assert Wp > 0 and Wm > 0

    def test_golden_symmetric(self):
        Wp, Wm = bs.band_widths(MapParams(0.01, 1.0, GOLDEN, 1))
        assert 0.5 <= Wp / Wm <= 2.0
        assert 0.1 < Wp / 0.01 < 10

    def test_strong_resonance_sqrt(self):
        m = MapParams(1e-3, 1.0, 2 * math.pi, 1)
        r = bs.band_widths(m)[0] / bs.band_widths(m.replace(epsilon=1e-4))[0]
        assert r == pytest.approx(math.sqrt(10), rel=0.25)

    def test_ensemble_dominates_members(self):
        m = MapParams(0.02, 1.0, 1.1, 1)
        kmax, kmin = bs.band_extrema(m, 16, 5000)
        Wp, Wm = bs.band_widths(m, 16, 5000)
        assert Wp >= kmax.max() and Wm >= -kmin.min()
        end = PhasePoint(bs.tangent_phases(16)[3], 0.0)
        hi = -np.inf
        for _ in range(5000):
            end = ttm_step(end, m)
            hi = max(hi, end.K)
        assert hi == pytest.approx(kmax[3], abs=1e-12)

    def test_small_eps_continuity(self):
        m = MapParams(0.0, 1.0, GOLDEN, 1)
        ratios = [bs.band_widths(m.replace(epsilon=e), 20, 20_000)[0] / e for e in (1e-3, 1e-4, 1e-5)]
        assert max(ratios) < 5 * min(ratios)


class TestFits:
    def test_exact_power_law(self):
        eps = np.logspace(-4, -1, 7)
        f = bs.fit_scaling(eps, 3 * eps)
        assert f.exponent == pytest.approx(1.0, abs=1e-12)
        assert f.prefactor == pytest.approx(3.0, rel=1e-12)
        assert f.residual < 1e-12

    @pytest.mark.parametrize("eps,W", [
        ([1e-3, 1e-2, 1e-1], [1, 2, 3]),
        ([1e-3, 2e-3, 4e-3, 8e-3], [1, 2, 3, 4]),
        ([1e-4, 1e-3, 1e-2, 1e-1], [1, 0, 3, 4]),
    ])
    def test_rejects(self, eps, W):
        with pytest.raises(ValueError):
            bs.fit_scaling(eps, W)

    def test_trimmed_drops_overlap_tail(self):
        eps = np.logspace(-4, -1, 10)
        W = eps.copy()
        W[-2:] *= 20
        full = bs.fit_scaling(eps, W)
        trim = bs.fit_scaling_trimmed(eps, W)
        assert full.residual > 0.1
        assert trim.exponent == pytest.approx(1.0, abs=1e-9)
        assert trim.n_points == 8

    def test_linear_departure(self):
        assert bs.linear_departure([1e-3, 1e-2], [2e-3, 2e-2], 0.1, 0.6) == pytest.approx(3.0)

    def test_report(self):
        rep = bs.band_width_report(MapParams(0.0, 1.0, GOLDEN, 1), np.logspace(-4, -2, 5), 10, 2000)
        assert rep.W_plus.shape == (5,) and rep.fit_plus is not None
        assert rep.metadata()["n_ic"] == 10
        assert set(rep.fits()) == {"fit_plus", "fit_minus", "fit_plus_trimmed", "fit_minus_trimmed"}


class TestTrajectoryWidth:
    def test_zero_eps(self):
        w = bs.make_windows(5, 0.05, 1)
        s = bs.trajectory_width(PhasePoint(0.3, 0.0), MapParams(0.0, 1.0, GOLDEN, 1), 1000, w,
                                bs.log_checkpoints(1000))
        assert np.all(s.width == 0)

    def test_matches_python_loop(self):
        m = MapParams(0.05, 1.0, GOLDEN, 1)
        w = bs.make_windows(5, 0.1, 3)
        ck = bs.log_checkpoints(3000)
        s = bs.trajectory_width(PhasePoint(0.2, 0.0), m, 3000, w, ck)
        ref, wref = window_oracle(PhasePoint(0.2, 0.0), m, 3000, w, ck)
        assert np.allclose(s.width, ref, atol=1e-12)
        assert np.array_equal(w.hits, wref.hits)

    def test_nondecreasing(self):
        m = MapParams(0.02, 1.0, 1.3, -1)
        w = bs.make_windows(5, 0.05, 4)
        s = bs.trajectory_width(PhasePoint(-1.0, 0.0), m, 20_000, w, bs.log_checkpoints(20_000))
        assert np.all(np.diff(s.width) >= 0)

    def test_empty_flag(self):
        w = bs.WindowStats([2.0], 1e-6)
        s = bs.trajectory_width(PhasePoint(0.0, 0.0), MapParams(0.0, 1.0, 0.0, 1), 10, w, [5, 10])
        assert s.empty.all() and np.all(s.width == 0)

    def test_bad_checkpoints(self):
        with pytest.raises(ValueError):
            bs.trajectory_width(PhasePoint(0, 0), MapParams(0.1, 1.0, 1.0, 1), 10,
                                bs.make_windows(2, 0.1, 0), [5, 3])


class TestBoundaryDistance:
    def test_touching_both_sides_gives_zero(self):
        rmax = np.array([1.0, 0.5])
        rmin = np.array([-0.2, -1.0])
        d = bs.distance_from_extrema(rmax, rmin, np.array([1, 1]), [1.0, 1.0], [-1.0, -1.0])
        assert d == 0.0

    def test_midline_half(self):
        d = bs.distance_from_extrema(np.array([0.0]), np.array([0.0]), np.array([1]), [1.0], [-1.0])
        assert d == pytest.approx(0.5)

    def test_degenerate_band(self):
        with pytest.raises(ValueError):
            bs.distance_from_extrema(np.zeros(1), np.zeros(1), np.ones(1), [0.3], [0.3])

    def test_orbit_inside_band(self):
        m = MapParams(0.02, 1.0, GOLDEN, 1)
        w = bs.make_windows(3, 0.05, 5)
        band = bs.window_band(m, w, 20, 20_000)
        ck = bs.log_checkpoints(20_000)
        d = bs.boundary_distance(PhasePoint(bs.tangent_phases(20)[4], 0.0), m, 20_000, w, band, ck)
        assert np.all((d >= -1e-12) & (d <= 1.0))
        assert np.all(np.diff(d) <= 1e-15)


class TestConnection:
    def test_zero_eps_flat(self):
        rec = bs.connection_metrics(MapParams(0.0, 1.0, GOLDEN, 1), 3, 1000, 0)
        assert np.all(rec.normalized == 0)

    def test_deterministic(self):
        m = MapParams(0.01, 1.0, GOLDEN, 1)
        a = bs.connection_metrics(m, 4, 20_000, 11)
        b = bs.connection_metrics(m, 4, 20_000, 11)
        assert np.array_equal(a.normalized, b.normalized) and a.slope == b.slope

    def test_normalisation_bounded(self):
        m = MapParams(0.01, 1.0, GOLDEN, 1)
        rec = bs.connection_metrics(m, 6, 50_000, 2)
        assert rec.half_width == pytest.approx(0.005)
        assert np.all(np.diff(rec.normalized) >= 0)
        assert rec.normalized[-1] <= 1 / (m.alpha**2 * m.epsilon) + 1e-9

    def test_plateau_counter(self):
        assert bs.count_plateaus(np.array([0, 1, 1, 1, 2, 3, 3, 3, 3, 4.0])) == 2
        assert bs.count_plateaus(np.arange(10.0)) == 0
