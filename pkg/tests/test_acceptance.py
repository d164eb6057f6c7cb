"""Acceptance gates; the terminal summary lists one PASS/FAIL line per criterion."""

import json
import math
import time
from collections import Counter
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import bisect

from conftest import ALPHA_BIG, GOLDEN, corner_params
from tangency import band_stats as bs
from tangency import cli
from tangency import flow_engine as fe
from tangency import singularity_chart as sc
from tangency.fixed_points import (Branch, branch_negative, default_j_window,
                                   enumerate_fixed_points, fixed_point_trace, map_residual,
                                   period_doubling_omega)
from tangency.map_core import MapParams, fd_jacobian_arrays, ttm_jacobian_arrays, wrap_angle
from tangency.systems import duffing_center, quartic_example

TWO_PI = 2 * math.pi
CONFIGS = Path(__file__).resolve().parent.parent / "configs"
EPS_GRID = np.logspace(-3.5, -1.5, 8)


def widths_over(omega, eps_grid=EPS_GRID):
    m = MapParams(0.0, 1.0, omega, 1)
    return np.array([bs.band_widths(m.replace(epsilon=float(e)), 100, 100_000) for e in eps_grid])


def expected_branch_counts(omega, m):
    """Branch census from the sign conditions on the two quadratics, per forcing zero."""
    j0 = math.floor(omega / TWO_PI)
    w = default_j_window(m)
    c = Counter()
    for j in range(j0 - w, j0 + w + 1):
        d = omega - TWO_PI * j
        if m.tau * d < 0:
            c[Branch.POS] += 1
        if m.tau == 1:
            c[Branch.NEG_MINUS] += d > 0
        else:
            c[Branch.NEG_MINUS] += 0 < d < m.alpha**2 / 4
            c[Branch.NEG_PLUS] += d < m.alpha**2 / 4
    return +c


@pytest.mark.criterion(1, "area preservation on all parameter corners")
def test_c01_area_preservation(rng):
    t0 = time.perf_counter()
    worst_exact = worst_fd = 0.0
    for m in corner_params():
        n = 10_000
        phi = rng.uniform(-math.pi, math.pi, n)
        K = 10 ** rng.uniform(-6, 1, n) * rng.choice([-1.0, 1.0], n)
        det = np.linalg.det(ttm_jacobian_arrays(phi, K, m))
        det_fd = np.linalg.det(fd_jacobian_arrays(phi, K, m))
        worst_exact = max(worst_exact, np.max(np.abs(det - 1)))
        worst_fd = max(worst_fd, np.max(np.abs(det_fd - 1)))
    elapsed = time.perf_counter() - t0
    print(f"det error exact {worst_exact:.2e}, finite difference {worst_fd:.2e}, {elapsed:.2f}s")
    assert worst_exact <= 1e-10
    assert worst_fd <= 1e-5
    assert elapsed < 1.0


@pytest.mark.criterion(2, "fixed points exact with the expected branch census")
def test_c02_fixed_points():
    t0 = time.perf_counter()
    worst = 0.0
    for m in corner_params():
        if m.epsilon == 0:
            continue
        for om in np.linspace(-9.0, 9.0, 100):
            mm = m.replace(omega=float(om))
            recs = enumerate_fixed_points(float(om), mm)
            worst = max(worst, max(map_residual(r, mm) for r in recs))
            for phi in mm.forcing.zeros():
                got = Counter(r.branch for r in recs if r.phi_star == phi)
                assert got == expected_branch_counts(float(om), mm), (om, mm)
    # four coexisting negative-shear centers for alpha^2 / 8 pi = 4
    big = MapParams(0.3, ALPHA_BIG, 0.1, -1)
    per_phi = Counter(r.phi_star for r in enumerate_fixed_points(0.1, big)
                      if r.branch is Branch.NEG_MINUS)
    assert set(per_phi.values()) == {4}
    # strong resonance: four points of order sqrt(delta) near the singularity line
    sr = MapParams(0.1, 1.0, TWO_PI + 0.005, -1)
    small = [r for r in enumerate_fixed_points(sr.omega, sr) if r.j == 1 and abs(r.K_star) < 0.1]
    assert len(small) == 4
    elapsed = time.perf_counter() - t0
    print(f"max residual {worst:.2e}, {elapsed:.2f}s")
    assert worst <= 1e-12
    assert elapsed < 1.0


@pytest.mark.criterion(3, "period-doubling threshold matches bisection")
@pytest.mark.parametrize("tau", [1, -1])
def test_c03_period_doubling(tau):
    m = MapParams(0.3, 1.0, 0.0, tau)

    def trace_plus_two(om):
        (K,) = [k for k, br in branch_negative(0, om, tau, m.alpha) if br is Branch.NEG_MINUS]
        return fixed_point_trace(math.pi, K, m.replace(omega=om)) + 2.0

    # the branch is born at the line (trace -> -inf) and ends at the fold (trace = 2)
    hi = m.alpha**2 / 4 * (1 - 1e-9) if tau == -1 else 1.0
    om = bisect(trace_plus_two, 1e-12, hi, xtol=1e-14, maxiter=200)
    pred = period_doubling_omega(0, math.pi, m)
    print(f"tau={tau}: bisection {om:.15f}, closed form {pred:.15f}")
    assert abs(om - pred) <= 1e-9


@pytest.mark.slow
@pytest.mark.criterion(4, "linear, symmetric widths at general rotation")
@pytest.mark.parametrize("omega", [GOLDEN, math.pi / 2], ids=["golden", "half_pi"])
def test_c04_general_scaling(omega):
    W = widths_over(omega)
    fp, fm = bs.fit_scaling(EPS_GRID, W[:, 0]), bs.fit_scaling(EPS_GRID, W[:, 1])
    ratio = W[:, 0] / W[:, 1]
    print(f"exponents {fp.exponent:.3f} {fm.exponent:.3f}, ratio [{ratio.min():.2f}, {ratio.max():.2f}]")
    assert 0.85 <= fp.exponent <= 1.15
    assert 0.85 <= fm.exponent <= 1.15
    assert np.all((ratio >= 0.5) & (ratio <= 2.0))


@pytest.mark.slow
@pytest.mark.criterion(5, "square-root and two-thirds widths at strong resonance")
def test_c05_strong_resonance():
    W = widths_over(TWO_PI)
    fp, fm = bs.fit_scaling(EPS_GRID, W[:, 0]), bs.fit_scaling(EPS_GRID, W[:, 1])
    print(f"W+ exponent {fp.exponent:.3f}, W- exponent {fm.exponent:.3f}")
    assert 0.4 <= fp.exponent <= 0.6
    assert 0.57 <= fm.exponent <= 0.77


@pytest.mark.slow
@pytest.mark.criterion(6, "width departs from linear growth at overlap")
def test_c06_overlap_departure():
    small = np.array([0.003, 0.01, 0.03])
    W = widths_over(math.pi / 3, small)
    Wb = widths_over(math.pi / 3, [0.1])[0]
    r_plus = bs.linear_departure(small, W[:, 0], 0.1, Wb[0])
    r_minus = bs.linear_departure(small, W[:, 1], 0.1, Wb[1])
    print(f"departure ratio W+ {r_plus:.2f}, W- {r_minus:.2f}")
    assert r_minus > 2.0


@pytest.mark.criterion(7, "flow baseline: rotation, energy and impact count")
@pytest.mark.parametrize("make", [quartic_example, lambda: duffing_center(eps_r=0.0, eps_w=0.0)],
                         ids=["quartic", "duffing"])
def test_c07_flow_baseline(make):
    spec = make()
    Itan = sc.I_tan(spec)
    worst_rot = worst_E = 0.0
    for dI in np.linspace(-0.1, 0.1, 20):
        I = Itan + dI
        th, _, c = fe.return_map_theta_I(0.3, I, spec)
        worst_rot = max(worst_rot, abs(wrap_angle(th - 0.3 - sc.rotation_Theta(I, spec.E, spec))))
        worst_E = max(worst_E, c.energy_error)
        assert len([e for e in c.events if not e.grazing]) <= 1
        assert c.impact_flag == (dI < 0)
    print(f"rotation error {worst_rot:.2e}, energy drift {worst_E:.2e}")
    assert worst_rot <= 1e-6
    assert worst_E <= 1e-9


@pytest.mark.criterion(8, "square-root rotation deficit from the flow")
def test_c08_sqrt_law():
    spec = quartic_example()
    p = sc.unperturbed_profile(spec)
    rho = np.logspace(-6, -3, 10)
    d = np.array([wrap_angle(fe.return_map_theta_I(0.4, p.I_tan - r, spec, tol=1e-12)[0]
                             - 0.4 - p.Omega) for r in rho])
    s = np.sqrt(rho)
    coef = -(d @ s) / (s @ s)
    print(f"fitted {coef:.6f} vs {p.alpha_phys:.6f}")
    assert coef == pytest.approx(p.alpha_phys, rel=0.02)


@pytest.mark.slow
@pytest.mark.criterion(9, "singularity curve reflection symmetry")
def test_c09_symmetry():
    spec = quartic_example(eps_r=0.3)
    cur = sc.extract_singularity_curve(spec, sc.default_theta_grid(16), tol=1e-9)
    res = sc.symmetry_residual(cur, spec)
    spread = np.ptp(cur.I_tan_eps)
    print(f"sup residual {res.max():.2e}, curve spread {spread:.3f}")
    assert spread > 1e-2
    assert res.max() <= 1e-6


@pytest.mark.slow
@pytest.mark.criterion(10, "Melnikov function is the first-order curve gap")
@pytest.mark.parametrize("make", [lambda e: duffing_center(eps_r=e, eps_w=0.0),
                                  lambda e: quartic_example(eps_r=e)], ids=["duffing", "quartic"])
def test_c10_melnikov(make):
    th = sc.default_theta_grid(12)
    prof = sc.unperturbed_profile(make(0.0))
    f = sc.melnikov_f(th, prof, make(1e-3))
    errs = []
    for e in (1e-3, 1e-4):
        spec = make(e)
        gap = []
        for t in th:
            I = sc.singularity_action(float(t), spec, 1e-12)
            gap.append((sc.tangent_image(float(t), I, spec)[1] - I) / e)
        errs.append(np.max(np.abs(np.array(gap) - f)))
    ratio = errs[0] / errs[1]
    print(f"errors {errs[0]:.2e} {errs[1]:.2e}, ratio {ratio:.2f}, sup f {np.abs(f).max():.3f}")
    assert errs[1] < 1e-2 * np.abs(f).max()
    assert 5.0 <= ratio <= 20.0


@pytest.mark.extended
@pytest.mark.criterion(11, "connection-time width growth exponent near 2/5")
def test_c11_connection(tmp_path):
    cfg = json.loads((CONFIGS / "connection_extended.json").read_text())
    cli.run(cfg, tmp_path)
    (summary,) = json.loads((tmp_path / "connection.json").read_text())
    print(f"slope {summary['slope']:.3f}, plateaus {summary['plateaus']}")
    assert all(p >= 1 for p in summary["plateaus"])
    assert 0.3 <= summary["slope"] <= 0.5
