import math

import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from tangency import band_stats as bs
from tangency import flow_engine as fe
from tangency.fixed_points import branch_negative, enumerate_fixed_points, map_residual
from tangency.map_core import (Forcing, MapParams, PhasePoint, ttm_jacobian, ttm_step,
                               ttm_step_arrays, wrap_angle)
from tangency.systems import duffing_center

angles = st.floats(-50.0, 50.0, allow_nan=False)
actions = st.floats(-5.0, 5.0, allow_nan=False)
eps_s = st.floats(0.0, 0.5)
alpha_s = st.floats(0.1, 20.0)
omega_s = st.floats(-10.0, 10.0)
tau_s = st.sampled_from([1, -1])


@st.composite
def params(draw):
    modes = draw(st.lists(st.integers(1, 5), min_size=1, max_size=3, unique=True))
    amps = draw(st.lists(st.floats(-1.0, 1.0), min_size=len(modes), max_size=len(modes)))
    return MapParams(draw(eps_s), draw(alpha_s), draw(omega_s), draw(tau_s),
                     Forcing(tuple(modes), tuple(amps)))


def inverse_step(p: PhasePoint, m: MapParams) -> PhasePoint:
    K = p.K - m.epsilon * m.forcing(p.phi)
    phi = p.phi - m.omega - m.tau * K + (m.alpha * math.sqrt(-K) if K < 0 else 0.0)
    return PhasePoint(wrap_angle(phi), K)


@given(angles)
def test_wrap_range_and_congruence(x):
    w = wrap_angle(x)
    assert -math.pi <= w < math.pi
    assert abs(math.remainder(w - x, 2 * math.pi)) < 1e-12


@given(angles, actions, params())
def test_kick_bounded(phi, K, m):
    q = ttm_step(PhasePoint(phi, K), m)
    assert abs(q.K - K) <= m.epsilon * sum(abs(a) for a in m.forcing.amplitudes) + 1e-15
    assert -math.pi <= q.phi < math.pi


@given(st.floats(-math.pi, math.pi, exclude_max=True), actions, params())
def test_invertible(phi, K, m):
    q = ttm_step(PhasePoint(phi, K), m)
    # the inverse needs the sign of K, which the forward step preserves only away from the line
    assume((q.K - m.epsilon * m.forcing(q.phi)) * K > 0 or K == 0)
    back = inverse_step(q, m)
    scale = 1 + abs(m.omega) + abs(K) + m.alpha * math.sqrt(abs(K))
    assert abs(back.K - K) <= 1e-12 * (1 + abs(K))
    assert abs(wrap_angle(back.phi - phi)) <= 1e-12 * scale


@given(angles, actions.filter(lambda K: abs(K) > 1e-6), params())
def test_area_preserving(phi, K, m):
    J = ttm_jacobian(PhasePoint(phi, K), m)
    assert abs(np.linalg.det(J) - 1.0) <= 1e-10 * max(1.0, np.abs(J).max() ** 2)


@settings(max_examples=30)
@given(st.lists(st.tuples(angles, actions), min_size=1, max_size=20), params())
def test_vectorised_matches_scalar(pts, m):
    phi = np.array([p for p, _ in pts])
    K = np.array([k for _, k in pts])
    pa, ka = ttm_step_arrays(phi, K, m)
    for i, (p, k) in enumerate(pts):
        q = ttm_step(PhasePoint(p, k), m)
        assert abs(wrap_angle(pa[i] - q.phi)) < 1e-12 and abs(ka[i] - q.K) < 1e-12


@given(st.integers(-3, 3), omega_s, tau_s, alpha_s)
def test_negative_branches_close(j, omega, tau, alpha):
    for K, _ in branch_negative(j, omega, tau, alpha):
        assert K <= 0
        rot = omega + tau * K - alpha * math.sqrt(-K)
        assert abs(rot - 2 * math.pi * j) <= 1e-10 * (1 + abs(omega) + abs(K) + alpha**2)


@settings(max_examples=40)
@given(params().filter(lambda m: m.epsilon > 0 and any(m.forcing.amplitudes)))
def test_fixed_points_solve_map(m):
    for rec in enumerate_fixed_points(m.omega, m, j_window=2):
        assert map_residual(rec, m) <= 1e-9 * (1 + abs(rec.K_star) + m.alpha**2)


@given(st.floats(0.1, 3.0), st.floats(1e-3, 10.0))
def test_fit_recovers_power_law(b, c):
    eps = np.logspace(-4, -1, 6)
    f = bs.fit_scaling(eps, c * eps**b)
    assert abs(f.exponent - b) < 1e-9 and abs(f.prefactor / c - 1) < 1e-8


@given(st.floats(-10, 10), st.floats(-10, 10).filter(lambda p: abs(p) > 1e-3))
def test_action_angle_roundtrip(q2, p2):
    spec = duffing_center(q2c=0.4)
    th, I = fe.action_angle_q2(q2, p2, spec)
    assert I > 0 and -math.pi <= th <= math.pi
    q, p = fe.action_angle_inverse(th, I, spec)
    assert abs(q - q2) < 1e-10 * (1 + abs(q2)) and abs(p - p2) < 1e-10 * (1 + abs(p2))


@given(st.lists(st.floats(-1, 1), min_size=1, max_size=4), angles)
def test_forcing_odd(amps, x):
    f = Forcing(tuple(range(1, len(amps) + 1)), tuple(amps))
    assert abs(f(-x) + f(x)) <= 1e-13
