import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracsel import (
    DomainError,
    ModelParams,
    comparison_envelope,
    drift,
    extremal_solution,
    flow_phi,
    max_deviation,
    transition_point,
)
from fracsel.flow import pow_pos

from conftest import rk4_power_ode


def params(gamma=0.5, hurst=0.5, a_plus=1.0, a_minus=1.0, epsilon=1e-3, **kw):
    return ModelParams(gamma, hurst, a_plus, a_minus, epsilon, **kw)


@st.composite
def valid_gamma_hurst(draw):
    h = draw(st.floats(0.05, 0.95))
    lo = max(-0.99, 1.0 - 1.0 / (2.0 * h)) + 0.01
    g = draw(st.floats(lo, 0.97))
    return g, h


# -- parameter validation -----------------------------------------------------


@pytest.mark.parametrize(
    "kw",
    [
        dict(gamma=1.0),
        dict(gamma=1.5),
        dict(hurst=0.0),
        dict(hurst=1.0),
        dict(gamma=-0.5, hurst=0.9),  # violates gamma > 1 - 1/(2H)
        dict(gamma=-1.0, hurst=0.3),
        dict(a_plus=0.0),
        dict(a_minus=-1.0),
        dict(epsilon=0.0),
    ],
)
def test_params_rejected(kw):
    with pytest.raises(DomainError):
        params(**kw)


def test_params_test_mode_allows_zero_drift():
    p = params(a_plus=0.0, a_minus=0.0, test_mode=True)
    assert p.coefficient(1) == 0.0
    with pytest.raises(DomainError):
        params(a_plus=0.0)


# -- drift ---------------------------------------------------------------------


def test_drift_values():
    p = params(gamma=0.5, a_plus=2.0, a_minus=3.0)
    assert drift(1.0, p) == 2.0
    assert drift(-1.0, p) == -3.0
    assert drift(0.0, p) == 0.0
    assert np.allclose(drift(np.array([4.0, -4.0]), p), [4.0, -6.0])


def test_drift_singularity():
    p = params(gamma=-0.5, hurst=0.3)
    with pytest.raises(DomainError):
        drift(0.0, p)
    with pytest.raises(DomainError):
        drift(np.array([1.0, 0.0]), p)
    assert drift(4.0, p) == 0.5


@settings(max_examples=50, deadline=500)
@given(
    gh=valid_gamma_hurst(),
    x=st.floats(0.01, 100.0),
    lam=st.floats(0.01, 100.0),
)
def test_drift_homogeneity(gh, x, lam):
    g, h = gh
    p = ModelParams(g, h, 1.3, 0.7, 1e-2)
    left = drift(lam * x, p)
    right = lam**g * drift(x, p)
    assert abs(left - right) <= 1e-12 * max(abs(left), abs(right))


def test_pow_pos():
    assert pow_pos(0.0, 2.0) == 0.0
    assert pow_pos(4.0, 0.5) == 2.0
    with pytest.raises(DomainError):
        pow_pos(0.0, -1.0)
    with pytest.raises(DomainError):
        pow_pos(0.0, 0.0)


# -- flow ----------------------------------------------------------------------


def test_flow_phi_frozen_values():
    # separable closed form at gamma=1/2: (sqrt(x) + t/2)^2
    assert flow_phi(0.0, 1.0, 0.5) == pytest.approx(0.25, abs=1e-15)
    assert flow_phi(1.0, 0.0, 0.5) == 1.0
    assert flow_phi(2.0, 3.0, 0.0) == pytest.approx(5.0)
    with pytest.raises(DomainError):
        flow_phi(1.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        flow_phi(-1.0, 1.0, 0.5)
    with pytest.raises(DomainError):
        flow_phi(1.0, -1.0, 0.5)


@pytest.mark.parametrize("gamma", [-0.5, 0.0, 0.5, 0.9])
@pytest.mark.parametrize("x0", [0.3, 1.0, 2.5])
def test_flow_phi_vs_rk4(gamma, x0):
    t_end = 1.7
    oracle = float(rk4_power_ode(x0, 1.0, gamma, t_end, 2000)[-1][0])
    val = flow_phi(x0, t_end, gamma)
    assert val == pytest.approx(oracle, rel=1e-9)


def test_flow_phi_from_zero_vs_rk4():
    # start the oracle just off the singular point; the flow forgets the offset.
    # RK4's first step is only O(dt^2) accurate there, hence the loose tolerance
    oracle = float(rk4_power_ode(1e-12, 1.0, 0.5, 1.0, 20000)[-1][0])
    assert flow_phi(0.0, 1.0, 0.5) == pytest.approx(oracle, rel=1e-4)


@settings(max_examples=50, deadline=500)
@given(
    gamma=st.floats(-0.9, 0.97),
    x=st.floats(0.0, 50.0),
    s=st.floats(0.0, 20.0),
    t=st.floats(0.0, 20.0),
)
def test_flow_semigroup(gamma, x, s, t):
    whole = flow_phi(x, s + t, gamma)
    split = flow_phi(flow_phi(x, s, gamma), t, gamma)
    assert abs(whole - split) <= 1e-10 * max(1.0, abs(whole))


def test_flow_monotone():
    xs = np.geomspace(1e-3, 10.0, 40)
    ts = np.geomspace(1e-3, 10.0, 40)
    for gamma in (-0.5, 0.5):
        vx = flow_phi(xs, 1.0, gamma)
        vt = flow_phi(1.0, ts, gamma)
        assert np.all(np.diff(vx) > 0)
        assert np.all(np.diff(vt) > 0)


def test_flow_ode_consistency():
    # central difference of t -> phi(x, t) against phi^gamma
    for gamma in (-0.5, 0.2, 0.7):
        for x in (0.5, 1.0, 4.0):
            for t in (0.1, 1.0, 5.0):
                h = 1e-6 * max(1.0, t)
                dphi = (flow_phi(x, t + h, gamma) - flow_phi(x, t - h, gamma)) / (2 * h)
                rhs = flow_phi(x, t, gamma) ** gamma
                assert dphi == pytest.approx(rhs, rel=1e-6)


# -- extremal solutions and the transition point --------------------------------


def test_extremal_frozen_value():
    p = params(gamma=0.5, a_plus=1.0)
    # (t/2)^2 at t=2
    assert extremal_solution(2.0, "+", p) == pytest.approx(1.0, abs=1e-14)
    assert extremal_solution(0.0, "+", p) == 0.0
    oracle = float(rk4_power_ode(1e-12, 1.0, 0.5, 2.0, 20000)[-1][0])
    assert extremal_solution(2.0, "+", p) == pytest.approx(oracle, rel=1e-4)


def test_extremal_symmetry_and_signs():
    p = params(gamma=0.3, a_plus=1.7, a_minus=1.7)
    t = np.linspace(0.0, 5.0, 11)
    plus = extremal_solution(t, "+", p)
    minus = extremal_solution(t, "-", p)
    assert np.array_equal(minus, -plus)
    assert np.array_equal(extremal_solution(t, 1, p), plus)
    assert np.array_equal(extremal_solution(t, -1, p), minus)
    with pytest.raises(DomainError):
        extremal_solution(1.0, "up", p)


def test_transition_point_frozen():
    tp = transition_point(params(gamma=0.5, hurst=0.5, epsilon=1e-3))
    assert tp.t_eps == pytest.approx(1e-2, rel=1e-12)
    assert tp.x_eps == pytest.approx(1e-4, rel=1e-12)

    unit = transition_point(params(epsilon=1.0))
    assert unit.t_eps == 1.0 and unit.x_eps == 1.0


@settings(max_examples=100, deadline=500)
@given(gh=valid_gamma_hurst(), log_eps=st.floats(-12.0, 0.0))
def test_transition_point_identities(gh, log_eps):
    g, h = gh
    p = ModelParams(g, h, 1.0, 1.0, math.exp(log_eps))
    tp = transition_point(p)
    # eps * t^H = x and x = t^(1/(1-gamma)), both in log space
    lt, lx = math.log(tp.t_eps), math.log(tp.x_eps)
    assert abs(math.log(p.epsilon) + h * lt - lx) <= 1e-10 * max(1.0, abs(lx))
    assert abs(lt / (1.0 - g) - lx) <= 1e-10 * max(1.0, abs(lx))


# -- comparison envelopes --------------------------------------------------------


def test_envelope_zero_noise_collapses():
    p = params(gamma=0.5)
    h = np.linspace(0.0, 2.0, 9)
    lo, up = comparison_envelope(1.5, 0.0, h, p, "increasing")
    ref = flow_phi(1.5, p.a_plus * h, 0.5)
    assert np.allclose(lo, ref, rtol=1e-14)
    assert np.allclose(up, ref, rtol=1e-14)


def test_envelope_validation():
    p = params(gamma=0.5)
    with pytest.raises(DomainError):
        comparison_envelope(1.0, 1.0, 1.0, p, "increasing")  # x - w <= 0
    with pytest.raises(DomainError):
        comparison_envelope(2.0, 0.1, 1.0, p, "sideways")
    with pytest.raises(DomainError):
        comparison_envelope(2.0, -0.1, 1.0, p, "increasing")


def test_envelope_at_zero_elapsed():
    p = params(gamma=-0.5, hurst=0.3)
    lo, up = comparison_envelope(2.0, 0.1, 0.0, p, "decreasing")
    assert lo == pytest.approx(2.0 + 0.1 - 0.2)
    assert up == pytest.approx(2.0 - 0.1 + 0.2)
    lo2, up2 = comparison_envelope(2.0, 0.1, 0.0, p, "increasing")
    assert (lo2, up2) == (pytest.approx(1.9), pytest.approx(2.1))


@pytest.mark.parametrize("gamma,monotone", [(-0.5, "decreasing"), (0.5, "increasing")])
def test_envelope_contains_perturbed_ode(gamma, monotone):
    # small fuzz here; the 10^3-perturbation sweep lives in the acceptance suite
    hurst = 0.3 if gamma < 0 else 0.5
    p = ModelParams(gamma, hurst, 1.0, 1.0, 1e-3)
    x_start, w_bar = 2.0, 0.1
    n_steps = 400
    h = np.linspace(0.0, 1.0, n_steps + 1)
    lo, up = comparison_envelope(x_start, w_bar, h, p, monotone)
    rng = np.random.default_rng(42)
    for _ in range(40):
        om = rng.uniform(0.5, 12.0, size=3)
        cs = rng.uniform(-1.0, 1.0, size=3)
        scale = w_bar / np.sum(np.abs(cs))

        # w(t) = scale * sum c_j sin(om_j t): w(0) = 0 and sup|w| <= w_bar
        def w_dot(t):
            return scale * np.sum(cs * om * np.cos(om * t))

        ys = rk4_power_ode(x_start, 1.0, gamma, 1.0, n_steps, forcing=w_dot)[:, 0]
        # the perturbed trajectory is x_start + int b + w(t), noise sup-bounded by w_bar
        assert np.all(ys >= lo - 1e-7)
        assert np.all(ys <= up + 1e-7)


# -- max deviation ----------------------------------------------------------------


def test_max_deviation_hand_case():
    t0, h_max = max_deviation(c_w=1.0, m_bound=3.0, a_coef=2.0, alpha=1.0, gamma=0.5)
    # c_{alpha,gamma} = 1 at alpha=1, gamma=1/2
    assert t0 == pytest.approx(1.5)
    assert h_max == pytest.approx(1.5 / (3.0 + 2.0 * 1.5) ** 2)


@pytest.mark.parametrize(
    "c_w,m,a,alpha,gamma",
    [
        (1.0, 3.0, 2.0, 1.0, 0.5),
        (0.3, 1.0, 1.0, 1.2, 0.5),
        (2.0, 0.5, 4.0, 0.6, -0.5),
        (1.0, 10.0, 0.5, 0.9, 0.2),
    ],
)
def test_max_deviation_vs_grid_search(c_w, m, a, alpha, gamma):
    t0, h_max = max_deviation(c_w, m, a, alpha, gamma)
    t = np.geomspace(t0 / 100.0, 100.0 * t0, 400001)
    h = c_w * t**alpha * (m + a * t) ** (-1.0 / (1.0 - gamma))
    assert h_max == pytest.approx(float(h.max()), rel=1e-6)
    assert t0 == pytest.approx(float(t[np.argmax(h)]), rel=1e-3)


def test_max_deviation_prefactor_and_range():
    t0a, ha = max_deviation(1.0, 3.0, 2.0, 1.1, 0.5)
    t0b, hb = max_deviation(2.0, 3.0, 2.0, 1.1, 0.5)
    assert t0b == t0a
    assert hb == pytest.approx(2.0 * ha)
    with pytest.raises(DomainError):
        max_deviation(1.0, 1.0, 1.0, 2.0, 0.5)  # alpha at the open endpoint
    with pytest.raises(DomainError):
        max_deviation(1.0, 1.0, 1.0, 0.0, 0.5)
