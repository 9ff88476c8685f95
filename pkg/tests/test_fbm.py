import math

import numpy as np
import pytest
import scipy.integrate
import scipy.linalg
from scipy import stats

import fracsel.fbm as fbm_mod
from fracsel import (
    DomainError,
    FbmSynthesisError,
    NoiseBundle,
    Path,
    PastWindow,
    Refusal,
    TimeGrid,
    bridge_decompose,
    fbm_increments_batch,
    fgn_autocovariance,
    generate_fbm_exact,
    ibp2_constant,
    kernel_G,
    make_noise,
    norm_L,
    norm_M,
    norm_M_batch,
    norm_S,
    past_process,
    riemann_liouville,
    riemann_liouville_offset,
)
from fracsel.fbm import _fgn_unit_cholesky, path_rng, past_process_values

from conftest import brownian_path, path_from_fn

SEED = 20260822


# -- autocovariance and synthesis ---------------------------------------------


def test_fgn_autocovariance_values():
    for h in (0.25, 0.75):
        rho = fgn_autocovariance(np.arange(4), h)
        assert rho[0] == 1.0
        assert rho[1] == pytest.approx(2.0 ** (2 * h - 1) - 1.0, rel=1e-14)
    rho_bm = fgn_autocovariance(np.arange(6), 0.5)
    assert np.array_equal(rho_bm, [1.0, 0.0, 0.0, 0.0, 0.0, 0.0])


def test_generate_deterministic_and_zero_start():
    g = TimeGrid(0.0, 0.01, 128)
    a = generate_fbm_exact(g, 0.7, seed=SEED)
    b = generate_fbm_exact(g, 0.7, seed=SEED)
    assert np.array_equal(a.values, b.values)
    assert a.values[0] == 0.0
    c = generate_fbm_exact(g, 0.7, seed=SEED + 1)
    assert not np.array_equal(a.values, c.values)


def test_brownian_case_matches_plain_draws():
    g = TimeGrid(0.0, 0.04, 50)
    p = generate_fbm_exact(g, 0.5, seed=123)
    rng = np.random.default_rng(123)
    incr = rng.standard_normal(50) * math.sqrt(0.04)
    assert np.array_equal(p.increments(), incr)


def test_batch_chunk_and_order_invariance():
    g = TimeGrid(0.0, 0.5, 64)
    whole = fbm_increments_batch(g, 0.7, SEED, range(10))
    top = fbm_increments_batch(g, 0.7, SEED, range(5))
    bot = fbm_increments_batch(g, 0.7, SEED, range(5, 10))
    assert np.array_equal(whole, np.vstack([top, bot]))
    # row i depends on indices[i] only, in any order, and fft == auto here
    pick = fbm_increments_batch(g, 0.7, SEED, [7, 2], method="fft")
    assert np.array_equal(pick[0], whole[7])
    assert np.array_equal(pick[1], whole[2])


def test_batch_seed_streams_differ():
    g = TimeGrid(0.0, 0.5, 32)
    a = fbm_increments_batch(g, 0.6, 1, [0])
    b = fbm_increments_batch(g, 0.6, 2, [0])
    assert not np.array_equal(a, b)


def test_synthesis_cap():
    g = TimeGrid(0.0, 1.0, 2**20 + 1)
    with pytest.raises(Refusal):
        generate_fbm_exact(g, 0.7, seed=0)


def test_variance_at_unit_time():
    # W_1 ~ N(0, 1) for any H on a grid reaching t = 1
    g = TimeGrid(0.0, 1.0 / 256.0, 256)
    m = 100_000
    w1 = np.empty(m)
    for lo in range(0, m, 10_000):
        inc = fbm_increments_batch(g, 0.7, SEED, range(lo, lo + 10_000))
        w1[lo : lo + 10_000] = inc.sum(axis=1)
    var = w1.var()
    se = math.sqrt(2.0 / m)  # var of the sample variance of N(0,1)
    assert abs(var - 1.0) < 3.0 * se
    assert abs(w1.mean()) < 3.0 / math.sqrt(m)


def test_cholesky_factor_reproduces_covariance():
    n, h = 16, 0.3
    cols = _fgn_unit_cholesky(n, h, np.eye(n))
    chol = cols.T  # row i of the input picks out column i of the factor
    cov = chol @ chol.T
    want = scipy.linalg.toeplitz(fgn_autocovariance(np.arange(n), h))
    assert np.allclose(cov, want, atol=1e-12)


def test_cholesky_and_fft_same_marginal_variance():
    g = TimeGrid(0.0, 1.0, 16)
    m = 20_000
    for method in ("cholesky", "fft"):
        inc = fbm_increments_batch(g, 0.3, SEED, range(m), method=method)
        w = np.cumsum(inc, axis=1)
        t = g.nodes()[1:]
        var = w.var(axis=0)
        se = math.sqrt(2.0 / m) * t ** (2 * 0.3)
        assert np.all(np.abs(var - t ** (2 * 0.3)) < 4.0 * se)


def test_non_embeddable_covariance_is_refused(monkeypatch):
    def fake(lags, hurst):
        # rho(0) < 0 cannot come from any covariance; the eigenvalue check must fire
        return -np.ones(np.shape(lags))

    monkeypatch.setattr(fbm_mod, "fgn_autocovariance", fake)
    with pytest.raises(FbmSynthesisError):
        fbm_mod._circulant_lambda(64, 0.7)


# -- the kernel and its integrals ---------------------------------------------


def test_kernel_markov_degeneracy():
    for u, s, r in [(0.7, 2.0, 1.25), (0.0, 1.0, 0.5), (3.0, 5.0, -2.0)]:
        assert kernel_G(u, s, r, 0.5) == 0.0


def test_kernel_values_and_domain():
    # 2^(-1/4) - 1, checked against 50-digit arithmetic offline
    assert kernel_G(1.0, 1.0, 0.0, 0.25) == pytest.approx(-0.15910358474628545, abs=1e-15)
    assert kernel_G(0.0, 3.0, 1.0, 0.3) == 0.0
    u = np.array([0.0, 1.0])
    out = kernel_G(u, 1.0, 0.0, 0.25)
    assert out[0] == 0.0 and out[1] == pytest.approx(2.0 ** -0.25 - 1.0)
    with pytest.raises(DomainError):
        kernel_G(1.0, 1.0, 1.0, 0.25)
    with pytest.raises(DomainError):
        kernel_G(1.0, 1.0, 2.0, 0.25)


def test_riemann_liouville_markov_identity():
    b = brownian_path(TimeGrid(0.0, 0.1, 40), SEED)
    out = riemann_liouville(b, 0.5)
    assert np.array_equal(out.values, b.values - b.values[0])


def test_riemann_liouville_zero_path():
    g = TimeGrid(0.0, 0.1, 20)
    z = Path(g, np.zeros(21))
    assert np.array_equal(riemann_liouville(z, 0.3).values, np.zeros(21))


@pytest.mark.parametrize("h", [0.3, 0.75])
def test_riemann_liouville_smooth_oracle(h):
    # deterministic integrand: B(r) = sin(3r), so dB = 3 cos(3r) dr
    g = TimeGrid(0.0, 1.0 / 4096.0, 4096)
    b = path_from_fn(g, lambda r: math.sin(3.0 * r))
    out = riemann_liouville(b, h)
    for s in (0.25, 0.5, 1.0):
        ref, err = scipy.integrate.quad(
            lambda r: 3.0 * math.cos(3.0 * r), 0.0, s, weight="alg", wvar=(0.0, h - 0.5)
        )
        got = out.value_at(s)
        assert err < 1e-9
        assert got == pytest.approx(ref, rel=1e-6)


@pytest.mark.parametrize("h", [0.3, 0.75])
def test_riemann_liouville_offset_smooth_oracle(h):
    g = TimeGrid(0.0, 1.0 / 2048.0, 2048)
    b = path_from_fn(g, lambda r: math.sin(3.0 * r))
    u = 0.35
    out = riemann_liouville_offset(b, h, u)
    for s in (0.5, 1.0):
        ref, err = scipy.integrate.quad(
            lambda r: (s + u - r) ** (h - 0.5) * 3.0 * math.cos(3.0 * r), 0.0, s
        )
        assert err < 1e-9
        assert out.value_at(s) == pytest.approx(ref, rel=1e-6)


def test_riemann_liouville_offset_zero_matches_plain():
    b = brownian_path(TimeGrid(0.0, 0.05, 60), SEED + 3)
    a = riemann_liouville(b, 0.3)
    c = riemann_liouville_offset(b, 0.3, 0.0)
    assert np.allclose(a.values, c.values, rtol=0, atol=1e-12)
    with pytest.raises(DomainError):
        riemann_liouville_offset(b, 0.3, -0.5)


# -- the past process ----------------------------------------------------------


def test_past_process_markov_and_empty_window():
    b = brownian_path(TimeGrid(0.0, 0.25, 16), SEED)
    hz = TimeGrid(0.0, 0.5, 4)
    p = past_process(b, PastWindow(0.5, 2.0, 3.0), hz, 0.5)
    assert np.array_equal(p.values, np.zeros(5))
    p2 = past_process(b, PastWindow(1.0, 1.0, 2.0), hz, 0.25)
    assert np.array_equal(p2.values, np.zeros(5))


def test_past_window_validation():
    with pytest.raises(DomainError):
        PastWindow(2.0, 1.0, 3.0)
    with pytest.raises(DomainError):
        PastWindow(0.0, 2.0, 1.0)
    b = brownian_path(TimeGrid(0.0, 0.25, 8), SEED)
    with pytest.raises(DomainError):
        # window endpoints must be grid nodes
        past_process(b, PastWindow(0.1, 1.0, 1.5), TimeGrid(0.0, 0.5, 2), 0.25)


def test_past_process_smooth_oracle():
    h = 0.3
    g = TimeGrid(0.0, 1.0 / 2048.0, 2048)
    b = path_from_fn(g, lambda r: math.sin(3.0 * r))
    u, v, s = 0.25, 0.75, 1.0
    w = np.array([0.1, 0.5, 1.5])
    got = past_process_values(b, PastWindow(u, v, s), w, h)
    for wi, gi in zip(w, got):
        ref, err = scipy.integrate.quad(
            lambda r: float(kernel_G(wi, s, r, h)) * 3.0 * math.cos(3.0 * r), u, v
        )
        assert err < 1e-9
        assert gi == pytest.approx(ref, rel=1e-5)


def test_past_process_additivity():
    h = 0.7
    b = brownian_path(TimeGrid(0.0, 1.0 / 64.0, 256), SEED + 9)
    w = np.linspace(0.0, 2.0, 9)
    whole = past_process_values(b, PastWindow(0.5, 2.5, 3.0), w, h)
    left = past_process_values(b, PastWindow(0.5, 1.5, 3.0), w, h)
    right = past_process_values(b, PastWindow(1.5, 2.5, 3.0), w, h)
    assert np.allclose(left + right, whole, rtol=0, atol=1e-8)


def test_reconstruction_identity():
    # fbm(t) - fbm(s) splits into the restarted kernel integral plus the past term
    h = 0.3
    g = TimeGrid(0.0, 1.0 / 64.0, 128)
    bundle = make_noise(g, h, seed=SEED, mode="volterra", history_horizon=2.0)
    ext = bundle.brownian_ext
    s = 0.5
    k = ext.grid.index_of(s)
    rest = Path(
        TimeGrid(s, ext.grid.dt, ext.grid.n - k), ext.values[k:] - ext.values[k]
    )
    new_part = riemann_liouville(rest, h)
    durations = np.arange(rest.grid.n + 1) * ext.grid.dt
    past_part = past_process_values(ext, PastWindow(ext.grid.t0, s, s), durations, h)

    i0 = g.index_of(s)
    lhs = bundle.fbm.values[i0:] - bundle.fbm.values[i0]
    rhs = new_part.values + past_part
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-9)


# -- bridge and norms ------------------------------------------------------------


def test_bridge_linear_path():
    g = TimeGrid(2.0, 0.05, 20)
    p = path_from_fn(g, lambda t: 3.0 * t + 1.0)
    z, br = bridge_decompose(p)
    assert z == pytest.approx(3.0, abs=1e-12)
    assert np.allclose(br.values, 0.0, atol=1e-12)


def test_bridge_endpoints_and_reconstruction():
    g = TimeGrid(-0.5, 0.01, 100)
    b = brownian_path(g, SEED + 4)
    z, br = bridge_decompose(b)
    assert br.values[0] == 0.0 and br.values[-1] == 0.0
    u = (g.nodes() - g.t0) / g.span
    recon = b.values[0] + u * z + br.values
    assert np.allclose(recon, b.values, rtol=0, atol=1e-12)


def test_bridge_needs_unit_span():
    g = TimeGrid(0.0, 0.01, 50)
    with pytest.raises(DomainError):
        bridge_decompose(brownian_path(g, 1))


def test_norm_L():
    g = TimeGrid(0.0, 0.05, 100)
    delta = 0.1
    const = Path(g, np.full(101, 2.5))
    assert norm_L(const, 0.0, 5.0, delta) == 0.0

    t_end = 5.0
    p = path_from_fn(g, lambda r: t_end - r)
    got = norm_L(p, 0.0, t_end, delta)
    want = max(
        (t_end - r) / (1.0 + t_end - r) ** (0.5 + delta) for r in g.nodes()
    )
    assert got == pytest.approx(want, rel=1e-12)

    b = brownian_path(g, SEED)
    shifted = Path(g, b.values + 17.0)
    assert norm_L(shifted, 0.5, 4.0, delta) == norm_L(b, 0.5, 4.0, delta)
    with pytest.raises(DomainError):
        norm_L(b, 3.0, 3.0, delta)
    with pytest.raises(DomainError):
        norm_L(b, 0.0, 5.0, 0.7)


def test_norm_S():
    g = TimeGrid(0.0, 0.05, 100)
    delta = 0.15
    const = Path(g, np.zeros(101))
    assert norm_S(const, 3.0, delta) == 0.0

    saw = path_from_fn(g, lambda r: abs((r * 3.7) % 1.0 - 0.5))
    t_end = 4.0
    got = norm_S(saw, t_end, delta)
    i1 = g.index_of(t_end)
    i0 = g.index_of(t_end - 1.0)
    want = max(
        abs(saw.values[i] - saw.values[i1]) / (t_end - g.nodes()[i]) ** (0.5 - delta)
        for i in range(i0, i1)
    )
    assert got == pytest.approx(want, rel=1e-12)

    b = brownian_path(g, SEED + 1)
    shifted = Path(g, b.values - 4.0)
    assert norm_S(shifted, 2.0, delta) == norm_S(b, 2.0, delta)


def test_norm_M_against_brute_force():
    g = TimeGrid(0.0, 1.0 / 24.0, 120)
    delta = 0.1
    b = brownian_path(g, SEED + 2)
    got = norm_M(b, 0.0, 5.0, delta)
    nodes = g.nodes()
    vals = b.values
    best = 0.0
    for i in range(len(nodes)):
        for j in range(i + 1, len(nodes)):
            best = max(
                best,
                abs(vals[j] - vals[i]) / (nodes[j] - nodes[i]) ** (0.5 - delta),
            )
    want = 5.0 ** (-delta) * best
    assert got == pytest.approx(want, rel=1e-12)


def test_norm_M_simple_cases():
    g1 = TimeGrid(0.0, 1.0, 1)
    assert norm_M(Path(g1, [0.0, 1.0]), 0.0, 1.0, 0.2) == pytest.approx(1.0)
    g = TimeGrid(0.0, 0.5, 8)
    assert norm_M(Path(g, np.full(9, 3.0)), 0.0, 4.0, 0.2) == 0.0
    with pytest.raises(DomainError):
        norm_M(Path(g, np.zeros(9)), 2.0, 2.0, 0.2)


def test_norm_M_batch_matches_single():
    g = TimeGrid(0.0, 0.125, 32)
    rows = np.vstack([brownian_path(g, s).values for s in range(5)])
    batch = norm_M_batch(rows, g.dt, 0.1)
    for i in range(5):
        assert batch[i] == pytest.approx(norm_M(Path(g, rows[i]), 0.0, 4.0, 0.1), rel=1e-12)


def test_norm_M_scale_invariance_in_law():
    # Brownian self-similarity makes M over [0, lambda] equal in law to M over
    # [0, 1] when both use the same node count
    n, m, delta = 64, 10_000, 0.1
    rng = np.random.default_rng(SEED)

    def sample(span):
        dt = span / n
        inc = rng.standard_normal((m, n)) * math.sqrt(dt)
        vals = np.concatenate([np.zeros((m, 1)), np.cumsum(inc, axis=1)], axis=1)
        return norm_M_batch(vals, dt, delta)

    a = sample(1.0)
    b = sample(4.0)
    res = stats.ks_2samp(a, b)
    assert res.pvalue > 1e-3
    assert res.statistic < 0.02


# -- the look-ahead integral bound ----------------------------------------------


def test_ibp2_constant_formula():
    assert ibp2_constant(0.5, 0.1) == pytest.approx(2.0)
    assert ibp2_constant(0.7, 0.1) == pytest.approx(2.0 * (1.0 + 0.2 / 0.6))
    with pytest.raises(DomainError):
        ibp2_constant(0.3, 0.3)


@pytest.mark.parametrize("h", [0.3, 0.7])
def test_ibp2_bound_on_sampled_paths(h):
    delta = 0.1
    s, t = 0.0, 2.0
    g = TimeGrid(s, 1.0 / 32.0, 64)
    c_h = ibp2_constant(h, delta)
    offsets = [0.0, 0.25, 0.5, 1.0]
    n_paths = 1000
    rows = np.empty((n_paths, g.n_nodes))
    rng = np.random.default_rng(SEED)
    inc = rng.standard_normal((n_paths, g.n)) * math.sqrt(g.dt)
    rows[:, 0] = 0.0
    rows[:, 1:] = np.cumsum(inc, axis=1)
    m_norms = norm_M_batch(rows, g.dt, delta)
    v = g.nodes()
    den = (1.0 + v - s) ** (h + delta)
    worst = 0.0
    for i in range(n_paths):
        p = Path(g, rows[i])
        sup_ratio = 0.0
        for u in offsets:
            nu = riemann_liouville_offset(p, h, u)
            sup_ratio = max(sup_ratio, float(np.max(np.abs(nu.values) / den)))
        bound = c_h * (1.0 + t - s) ** (2.0 * delta) * m_norms[i]
        assert sup_ratio <= bound
        worst = max(worst, sup_ratio / bound)
    # the constant should not be wildly loose either; keep a log of the slack
    assert worst > 0.01


# -- bundles ---------------------------------------------------------------------


def test_exact_bundle_brownian_case_shares_path():
    g = TimeGrid(0.0, 0.125, 16)
    nb = make_noise(g, 0.5, seed=SEED)
    assert nb.brownian is nb.fbm
    assert nb.underlying_brownian() is nb.fbm


def test_exact_bundle_rough_case_has_no_driver():
    g = TimeGrid(0.0, 0.125, 16)
    nb = make_noise(g, 0.7, seed=SEED)
    assert nb.brownian is None
    with pytest.raises(DomainError):
        nb.underlying_brownian()


def test_volterra_bundle_layout():
    g = TimeGrid(0.0, 0.25, 8)
    nb = make_noise(g, 0.3, seed=SEED, mode="volterra", history_horizon=1.0)
    assert nb.fbm.values[0] == 0.0
    assert nb.brownian.values[0] == 0.0
    assert nb.history_horizon == pytest.approx(1.0)
    ext = nb.brownian_ext
    assert ext.grid.t0 == pytest.approx(-1.0)
    assert ext.grid.t_end == pytest.approx(g.t_end)
    # restricted driver is the extended path re-zeroed at t0
    k = ext.grid.index_of(0.0)
    assert np.array_equal(nb.brownian.values, ext.values[k:] - ext.values[k])


def test_volterra_seed_determinism():
    g = TimeGrid(0.0, 0.25, 8)
    a = make_noise(g, 0.3, seed=7, mode="volterra", history_horizon=1.0)
    b = make_noise(g, 0.3, seed=7, mode="volterra", history_horizon=1.0)
    assert np.array_equal(a.fbm.values, b.fbm.values)


def test_make_noise_rejects_bad_mode_and_cap():
    g = TimeGrid(0.0, 0.25, 8)
    with pytest.raises(DomainError):
        make_noise(g, 0.3, seed=0, mode="spectral")
    with pytest.raises(Refusal):
        make_noise(g, 0.3, seed=0, mode="volterra", history_horizon=1e9)


def test_truncation_std_bound():
    g = TimeGrid(0.0, 0.25, 8)
    nb = make_noise(g, 0.3, seed=0, mode="volterra", history_horizon=4.0)
    w = 1.5
    want = 0.2 * w * 4.0 ** (0.3 - 1.0) / math.sqrt(2.0 - 0.6)
    assert nb.truncation_std_bound(w) == pytest.approx(want, rel=1e-12)
    assert nb.truncation_std_bound(0.0) == 0.0

    markov = make_noise(g, 0.5, seed=0)
    assert markov.truncation_std_bound(3.0) == 0.0
    exact_rough = make_noise(g, 0.3, seed=0)
    assert exact_rough.truncation_std_bound(1.0) == math.inf


def test_path_rng_counter_isolation():
    a = path_rng(SEED, 0).standard_normal(4)
    b = path_rng(SEED, 1).standard_normal(4)
    a2 = path_rng(SEED, 0).standard_normal(4)
    assert np.array_equal(a, a2)
    assert not np.array_equal(a, b)
