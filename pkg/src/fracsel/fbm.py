"""Fractional Brownian motion synthesis and the Volterra decomposition toolkit.

Exact synthesis uses the circulant embedding of the fGn covariance (FFT route,
with a dense Cholesky fallback for tiny grids). The decomposition side provides
the Riemann-Liouville map B -> W^H, the past/noise split along restart times,
and the path norms used by the drift-vs-noise diagnostics. All singular kernel
integrals are evaluated through the integration-by-parts identity

    int_s^t f(r) dB_r = f(s)(B_t - B_s) - int_s^t f'(r) (B_r - B_t) dr

with the right-hand side computed exactly per grid cell against the piecewise
linear interpolant of B, so reconstruction identities hold to float rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DomainError, FbmSynthesisError, Refusal
from .grids import Path, TimeGrid

__all__ = [
    "MAX_SYNTHESIS_STEPS",
    "path_seed",
    "path_rng",
    "path_seed_word",
    "fgn_autocovariance",
    "generate_fbm_exact",
    "fbm_increments_batch",
    "kernel_G",
    "riemann_liouville",
    "riemann_liouville_offset",
    "PastWindow",
    "past_process",
    "past_process_values",
    "bridge_decompose",
    "norm_L",
    "norm_S",
    "norm_M",
    "norm_M_batch",
    "ibp2_constant",
    "NoiseBundle",
    "make_noise",
]

MAX_SYNTHESIS_STEPS = 1 << 20


def _check_hurst(hurst: float) -> None:
    if not (np.isfinite(hurst) and 0.0 < hurst < 1.0):
        raise DomainError(f"hurst must lie in (0, 1), got {hurst}")


# -- seeding ---------------------------------------------------------------


def path_seed(master_seed, index: int) -> np.random.SeedSequence:
    """Counter-based per-path entropy: master (int or tuple of ints) + path index."""
    if isinstance(master_seed, (list, tuple)):
        parts = [int(x) for x in master_seed]
    else:
        parts = [int(master_seed)]
    return np.random.SeedSequence(parts + [int(index)])


def path_rng(master_seed, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(path_seed(master_seed, index)))


def path_seed_word(master_seed, index: int) -> int:
    """A stable 64-bit fingerprint of the per-path entropy, for output tables."""
    return int(path_seed(master_seed, index).generate_state(1, np.uint64)[0])


# -- exact synthesis ---------------------------------------------------------


def fgn_autocovariance(lags, hurst: float) -> np.ndarray:
    """Autocovariance of unit-spacing fractional Gaussian noise at integer lags."""
    _check_hurst(hurst)
    k = np.abs(np.asarray(lags, dtype=np.float64))
    h2 = 2.0 * hurst
    return 0.5 * ((k + 1.0) ** h2 - 2.0 * k**h2 + np.abs(k - 1.0) ** h2)


_lambda_cache: dict[tuple[int, float], np.ndarray] = {}


def _circulant_lambda(n: int, hurst: float) -> np.ndarray:
    key = (n, hurst)
    lam = _lambda_cache.get(key)
    if lam is not None:
        return lam
    rho = fgn_autocovariance(np.arange(n + 1), hurst)
    row = np.concatenate([rho, rho[-2:0:-1]])  # lags 0..n, n-1..1; length 2n
    lam = np.fft.fft(row).real
    mx = float(lam.max())
    mn = float(lam.min())
    if mn < -1e-12 * max(mx, 1.0):
        raise FbmSynthesisError(
            f"circulant embedding is not positive semidefinite for n={n}, H={hurst}: "
            f"min eigenvalue {mn:.3e}"
        )
    lam = np.clip(lam, 0.0, None)
    if len(_lambda_cache) > 8:
        _lambda_cache.clear()
    _lambda_cache[key] = lam
    return lam


def _fgn_unit_circulant(lam: np.ndarray, draws: np.ndarray) -> np.ndarray:
    """Map standard normal draws (m, 2n) to unit-spacing fGn samples (m, n).

    With eigenvalues lam of the 2n circulant, set omega_0 = sqrt(lam_0/2n) V0,
    omega_n = sqrt(lam_n/2n) Vn, omega_k = sqrt(lam_k/4n)(V1_k + i V2_k) and fill
    the conjugate half; the FFT of omega then has E[X_j X_l] = rho(|j-l|) exactly.
    """
    m2 = lam.shape[0]
    n = m2 // 2
    omega = np.zeros((draws.shape[0], m2), dtype=np.complex128)
    omega[:, 0] = math.sqrt(lam[0] / m2) * draws[:, 0]
    omega[:, n] = math.sqrt(lam[n] / m2) * draws[:, 1]
    if n > 1:
        sk = np.sqrt(lam[1:n] / (2.0 * m2))
        omega[:, 1:n] = sk * (draws[:, 2::2] + 1j * draws[:, 3::2])
        omega[:, n + 1 :] = np.conj(omega[:, 1:n])[:, ::-1]
    return np.fft.fft(omega, axis=1)[:, :n].real


def _fgn_unit_cholesky(n: int, hurst: float, draw_rows: np.ndarray) -> np.ndarray:
    rho = fgn_autocovariance(np.arange(n), hurst)
    cov = scipy.linalg.toeplitz(rho)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise FbmSynthesisError(
            f"fGn covariance is not positive definite at n={n}, H={hurst}"
        ) from exc
    out = np.empty_like(draw_rows)
    # one gemv per path keeps results independent of batch shape
    for i in range(draw_rows.shape[0]):
        out[i] = chol @ draw_rows[i]
    return out


def _resolve_method(method: str, n: int) -> str:
    if method == "auto":
        return "cholesky" if n < 8 else "circulant"
    if method == "fft":
        return "circulant"
    if method in ("circulant", "cholesky"):
        return method
    raise DomainError(f"unknown synthesis method {method!r}")


def fbm_increments_batch(
    grid: TimeGrid, hurst: float, master_seed, indices, method: str = "auto"
) -> np.ndarray:
    """Exact fBm increments for the given path indices, one row per path.

    Row i is reproducible from (master_seed, indices[i]) alone, so any chunking
    of the index range yields byte-identical results.
    """
    _check_hurst(hurst)
    n = grid.n
    if n > MAX_SYNTHESIS_STEPS:
        raise Refusal(f"n={n} exceeds the synthesis cap of 2^20 steps")
    idx = list(indices)
    if hurst == 0.5:
        out = np.empty((len(idx), n))
        sq = math.sqrt(grid.dt)
        for i, j in enumerate(idx):
            out[i] = path_rng(master_seed, j).standard_normal(n)
        out *= sq
        return out
    use = _resolve_method(method, n)
    scale = grid.dt**hurst
    if use == "cholesky":
        draws = np.empty((len(idx), n))
        for i, j in enumerate(idx):
            draws[i] = path_rng(master_seed, j).standard_normal(n)
        return _fgn_unit_cholesky(n, hurst, draws) * scale
    lam = _circulant_lambda(n, hurst)
    draws = np.empty((len(idx), 2 * n))
    for i, j in enumerate(idx):
        draws[i] = path_rng(master_seed, j).standard_normal(2 * n)
    return _fgn_unit_circulant(lam, draws) * scale


def generate_fbm_exact(grid: TimeGrid, hurst: float, seed, method: str = "auto") -> Path:
    """One exact fBm path on the grid, pinned to 0 at the first node."""
    _check_hurst(hurst)
    n = grid.n
    if n > MAX_SYNTHESIS_STEPS:
        raise Refusal(f"n={n} exceeds the synthesis cap of 2^20 steps")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if hurst == 0.5:
        incr = rng.standard_normal(n) * math.sqrt(grid.dt)
    else:
        use = _resolve_method(method, n)
        scale = grid.dt**hurst
        if use == "cholesky":
            incr = _fgn_unit_cholesky(n, hurst, rng.standard_normal(n)[None, :])[0] * scale
        else:
            lam = _circulant_lambda(n, hurst)
            incr = _fgn_unit_circulant(lam, rng.standard_normal(2 * n)[None, :])[0] * scale
    values = np.concatenate([[0.0], np.cumsum(incr)])
    return Path(grid, values)


# -- Volterra kernel and decomposition ---------------------------------------


def kernel_G(u, s, r, hurst: float):
    """G(u, s, r) = (s + u - r)^(H-1/2) - (s - r)^(H-1/2), for r < s and u >= 0."""
    _check_hurst(hurst)
    uv = np.asarray(u, dtype=np.float64)
    sv = np.asarray(s, dtype=np.float64)
    rv = np.asarray(r, dtype=np.float64)
    scalar = uv.ndim == 0 and sv.ndim == 0 and rv.ndim == 0
    if np.any(np.atleast_1d(uv) < 0.0):
        raise DomainError("kernel_G requires u >= 0")
    gap = sv - rv
    if np.any(np.atleast_1d(gap) <= 0.0):
        raise DomainError("kernel_G requires r < s")
    e1 = hurst - 0.5
    out = np.exp(e1 * np.log(gap + uv)) - np.exp(e1 * np.log(gap))
    return float(out) if scalar else np.asarray(out)


def _rl_values(b: np.ndarray, dt: float, hurst: float, mu: float) -> np.ndarray:
    """N_k = int_{t0}^{t_k} (t_k + mu*dt - r)^(H-1/2) dB(r) for every node k.

    Evaluated via the integration-by-parts form with the kernel-derivative
    integral computed exactly per grid cell against the linear interpolant.
    mu = 0 puts the kernel singularity on the diagonal cell, which is handled
    by its closed form. O(n^2) via direct convolution (deterministic summation).
    """
    n = b.shape[0] - 1
    e1 = hurst - 0.5
    if e1 == 0.0:
        return b - b[0]
    e2 = hurst + 0.5
    q = np.diff(b) / dt
    kk = np.arange(1, n + 1, dtype=np.float64)
    bdry = np.zeros(n + 1)
    bdry[1:] = ((kk + mu) * dt) ** e1 * (b[1:] - b[0])

    lag = np.arange(n + 1, dtype=np.float64)
    y_hi = (lag + mu) * dt
    y_lo = (lag - 1.0 + mu) * dt
    first = 2 if mu == 0.0 else 1
    tt1 = np.zeros(n + 1)
    tt2 = np.zeros(n + 1)
    tt1[first:] = (y_hi[first:] ** e1 - y_lo[first:] ** e1) / e1
    tt2[first:] = (y_hi[first:] ** e2 - y_lo[first:] ** e2) / e2
    cq = y_hi * tt1 - tt2

    conv_b = np.convolve(b[:n], tt1)[: n + 1]
    conv_q = np.convolve(q, cq)[: n + 1]
    cum1 = np.cumsum(tt1)
    interior = conv_b - b * cum1 + conv_q
    if mu == 0.0:
        diag = np.zeros(n + 1)
        diag[1:] = -q * dt**e2 / e2
        interior = interior + diag
    return bdry + e1 * interior


def riemann_liouville(brownian: Path, hurst: float) -> Path:
    """The Volterra image N(t) = int_{t0}^t (t - r)^(H-1/2) dB_r on the input grid."""
    _check_hurst(hurst)
    return Path(brownian.grid, _rl_values(brownian.values, brownian.grid.dt, hurst, 0.0))


def riemann_liouville_offset(brownian: Path, hurst: float, offset: float) -> Path:
    """N_u(t) = int_{t0}^t (t + u - r)^(H-1/2) dB_r for a fixed look-ahead u >= 0."""
    _check_hurst(hurst)
    if not (np.isfinite(offset) and offset >= 0.0):
        raise DomainError(f"offset must be >= 0, got {offset}")
    mu = offset / brownian.grid.dt
    return Path(brownian.grid, _rl_values(brownian.values, brownian.grid.dt, hurst, mu))


@dataclass(frozen=True)
class PastWindow:
    """Integration window [u, v] of past Brownian history, viewed from restart time s >= v."""

    u: float
    v: float
    s: float

    def __post_init__(self):
        for name in ("u", "v", "s"):
            if not np.isfinite(getattr(self, name)):
                raise DomainError(f"window field {name} must be finite")
        if not (self.u <= self.v <= self.s):
            raise DomainError(f"need u <= v <= s, got {self.u}, {self.v}, {self.s}")


def past_process(brownian: Path, window: PastWindow, horizon: TimeGrid, hurst: float) -> Path:
    """P(w) = int_u^v G(w, s, r) dB_r sampled at durations w on the horizon grid.

    u and v must be grid nodes of the Brownian path; s may sit anywhere at or
    beyond v. The horizon grid holds elapsed durations (its t0 may be 0).
    """
    if horizon.t0 < 0.0:
        raise DomainError("horizon durations must be >= 0")
    vals = past_process_values(brownian, window, horizon.nodes(), hurst)
    return Path(horizon, vals)


def past_process_values(
    brownian: Path, window: PastWindow, durations: np.ndarray, hurst: float
) -> np.ndarray:
    """past_process at an arbitrary array of durations w >= 0."""
    _check_hurst(hurst)
    g = brownian.grid
    iu = g.index_of(window.u)
    iv = g.index_of(window.v)
    w = np.asarray(durations, dtype=np.float64)
    if np.any(w < 0.0):
        raise DomainError("durations must be >= 0")
    if iu == iv or hurst == 0.5:
        return np.zeros(w.shape)
    s = window.s

    b = brownian.values
    dt = g.dt
    e1 = hurst - 0.5
    e2 = hurst + 0.5
    cells = iv - iu
    r_left = g.nodes()[iu:iv]
    bj = b[iu:iv]
    q = np.diff(b[iu : iv + 1]) / dt
    c0 = b[iv]

    def j_raw_block(t_upper: np.ndarray) -> np.ndarray:
        # sum over cells of int (T - r)^(H - 3/2) (Btilde_r - B_v) dr without the
        # (H - 1/2) prefactor, for upper kernel times T >= v
        y2 = t_upper[:, None] - r_left[None, :]
        y1 = y2 - dt
        coef1 = (bj - c0)[None, :] + q[None, :] * y2
        head = np.zeros(len(t_upper))
        if cells > 1:
            head = (
                coef1[:, :-1] * (y2[:, :-1] ** e1 - y1[:, :-1] ** e1) / e1
                - q[None, :-1] * (y2[:, :-1] ** e2 - y1[:, :-1] ** e2) / e2
            ).sum(axis=1)
        # the last cell is singular exactly at T == v, where (Btilde - B_v)
        # vanishes linearly at the endpoint and the integral has a closed form
        y2l = y2[:, -1]
        y1l = y1[:, -1]
        sing = y1l <= 0.0
        last = np.empty(len(t_upper))
        last[sing] = -q[-1] * dt**e2 / e2
        reg = ~sing
        if np.any(reg):
            last[reg] = (
                coef1[reg, -1] * (y2l[reg] ** e1 - y1l[reg] ** e1) / e1
                - q[-1] * (y2l[reg] ** e2 - y1l[reg] ** e2) / e2
            )
        return head + last

    def j_raw(t_upper: np.ndarray) -> np.ndarray:
        block = max(1, 4_000_000 // max(cells, 1))
        if len(t_upper) <= block:
            return j_raw_block(t_upper)
        parts = [
            j_raw_block(t_upper[i : i + block]) for i in range(0, len(t_upper), block)
        ]
        return np.concatenate(parts)

    base = j_raw(np.array([s]))[0]
    shifted = j_raw(s + w)
    boundary = kernel_G(w, s, window.u, hurst) * (b[iv] - b[iu])
    return boundary + e1 * (shifted - base)


def bridge_decompose(brownian: Path) -> tuple[float, Path]:
    """Split a unit-interval path into (endpoint increment, bridge with exact zero ends)."""
    g = brownian.grid
    if abs(g.span - 1.0) > 1e-9:
        raise DomainError(f"bridge decomposition expects a unit interval, got span {g.span}")
    b = brownian.values
    z = float(b[-1] - b[0])
    u = (g.nodes() - g.t0) / g.span
    vals = b - b[0] - u * z
    # endpoints are zero up to rounding of u; pin them bitwise
    vals[0] = 0.0
    vals[-1] = 0.0
    return z, Path(g, vals)


# -- path norms ---------------------------------------------------------------


def _check_delta(delta: float) -> None:
    if not (np.isfinite(delta) and 0.0 < delta < 0.5):
        raise DomainError(f"delta must lie in (0, 1/2), got {delta}")


def norm_L(brownian: Path, u_start: float, t_end: float, delta: float) -> float:
    """sup over grid nodes r in [U, T] of |B_r - B_T| / (1 + T - r)^(1/2 + delta)."""
    _check_delta(delta)
    g = brownian.grid
    i0 = g.index_of(u_start)
    i1 = g.index_of(t_end)
    if i0 >= i1:
        raise DomainError(f"need U < T, got U={u_start}, T={t_end}")
    b = brownian.values
    r = g.nodes()[i0 : i1 + 1]
    num = np.abs(b[i0 : i1 + 1] - b[i1])
    den = (1.0 + (t_end - r)) ** (0.5 + delta)
    return float(np.max(num / den))


def norm_S(brownian: Path, t_end: float, delta: float) -> float:
    """sup over grid nodes r in [T-1, T) of |B_r - B_T| / (T - r)^(1/2 - delta)."""
    _check_delta(delta)
    g = brownian.grid
    i1 = g.index_of(t_end)
    i0 = g.index_of(t_end - 1.0)
    b = brownian.values
    r = g.nodes()[i0:i1]
    num = np.abs(b[i0:i1] - b[i1])
    den = (t_end - r) ** (0.5 - delta)
    return float(np.max(num / den))


def norm_M(brownian: Path, a: float, b_end: float, delta: float) -> float:
    """Scale-normalized grid Hoelder statistic on [a, b]:

    |b - a|^(-delta) * sup over node pairs u < v of |B_v - B_u| / (v - u)^(1/2 - delta).
    """
    _check_delta(delta)
    g = brownian.grid
    ia = g.index_of(a)
    ib = g.index_of(b_end)
    if ia >= ib:
        raise DomainError(f"need a < b, got a={a}, b={b_end}")
    vals = brownian.values[ia : ib + 1][None, :]
    return float(norm_M_batch(vals, g.dt, delta)[0])


def norm_M_batch(values: np.ndarray, dt: float, delta: float) -> np.ndarray:
    """norm_M over the full span of each row of values (shape (paths, nodes))."""
    _check_delta(delta)
    if values.ndim != 2 or values.shape[1] < 2:
        raise DomainError("values must be (paths, nodes) with at least 2 nodes")
    m = values.shape[1] - 1
    ex = 0.5 - delta
    best = np.zeros(values.shape[0])
    for lag in range(1, m + 1):
        d = np.abs(values[:, lag:] - values[:, :-lag]).max(axis=1)
        np.maximum(best, d / (lag * dt) ** ex, out=best)
    return (m * dt) ** (-delta) * best


def ibp2_constant(hurst: float, delta: float) -> float:
    """Implementation constant for the look-ahead integral bound.

    Bounds sup_{u <= 1} |int_s^v (v + u - r)^(H-1/2) dB_r| / (1 + v - s)^(H + delta)
    by this constant times (1 + t - s)^(2 delta) * norm_M(s, t): boundary term plus
    kernel-derivative integral, each controlled by the grid Hoelder statistic.
    """
    _check_hurst(hurst)
    if not (np.isfinite(delta) and 0.0 < delta < hurst):
        raise DomainError(f"delta must lie in (0, H), got {delta}")
    return 2.0 * (1.0 + abs(hurst - 0.5) / (hurst - delta))


# -- bundled noise ------------------------------------------------------------


@dataclass(frozen=True)
class NoiseBundle:
    """A driving fBm path plus whatever Brownian structure produced it.

    Exact-mode bundles at H != 1/2 carry no Brownian member (there is no
    consistent driver); Volterra-mode bundles carry both the restricted driver
    and the full extended-history path used to build the fBm.
    """

    fbm: Path
    hurst: float
    brownian: Path | None = None
    history_horizon: float = 0.0
    brownian_ext: Path | None = None

    def __post_init__(self):
        _check_hurst(self.hurst)
        if self.fbm.values[0] != 0.0:
            raise DomainError("bundle fbm must start at exactly 0")
        if self.history_horizon < 0.0:
            raise DomainError("history_horizon must be >= 0")
        g = self.fbm.grid
        if self.brownian is not None:
            gb = self.brownian.grid
            if (gb.t0, gb.dt, gb.n) != (g.t0, g.dt, g.n):
                raise DomainError("brownian member must share the fbm grid")
        if self.brownian_ext is not None:
            ge = self.brownian_ext.grid
            if abs(ge.dt - g.dt) > 1e-12 * g.dt or abs(ge.t_end - g.t_end) > 1e-9 * g.dt:
                raise DomainError("extended history must share dt and end node with the fbm grid")

    @property
    def grid(self) -> TimeGrid:
        return self.fbm.grid

    def increments(self) -> np.ndarray:
        return self.fbm.increments()

    def underlying_brownian(self) -> Path:
        if self.brownian is None:
            raise DomainError(
                "exact-mode bundle at H != 1/2 has no consistent Brownian driver"
            )
        return self.brownian

    def truncation_std_bound(self, w: float) -> float:
        """Std bound on the neglected pre-history contribution at look-ahead w.

        |H - 1/2| * w * h0^(H-1) / sqrt(2 - 2H) for history length h0; infinite
        when no history was kept, zero in the Markov case H = 1/2.
        """
        if not (np.isfinite(w) and w >= 0.0):
            raise DomainError(f"w must be >= 0, got {w}")
        if self.hurst == 0.5 or w == 0.0:
            return 0.0
        if self.history_horizon <= 0.0:
            return math.inf
        h0 = self.history_horizon
        return (
            abs(self.hurst - 0.5)
            * w
            * h0 ** (self.hurst - 1.0)
            / math.sqrt(2.0 - 2.0 * self.hurst)
        )

    @classmethod
    def exact(cls, grid: TimeGrid, hurst: float, seed, method: str = "auto") -> "NoiseBundle":
        w = generate_fbm_exact(grid, hurst, seed, method)
        if hurst == 0.5:
            return cls(fbm=w, hurst=hurst, brownian=w)
        return cls(fbm=w, hurst=hurst)

    @classmethod
    def from_brownian(cls, brownian_ext: Path, hurst: float, t0: float) -> "NoiseBundle":
        """Volterra construction: map an extended Brownian path through the
        Riemann-Liouville kernel and restart the result at t0 (a grid node)."""
        _check_hurst(hurst)
        g = brownian_ext.grid
        k0 = g.index_of(t0)
        if k0 >= g.n:
            raise DomainError("t0 must leave at least one step of future")
        fbm_ext = riemann_liouville(brownian_ext, hurst)
        vals = fbm_ext.values[k0:] - fbm_ext.values[k0]
        vals[0] = 0.0
        sub = TimeGrid(g.t0 + k0 * g.dt, g.dt, g.n - k0)
        restricted = brownian_ext.values[k0:] - brownian_ext.values[k0]
        return cls(
            fbm=Path(sub, vals),
            hurst=hurst,
            brownian=Path(sub, restricted),
            history_horizon=k0 * g.dt,
            brownian_ext=brownian_ext,
        )


def make_noise(
    grid: TimeGrid,
    hurst: float,
    seed,
    mode: str = "exact",
    history_horizon: float = 1e3,
    method: str = "auto",
) -> NoiseBundle:
    """Build a NoiseBundle in either synthesis mode.

    'exact' samples the fBm law directly on the grid. 'volterra' samples a
    Brownian path with history_horizon extra time before t0 and pushes it
    through the truncated moving-average kernel.
    """
    if mode == "exact":
        return NoiseBundle.exact(grid, hurst, seed, method)
    if mode != "volterra":
        raise DomainError(f"unknown noise mode {mode!r}")
    n_hist = int(math.ceil(history_horizon / grid.dt - 1e-9)) if history_horizon > 0 else 0
    n_ext = grid.n + n_hist
    if n_ext > MAX_SYNTHESIS_STEPS:
        raise Refusal(
            f"extended grid needs {n_ext} steps, over the 2^20 cap; "
            "reduce history_horizon or coarsen dt"
        )
    ext_grid = TimeGrid(grid.t0 - n_hist * grid.dt, grid.dt, n_ext)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    incr = rng.standard_normal(n_ext) * math.sqrt(grid.dt)
    bvals = np.concatenate([[0.0], np.cumsum(incr)])
    ext = Path(ext_grid, bvals)
    return NoiseBundle.from_brownian(ext, hurst, ext_grid.t0 + n_hist * grid.dt)
