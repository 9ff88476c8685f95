"""Selection-event detection, sign/tail statistics, and pathwise diagnostics.

The detector asks, for each candidate anchor time s on the grid, whether the
path stays strictly above the drift envelope phi(x_eps, A t) minus a margin for
every grid time after s; psi_hat is the earliest anchor that works, i.e. the
time of the last envelope violation.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, Refusal
from .fbm import NoiseBundle, PastWindow, past_process_values
from .flow import ModelParams, TransitionPoint, flow_phi, pow_pos, transition_point
from .grids import GridError, Path, TimeGrid

__all__ = [
    "SelectionOutcome",
    "detect_selection",
    "detect_selection_batch",
    "outcomes_to_csv_bytes",
    "ProbReport",
    "estimate_probs",
    "TailFit",
    "tail_fit",
    "admissibility_check",
    "upper_bound_check",
    "upper_bound_excess_batch",
    "geometric_ladder",
    "holder_ladder_check",
]


@dataclass(frozen=True)
class SelectionOutcome:
    """Outcome of envelope detection on one path.

    sign is '+', '-', or 'undecided'; psi_hat is elapsed time from the grid
    start (nan when undecided); violations holds up to a capped number of
    (time, deficit) pairs measured against the winning side anchored at 0,
    while n_violations and max_excess always reflect the full count.
    """

    sign: str
    psi_hat: float
    anchor_index: int
    n_violations: int
    max_excess: float
    violations: tuple[tuple[float, float], ...] = ()


def _margin_threshold(
    p: ModelParams,
    tp: TransitionPoint,
    a_coef: float,
    alpha: float,
    margin_mode: str,
    rel_delta: float,
    elapsed: np.ndarray,
) -> np.ndarray:
    curve = flow_phi(tp.x_eps, a_coef * elapsed, p.gamma)
    if margin_mode == "paper":
        # eps * t_eps^(H - alpha) * t^alpha == x_eps * (t / t_eps)^alpha
        return curve - tp.x_eps * pow_pos(elapsed / tp.t_eps, alpha)
    if margin_mode == "relative":
        if not (0.0 < rel_delta < 1.0):
            raise DomainError(f"rel_delta must lie in (0, 1), got {rel_delta}")
        return (1.0 - rel_delta) * curve
    raise DomainError(f"margin_mode must be 'paper' or 'relative', got {margin_mode!r}")


def _earliest_anchors(x_cols: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Earliest anchor index per row, or n if no anchor works.

    x_cols[:, j-1] is the path at node j; theta[m] is the threshold at elapsed
    step m+1. Anchor i passes iff x at node j strictly exceeds theta[j-i-1]
    for every j > i.
    """
    m_paths, n = x_cols.shape
    j_grid = np.arange(1, n + 1)
    if np.all(np.diff(theta) >= 0.0):
        m_idx = np.searchsorted(theta, x_cols.ravel(), side="left").reshape(m_paths, n) - 1
        cand = j_grid[None, :] - 1 - m_idx
        return np.maximum(cand.max(axis=1), 0)
    out = np.empty(m_paths, dtype=np.int64)
    for r in range(m_paths):
        row = x_cols[r]
        found = n
        for i in range(n):
            if np.all(row[i:] > theta[: n - i]):
                found = i
                break
        out[r] = found
    return out


def detect_selection_batch(
    values: np.ndarray,
    grid: TimeGrid,
    p: ModelParams,
    alpha: float,
    margin_mode: str = "paper",
    rel_delta: float = 0.1,
    max_violations_recorded: int = 0,
    min_span_factor: float = 10.0,
) -> list[SelectionOutcome]:
    """Detection over a batch of paths sharing one grid (one row per path)."""
    if not (np.isfinite(alpha) and alpha > 0.0):
        raise DomainError(f"alpha must be positive, got {alpha}")
    vals = np.asarray(values, dtype=np.float64)
    if vals.ndim != 2 or vals.shape[1] != grid.n_nodes:
        raise DomainError(f"values must have shape (paths, {grid.n_nodes})")
    tp = transition_point(p)
    if grid.span < min_span_factor * tp.t_eps * (1.0 - 1e-12):
        raise Refusal(
            f"horizon {grid.span:.3g} is under {min_span_factor} transition times "
            f"(t_eps={tp.t_eps:.3g}); selection is undecidable at this scale"
        )
    n = grid.n
    dt = grid.dt
    elapsed = dt * np.arange(1, n + 1)
    th_plus = _margin_threshold(p, tp, p.a_plus, alpha, margin_mode, rel_delta, elapsed)
    th_minus = _margin_threshold(p, tp, p.a_minus, alpha, margin_mode, rel_delta, elapsed)
    x_cols = vals[:, 1:]
    i_plus = _earliest_anchors(x_cols, th_plus)
    i_minus = _earliest_anchors(-x_cols, th_minus)

    dec_plus = i_plus <= n - 1
    dec_minus = i_minus <= n - 1
    end_plus = vals[:, -1] >= 0.0
    # winner: the side with the earlier anchor; ties broken by the terminal sign
    plus_wins = np.where(
        dec_plus & dec_minus,
        np.where(i_plus == i_minus, end_plus, i_plus < i_minus),
        dec_plus,
    )
    decided = dec_plus | dec_minus
    side_plus = np.where(decided, plus_wins, end_plus)

    th_sel = np.where(side_plus[:, None], th_plus[None, :], th_minus[None, :])
    sx = np.where(side_plus[:, None], x_cols, -x_cols)
    deficit = th_sel - sx
    viol = deficit > 0.0
    n_viol = viol.sum(axis=1)
    max_exc = np.maximum(deficit.max(axis=1), 0.0)

    outcomes = []
    nodes = grid.nodes()
    for r in range(vals.shape[0]):
        if not decided[r]:
            sign = "undecided"
            psi = math.nan
            anchor = -1
        else:
            plus = bool(side_plus[r])
            sign = "+" if plus else "-"
            anchor = int(i_plus[r] if plus else i_minus[r])
            psi = float(anchor * dt)
        recorded: tuple[tuple[float, float], ...] = ()
        if max_violations_recorded > 0 and n_viol[r] > 0:
            js = np.nonzero(viol[r])[0][:max_violations_recorded]
            recorded = tuple(
                (float(nodes[j + 1] - grid.t0), float(deficit[r, j])) for j in js
            )
        outcomes.append(
            SelectionOutcome(
                sign=sign,
                psi_hat=psi,
                anchor_index=anchor,
                n_violations=int(n_viol[r]),
                max_excess=float(max_exc[r]),
                violations=recorded,
            )
        )
    return outcomes


def detect_selection(
    x: Path,
    p: ModelParams,
    alpha: float,
    margin_mode: str = "paper",
    rel_delta: float = 0.1,
    max_violations_recorded: int = 32,
) -> SelectionOutcome:
    """Envelope detection on a single path (see module docstring)."""
    return detect_selection_batch(
        x.values[None, :],
        x.grid,
        p,
        alpha,
        margin_mode=margin_mode,
        rel_delta=rel_delta,
        max_violations_recorded=max_violations_recorded,
    )[0]


def outcomes_to_csv_bytes(outcomes, path_ids, seeds) -> bytes:
    """Serialize an outcome batch: path_id, seed, sign, psi_hat, n_violations, max_excess."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["path_id", "seed", "sign", "psi_hat", "n_violations", "max_excess"])
    for pid, seed, oc in zip(path_ids, seeds, outcomes):
        w.writerow(
            [
                int(pid),
                int(seed),
                oc.sign,
                repr(float(oc.psi_hat)),
                oc.n_violations,
                repr(float(oc.max_excess)),
            ]
        )
    return buf.getvalue().encode("ascii")


# -- estimators ---------------------------------------------------------------


def _wilson(k: int, n: int, z: float = 1.96) -> tuple[float, float]:
    if n == 0:
        return (0.0, 1.0)
    ph = k / n
    z2 = z * z
    den = 1.0 + z2 / n
    center = (ph + z2 / (2.0 * n)) / den
    half = z * math.sqrt(ph * (1.0 - ph) / n + z2 / (4.0 * n * n)) / den
    return (max(0.0, center - half), min(1.0, center + half))


@dataclass(frozen=True)
class ProbReport:
    """Sign frequencies among decided paths, with Wilson intervals."""

    n_total: int
    n_plus: int
    n_minus: int
    n_undecided: int
    p_plus: float
    p_minus: float
    undecided_frac: float
    ci_plus: tuple[float, float]
    ci_minus: tuple[float, float]
    z: float = 1.96


def estimate_probs(outcomes, z: float = 1.96) -> ProbReport:
    signs = [oc.sign for oc in outcomes]
    n_total = len(signs)
    n_plus = signs.count("+")
    n_minus = signs.count("-")
    n_dec = n_plus + n_minus
    if n_dec < 100:
        raise Refusal(f"need at least 100 decided outcomes, got {n_dec}")
    return ProbReport(
        n_total=n_total,
        n_plus=n_plus,
        n_minus=n_minus,
        n_undecided=n_total - n_dec,
        p_plus=n_plus / n_dec,
        p_minus=n_minus / n_dec,
        undecided_frac=(n_total - n_dec) / n_total,
        ci_plus=_wilson(n_plus, n_dec, z),
        ci_minus=_wilson(n_minus, n_dec, z),
        z=z,
    )


@dataclass(frozen=True)
class TailFit:
    """Best fit of ln S(z) = intercept - slope * z^kappa over a kappa grid."""

    kappa_hat: float
    intercept: float
    slope: float
    r_squared: float
    z_grid: np.ndarray
    log_surv: np.ndarray

    def to_json_dict(self) -> dict:
        return {
            "kappa_hat": self.kappa_hat,
            "intercept": self.intercept,
            "slope": self.slope,
            "r_squared": self.r_squared,
            "z_grid": [float(v) for v in self.z_grid],
            "log_surv": [float(v) for v in self.log_surv],
        }


KAPPA_GRID = np.geomspace(0.05, 2.0, 40)


def tail_fit(psi_samples, t_eps: float, z_grid=None) -> TailFit:
    """Fit the normalized selection-time tail ln P(psi/t_eps > z) = c - a z^kappa.

    kappa is scanned over a fixed 40-point log grid in [0.05, 2]; the reported
    kappa_hat minimizes the residual sum of squares among fits with a > 0.
    """
    s = np.asarray(psi_samples, dtype=np.float64)
    if not (np.isfinite(t_eps) and t_eps > 0.0):
        raise DomainError(f"t_eps must be positive, got {t_eps}")
    if s.ndim != 1 or not np.all(np.isfinite(s)):
        raise DomainError("psi_samples must be a finite 1-d array")
    if s.size < 1000:
        raise Refusal(f"need at least 1000 samples for a tail fit, got {s.size}")
    z = s / t_eps
    if float(z.max()) == float(z.min()):
        raise Refusal("degenerate samples: all values equal")
    if z_grid is None:
        qs = np.quantile(z, np.linspace(0.50, 0.995, 30))
        zg = np.unique(qs)
    else:
        zg = np.asarray(z_grid, dtype=np.float64)
        if zg.ndim != 1 or zg.size < 4 or np.any(np.diff(zg) <= 0.0):
            raise DomainError("z_grid must be strictly increasing with >= 4 points")
        if zg[0] <= float(z.min()) or zg[-1] >= float(z.max()):
            raise Refusal("z_grid must lie strictly inside the observed support")
    zg = zg[zg > 0.0]
    surv = (z[None, :] > zg[:, None]).mean(axis=1)
    keep = surv * s.size >= 10.0
    keep &= surv > 0.0
    zg = zg[keep]
    surv = surv[keep]
    if zg.size < 4:
        raise Refusal("too few usable grid points with survival >= 10/n")
    y = np.log(surv)
    sstot = float(((y - y.mean()) ** 2).sum())
    if sstot == 0.0:
        raise Refusal("degenerate survival curve")
    best = None
    for kappa in KAPPA_GRID:
        f = zg**kappa
        design = np.column_stack([np.ones_like(f), -f])
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        ssr = float(((design @ coef - y) ** 2).sum())
        if coef[1] > 0.0 and (best is None or ssr < best[0]):
            best = (ssr, float(kappa), float(coef[0]), float(coef[1]))
    if best is None:
        raise Refusal("no decaying tail fit found (all slopes nonpositive)")
    ssr, kappa_hat, intercept, slope = best
    return TailFit(
        kappa_hat=kappa_hat,
        intercept=intercept,
        slope=slope,
        r_squared=1.0 - ssr / sstot,
        z_grid=zg,
        log_surv=y,
    )


# -- admissibility and pathwise bounds ---------------------------------------


def admissibility_check(
    noise: NoiseBundle,
    tau: float,
    sigma: float,
    xi: float,
    delta: float,
    c_af: float,
    c_ac: float,
    probe_grid,
) -> tuple[bool, tuple[float, float]]:
    """Evaluate the two past-process suprema against their envelopes.

    For probes (t, s): the far window (history start, tau-1] must satisfy
    |P_s| (1+t)^((sigma-H-2 delta) xi) / s^sigma <= c_Af, and the recent window
    [tau-1, tau] must satisfy |P_s| / s^(H-delta) <= c_Ac, where the past
    process is restarted at tau + t and evaluated at elapsed duration s.
    Returns (ok, (worst_far, worst_recent)).
    """
    pairs = [(float(t), float(s)) for t, s in probe_grid]
    if not pairs:
        raise DomainError("probe_grid must be non-empty")
    for t, s in pairs:
        if not (np.isfinite(t) and t >= 0.0 and np.isfinite(s) and s > 0.0):
            raise DomainError(f"probes need t >= 0 and s > 0, got ({t}, {s})")
    h = noise.hurst
    if not (0.0 < delta < h):
        raise DomainError(f"delta must lie in (0, H), got {delta}")
    if not (np.isfinite(sigma) and sigma > 0.0 and np.isfinite(xi)):
        raise DomainError("sigma must be positive and xi finite")
    if not (c_af > 0.0 and c_ac > 0.0):
        raise DomainError("c_Af and c_Ac must be positive")
    if h == 0.5:
        # Markov case: both past processes vanish identically
        return True, (0.0, 0.0)
    ext = noise.brownian_ext
    if ext is None:
        raise Refusal("admissibility requires a Volterra-mode bundle with Brownian history")
    g = ext.grid
    try:
        g.index_of(tau)
        i_tm1 = g.index_of(tau - 1.0)
    except GridError as exc:
        raise Refusal(f"history grid does not contain tau and tau-1: {exc}") from exc
    if i_tm1 <= 0:
        raise Refusal("history must extend strictly before tau - 1")
    e_far = (sigma - h - 2.0 * delta) * xi
    by_t: dict[float, list[float]] = {}
    for t, s in pairs:
        by_t.setdefault(t, []).append(s)
    worst_far = 0.0
    worst_rec = 0.0
    for t, ss in by_t.items():
        svals = np.asarray(ss, dtype=np.float64)
        restart = tau + t
        p_far = past_process_values(
            ext, PastWindow(g.t0, tau - 1.0, restart), svals, h
        )
        p_rec = past_process_values(
            ext, PastWindow(tau - 1.0, tau, restart), svals, h
        )
        far_ratio = np.abs(p_far) * (1.0 + t) ** e_far / svals**sigma
        rec_ratio = np.abs(p_rec) / svals ** (h - delta)
        worst_far = max(worst_far, float(far_ratio.max()))
        worst_rec = max(worst_rec, float(rec_ratio.max()))
    ok = worst_far <= c_af and worst_rec <= c_ac
    return ok, (worst_far, worst_rec)


def upper_bound_excess_batch(
    values: np.ndarray, sup_noise: np.ndarray, grid: TimeGrid, p: ModelParams
) -> np.ndarray:
    """Per-path excess over the two-sided flow envelope on [0, 1].

    sup_noise[i] is sup_t |W^H_t| of path i's driving noise (unscaled by eps).
    The gamma > 0 form is phi(2 eps ||w||, A t); the gamma <= 0 form is
    phi(0, A t) + 2 eps ||w||.
    """
    if grid.t0 != 0.0 or abs(grid.span - 1.0) > 1e-9:
        raise Refusal(f"the envelope bound is stated on [0, 1], got [{grid.t0}, {grid.t_end}]")
    vals = np.asarray(values, dtype=np.float64)
    sup_w = np.asarray(sup_noise, dtype=np.float64)
    if vals.ndim != 2 or vals.shape[1] != grid.n_nodes or sup_w.shape != (vals.shape[0],):
        raise DomainError("values must be (paths, nodes) with one sup_noise per path")
    if np.any(sup_w < 0.0):
        raise DomainError("sup_noise must be >= 0")
    t = grid.nodes()
    amp = 2.0 * p.epsilon * sup_w
    if p.gamma > 0.0:
        up = flow_phi(amp[:, None], p.a_plus * t[None, :], p.gamma)
        lo = -flow_phi(amp[:, None], p.a_minus * t[None, :], p.gamma)
    else:
        up = flow_phi(0.0, p.a_plus * t, p.gamma)[None, :] + amp[:, None]
        lo = -(flow_phi(0.0, p.a_minus * t, p.gamma)[None, :] + amp[:, None])
    excess = np.maximum(vals - up, lo - vals).max(axis=1)
    return np.maximum(excess, 0.0)


def upper_bound_check(
    x: Path, noise: NoiseBundle, p: ModelParams, tol: float | None = None
) -> tuple[bool, float]:
    """Check one simulated path against the pathwise flow envelope on [0, 1]."""
    gx, gn = x.grid, noise.grid
    if (gx.t0, gx.dt, gx.n) != (gn.t0, gn.dt, gn.n):
        raise Refusal("path and noise grids do not match")
    if tol is None:
        tol = 10.0 * math.sqrt(gx.dt)
    sup_w = float(np.abs(noise.fbm.values).max())
    excess = float(
        upper_bound_excess_batch(x.values[None, :], np.array([sup_w]), gx, p)[0]
    )
    return excess <= tol, excess


# -- geometric time ladder ----------------------------------------------------


def geometric_ladder(q: float, k_max: int) -> np.ndarray:
    """Rung times T_k = q (q^k - 1)/(q - 1) for k = 1..k_max (partial geometric sums)."""
    if not (np.isfinite(q) and q > 1.0):
        raise DomainError(f"q must be > 1, got {q}")
    if not (isinstance(k_max, (int, np.integer)) and k_max >= 0):
        raise DomainError(f"k_max must be a nonnegative integer, got {k_max!r}")
    k = np.arange(1, k_max + 1, dtype=np.float64)
    return q * (q**k - 1.0) / (q - 1.0)


def holder_ladder_check(
    brownian: Path,
    q: float,
    alpha: float,
    hurst: float,
    c: float,
    delta: float,
    max_window_nodes: int = 256,
):
    """First ladder rung k whose window Hoelder statistic beats its threshold.

    Window k is [T_k, T_{k+1}] with T_0 = 0; the statistic is the grid-pair
    supremum of |B_v - B_u| / (v - u)^(1/2 - delta) over up to max_window_nodes
    evenly subsampled nodes, compared against c * q^(k (alpha - H)). Returns
    the first failing k, or math.inf if every window covered by the data passes.
    The node cap is part of the declared accuracy: a coarser scan can only
    weaken the statistic.
    """
    if not (np.isfinite(q) and q > 1.0):
        raise DomainError(f"q must be > 1, got {q}")
    if not (np.isfinite(c) and c > 0.0):
        raise DomainError(f"c must be positive, got {c}")
    if not (0.0 < delta < 0.5):
        raise DomainError(f"delta must lie in (0, 1/2), got {delta}")
    if not (0.0 < hurst < 1.0):
        raise DomainError(f"hurst must lie in (0, 1), got {hurst}")
    if not np.isfinite(alpha):
        raise DomainError(f"alpha must be finite, got {alpha}")
    g = brownian.grid
    if g.t0 > 1e-12:
        raise DomainError("ladder windows start at 0; the path must too")
    t_end = g.t_end
    tol = 1e-9 * max(1.0, t_end)
    if q > t_end + tol:
        raise Refusal(
            f"path ends at {t_end}, before the first ladder window [0, {q}] completes"
        )
    ex = 0.5 - delta
    vals = brownian.values
    k = 0
    lo_t = 0.0
    while True:
        hi_t = q * (q ** (k + 1) - 1.0) / (q - 1.0)
        if hi_t > t_end + tol:
            return math.inf
        ia = int(math.ceil((lo_t - g.t0) / g.dt - 1e-9))
        ib = int(math.floor((hi_t - g.t0) / g.dt + 1e-9))
        ia = max(ia, 0)
        ib = min(ib, g.n)
        if ib - ia >= 1:
            count = min(ib - ia + 1, max_window_nodes)
            idx = np.unique(np.round(np.linspace(ia, ib, count)).astype(int))
            v = vals[idx]
            tt = g.t0 + idx * g.dt
            iu, jv = np.triu_indices(len(idx), k=1)
            ratios = np.abs(v[jv] - v[iu]) / (tt[jv] - tt[iu]) ** ex
            norm = float(ratios.max())
            if norm > c * q ** (k * (alpha - hurst)):
                return k
        lo_t = hi_t
        k += 1