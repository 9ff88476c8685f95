"""Time-stepping schemes for dX = b(X) dt + eps dW^H and the law-scaling diagnostic.

Two schemes: regularized Euler, and a Lie splitting that applies the exact drift
flow between noise kicks. Both commute exactly with the transition-point
rescaling on grids proportional to t_eps, which is what makes the scaling
diagnostics sharp null tests rather than approximations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from .errors import DomainError, IntegrationError, Refusal
from .fbm import fbm_increments_batch
from .flow import ModelParams, transition_point
from .grids import Path, TimeGrid

__all__ = [
    "default_reg_delta",
    "integrate",
    "integrate_batch",
    "ScalingReport",
    "scaling_check",
]

SCHEMES = ("euler", "flow-splitting")


def default_reg_delta(params: ModelParams, dt: float) -> float:
    """Euler drift regularization scale dt^(1/(1-gamma)).

    This is the self-consistent choice: it equals the height the flow itself
    reaches from 0 in one step (up to a constant), and it rescales exactly
    under the eps -> 1 reduction on proportional grids.
    """
    if dt <= 0.0:
        raise DomainError(f"dt must be positive, got {dt}")
    return dt ** (1.0 / (1.0 - params.gamma))


def _drift_reg(x: np.ndarray, params: ModelParams, reg: float) -> np.ndarray:
    """sign(x) * A_side * (|x| v reg)^gamma, and exactly 0 at x = 0."""
    g = params.gamma
    out = np.zeros_like(x)
    pos = x > 0.0
    neg = x < 0.0
    if np.any(pos):
        base = np.maximum(x[pos], reg)
        out[pos] = params.a_plus * np.exp(g * np.log(base))
    if np.any(neg):
        base = np.maximum(-x[neg], reg)
        out[neg] = -params.a_minus * np.exp(g * np.log(base))
    return out


def _flow_step(x: np.ndarray, params: ModelParams, dt: float) -> np.ndarray:
    """Exact drift flow over one step; 0 is a fixed point (the noise must push off)."""
    g = params.gamma
    om = 1.0 - g
    inv = 1.0 / om
    out = np.zeros_like(x)
    pos = x > 0.0
    neg = x < 0.0
    if np.any(pos):
        out[pos] = np.exp(inv * np.log(np.exp(om * np.log(x[pos])) + om * params.a_plus * dt))
    if np.any(neg):
        out[neg] = -np.exp(inv * np.log(np.exp(om * np.log(-x[neg])) + om * params.a_minus * dt))
    return out


def integrate_batch(
    params: ModelParams,
    grid: TimeGrid,
    increments: np.ndarray,
    scheme: str = "flow-splitting",
    x0: float = 0.0,
    reg_delta: float | None = None,
) -> np.ndarray:
    """Integrate a batch of driving increments (paths, n) to values (paths, n+1).

    increments are raw W^H increments; the eps factor comes from params.
    Raises IntegrationError with the offending step index on blow-up.
    """
    if scheme not in SCHEMES:
        raise DomainError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    inc = np.asarray(increments, dtype=np.float64)
    if inc.ndim != 2 or inc.shape[1] != grid.n:
        raise DomainError(f"increments must have shape (paths, {grid.n}), got {inc.shape}")
    if not np.isfinite(x0):
        raise DomainError(f"x0 must be finite, got {x0}")
    dt = grid.dt
    eps = params.epsilon
    if reg_delta is None:
        reg_delta = default_reg_delta(params, dt)
    m = inc.shape[0]
    values = np.empty((m, grid.n + 1))
    values[:, 0] = x0
    x = np.full(m, float(x0))
    use_euler = scheme == "euler"
    for k in range(grid.n):
        if use_euler:
            x = x + _drift_reg(x, params, reg_delta) * dt + eps * inc[:, k]
        else:
            x = _flow_step(x, params, dt) + eps * inc[:, k]
        if not np.all(np.isfinite(x)):
            raise IntegrationError(
                f"non-finite state at step {k + 1} of {grid.n} (dt={dt}, scheme={scheme})",
                step_index=k + 1,
            )
        values[:, k + 1] = x
    return values


def integrate(
    params: ModelParams,
    grid: TimeGrid,
    noise,
    scheme: str = "flow-splitting",
    x0: float = 0.0,
    reg_delta: float | None = None,
) -> Path:
    """Single-path integration. noise may be a NoiseBundle or a Path of W^H."""
    if hasattr(noise, "increments") and hasattr(noise, "grid"):
        ng = noise.grid
        if (ng.t0, ng.dt, ng.n) != (grid.t0, grid.dt, grid.n):
            raise DomainError("noise grid does not match the integration grid")
        inc = noise.increments()
    else:
        inc = np.asarray(noise, dtype=np.float64)
    vals = integrate_batch(params, grid, inc[None, :], scheme, x0, reg_delta)
    return Path(grid, vals[0])


@dataclass(frozen=True)
class ScalingReport:
    """Two-sample KS comparison of X^eps(t_eps * t) / x_eps against the eps = 1 law."""

    epsilon: float
    probe_times: tuple[float, ...]
    ks_stats: tuple[float, ...]
    p_values: tuple[float, ...]
    n_paths: int


def scaling_check(
    params: ModelParams,
    probe_times,
    n_paths: int,
    master_seed,
    dt_factor: float = 0.01,
    scheme: str = "flow-splitting",
) -> ScalingReport:
    """Empirical check of the transition-point rescaling invariance.

    Runs one ensemble at params.epsilon on a grid proportional to t_eps and an
    independent ensemble at eps = 1 on the matching unit grid, then compares
    X^eps(t_eps t)/x_eps with X^1(t) by two-sample KS at each probe time.
    Exact synthesis mode; both ensembles start at x0 = 0.
    """
    if n_paths < 100:
        raise Refusal(f"need at least 100 paths for a meaningful KS test, got {n_paths}")
    probes = np.atleast_1d(np.asarray(probe_times, dtype=np.float64))
    if probes.size == 0 or np.any(probes <= 0.0):
        raise DomainError("probe times must be positive")
    if not (0.0 < dt_factor <= 0.5):
        raise DomainError(f"dt_factor must lie in (0, 1/2], got {dt_factor}")
    t_max = float(probes.max())
    dt_unit = dt_factor * t_max
    n_steps = int(round(t_max / dt_unit))
    idx = np.round(probes / dt_unit).astype(int)
    idx = np.clip(idx, 1, n_steps)
    snapped = idx * dt_unit

    tp = transition_point(params)
    p_unit = replace(params, epsilon=1.0)
    grid_eps = TimeGrid(0.0, dt_unit * tp.t_eps, n_steps)
    grid_unit = TimeGrid(0.0, dt_unit, n_steps)

    def ensemble(p: ModelParams, grid: TimeGrid, stream: int) -> np.ndarray:
        cols = np.empty((n_paths, idx.size))
        seed = [_as_int(master_seed), stream]
        chunk = max(1, min(4096, int(4e6 // (grid.n + 1))))
        for lo in range(0, n_paths, chunk):
            hi = min(lo + chunk, n_paths)
            inc = fbm_increments_batch(grid, p.hurst, seed, range(lo, hi))
            vals = integrate_batch(p, grid, inc, scheme=scheme, x0=0.0)
            cols[lo:hi] = vals[:, idx]
        return cols

    a = ensemble(params, grid_eps, 0) / tp.x_eps
    b = ensemble(p_unit, grid_unit, 1)
    ks, pv = [], []
    for j in range(idx.size):
        res = stats.ks_2samp(a[:, j], b[:, j])
        ks.append(float(res.statistic))
        pv.append(float(res.pvalue))
    return ScalingReport(
        epsilon=params.epsilon,
        probe_times=tuple(float(t) for t in snapped),
        ks_stats=tuple(ks),
        p_values=tuple(pv),
        n_paths=n_paths,
    )


def _as_int(seed) -> int:
    if isinstance(seed, (list, tuple)):
        raise DomainError("scaling_check expects a single integer master seed")
    return int(seed)
