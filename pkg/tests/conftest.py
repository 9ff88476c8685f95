"""Shared oracles and builders for the test suite."""

from __future__ import annotations

import numpy as np

from fracsel import Path, TimeGrid


def rk4_power_ode(x0, a_coef: float, gamma: float, t_end: float, n_steps: int, forcing=None):
    """Classic RK4 on x' = a * x^gamma (+ forcing(t)), vectorized over x0.

    Independent oracle for the closed-form flow: no fracsel flow code involved.
    Returns the state at every node, shape (n_steps+1,) + shape(x0).
    """
    x = np.atleast_1d(np.asarray(x0, dtype=np.float64)).copy()
    dt = t_end / n_steps
    out = np.empty((n_steps + 1,) + x.shape)
    out[0] = x

    def f(t, y):
        d = a_coef * np.sign(y) * np.abs(y) ** gamma
        if forcing is not None:
            d = d + forcing(t)
        return d

    for k in range(n_steps):
        t = k * dt
        k1 = f(t, x)
        k2 = f(t + dt / 2, x + dt / 2 * k1)
        k3 = f(t + dt / 2, x + dt / 2 * k2)
        k4 = f(t + dt, x + dt * k3)
        x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = x
    return out


def path_from_fn(grid: TimeGrid, fn) -> Path:
    """Sample a scalar function on the grid nodes."""
    return Path(grid, np.asarray([fn(t) for t in grid.nodes()], dtype=np.float64))


def brownian_path(grid: TimeGrid, seed) -> Path:
    rng = np.random.default_rng(seed)
    incr = rng.standard_normal(grid.n) * np.sqrt(grid.dt)
    return Path(grid, np.concatenate([[0.0], np.cumsum(incr)]))
