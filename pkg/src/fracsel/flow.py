"""Power-law drift, its explicit flow, transition scales, and comparison envelopes.

The model is dX = b(X) dt + eps dW^H with b(x) = a_plus * x^gamma on x > 0 and
b(x) = -a_minus * (-x)^gamma on x < 0, for gamma in (-1, 1). All fractional powers
are evaluated through exp/log so the domain is explicit rather than inherited from
numpy's pow conventions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = [
    "ModelParams",
    "TransitionPoint",
    "pow_pos",
    "drift",
    "flow_phi",
    "extremal_solution",
    "transition_point",
    "comparison_envelope",
    "max_deviation",
]


def pow_pos(base, p: float):
    """base**p for base >= 0 via exp(p*log(base)), with 0**p = 0 for p > 0.

    Raises DomainError for negative base, and for base == 0 with p <= 0
    (there is no continuous extension there). p == 0 gives 1 on positive base.
    """
    b = np.asarray(base, dtype=np.float64)
    scalar = b.ndim == 0
    b = np.atleast_1d(b)
    if np.any(b < 0.0) or not np.all(np.isfinite(b)):
        raise DomainError("pow_pos requires finite nonnegative base")
    zero = b == 0.0
    if p <= 0.0 and np.any(zero):
        raise DomainError(f"0**{p} is undefined for exponent <= 0")
    out = np.zeros_like(b)
    pos = ~zero
    out[pos] = np.exp(p * np.log(b[pos]))
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class ModelParams:
    """Model parameters. test_mode permits zero drift coefficients (pure noise runs)."""

    gamma: float
    hurst: float
    a_plus: float
    a_minus: float
    epsilon: float
    test_mode: bool = False

    def __post_init__(self):
        g, h = self.gamma, self.hurst
        if not (np.isfinite(h) and 0.0 < h < 1.0):
            raise DomainError(f"hurst must lie in (0, 1), got {h}")
        if not (np.isfinite(g) and g < 1.0):
            raise DomainError(f"gamma must be < 1, got {g}")
        if g <= 1.0 - 1.0 / (2.0 * h):
            raise DomainError(
                f"need gamma > 1 - 1/(2H): gamma={g}, bound={1.0 - 1.0 / (2.0 * h)}"
            )
        if g <= -1.0:
            raise DomainError(f"gamma <= -1 is outside the supported numerical range, got {g}")
        if not (np.isfinite(self.epsilon) and self.epsilon > 0.0):
            raise DomainError(f"epsilon must be positive, got {self.epsilon}")
        lo = 0.0 if self.test_mode else None
        for name in ("a_plus", "a_minus"):
            a = getattr(self, name)
            if not np.isfinite(a) or (a <= 0.0 if lo is None else a < 0.0):
                kind = "nonnegative (test_mode)" if self.test_mode else "positive"
                raise DomainError(f"{name} must be {kind}, got {a}")

    def coefficient(self, sign: int) -> float:
        return self.a_plus if sign > 0 else self.a_minus


@dataclass(frozen=True)
class TransitionPoint:
    """Crossover scales: t_eps where noise and drift trade dominance, x_eps = eps*t_eps^H."""

    t_eps: float
    x_eps: float


def drift(x, p: ModelParams):
    """b(x) for scalar or array x. Singular at 0 when gamma <= 0 (DomainError)."""
    g = p.gamma
    xv = np.asarray(x, dtype=np.float64)
    scalar = xv.ndim == 0
    xv = np.atleast_1d(xv)
    if not np.all(np.isfinite(xv)):
        raise DomainError("drift requires finite x")
    zero = xv == 0.0
    if g <= 0.0 and np.any(zero):
        raise DomainError(f"drift is singular at x=0 for gamma={g} <= 0")
    out = np.zeros_like(xv)
    pos = xv > 0.0
    neg = xv < 0.0
    if np.any(pos):
        out[pos] = p.a_plus * np.exp(g * np.log(xv[pos]))
    if np.any(neg):
        out[neg] = -p.a_minus * np.exp(g * np.log(-xv[neg]))
    return float(out[0]) if scalar else out


def flow_phi(x, t, gamma: float):
    """Flow of dx/dt = x^gamma from x >= 0 after time t >= 0.

    phi(x, t) = (x^(1-gamma) + (1-gamma) t)^(1/(1-gamma)). The flow of
    dx/dt = A x^gamma is flow_phi(x, A*t, gamma). Broadcasts over x and t.
    """
    if not (np.isfinite(gamma) and gamma < 1.0):
        raise DomainError(f"flow_phi requires gamma < 1, got {gamma}")
    xv = np.asarray(x, dtype=np.float64)
    tv = np.asarray(t, dtype=np.float64)
    scalar = xv.ndim == 0 and tv.ndim == 0
    if np.any(np.atleast_1d(xv) < 0.0) or not np.all(np.isfinite(np.atleast_1d(xv))):
        raise DomainError("flow_phi requires x >= 0")
    if np.any(np.atleast_1d(tv) < 0.0) or not np.all(np.isfinite(np.atleast_1d(tv))):
        raise DomainError("flow_phi requires t >= 0")
    om = 1.0 - gamma
    u = pow_pos(xv, om)
    core = u + om * tv
    out = pow_pos(core, 1.0 / om)
    return float(out) if scalar else np.asarray(out)


def extremal_solution(t, sign, p: ModelParams):
    """The extremal zero-noise solution leaving 0 at time 0: sign * phi(0, A_sign * t)."""
    s = _parse_sign(sign)
    a = p.coefficient(s)
    return s * flow_phi(0.0, a * np.asarray(t, dtype=np.float64), p.gamma)


def _parse_sign(sign) -> int:
    if sign in (1, +1, "+", "plus"):
        return 1
    if sign in (-1, "-", "minus"):
        return -1
    raise DomainError(f"sign must be +1 or -1 (or '+'/'-'), got {sign!r}")


def transition_point(p: ModelParams) -> TransitionPoint:
    """Solve eps * t^H = t^(1/(1-gamma)) for the crossover time and its height.

    t_eps = eps^((1-gamma)/(1 - H(1-gamma))), x_eps = eps * t_eps^H. Computed in
    log space; the defining identities hold to ~1e-12 relative error by construction.
    """
    g, h, eps = p.gamma, p.hurst, p.epsilon
    om = 1.0 - g
    denom = 1.0 - h * om
    # gamma > 1 - 1/(2H) forces H*(1-gamma) < 1/2, so denom > 1/2 always
    log_t = math.log(eps) * om / denom
    t_eps = math.exp(log_t)
    x_eps = math.exp(log_t / om)
    x_alt = eps * math.exp(h * log_t)
    if not math.isfinite(t_eps) or not math.isfinite(x_eps):
        raise DomainError(f"transition point overflows for eps={eps}, gamma={g}, H={h}")
    if abs(x_alt - x_eps) > 1e-12 * x_eps:
        raise DomainError("transition point identities failed; parameters are too extreme")
    return TransitionPoint(t_eps=t_eps, x_eps=x_eps)


def comparison_envelope(x_start: float, w_bar: float, h, p: ModelParams, monotone: str):
    """Two-sided envelope for x' = A x^gamma + perturbation with sup-norm w_bar.

    For a solution started at x_start > w_bar with driving perturbation bounded by
    w_bar, returns (lower, upper) arrays over elapsed times h. 'decreasing' is the
    contracting drift class (gamma < 0); 'increasing' the expanding one (gamma > 0).
    """
    if monotone not in ("decreasing", "increasing"):
        raise DomainError(f"monotone must be 'decreasing' or 'increasing', got {monotone!r}")
    if not (np.isfinite(x_start) and np.isfinite(w_bar) and w_bar >= 0.0):
        raise DomainError(f"need finite x_start and w_bar >= 0, got {x_start}, {w_bar}")
    if x_start - w_bar <= 0.0:
        raise DomainError(
            f"envelope invalid: x_start={x_start} is within w_bar={w_bar} of the singularity"
        )
    hv = np.asarray(h, dtype=np.float64)
    if np.any(np.atleast_1d(hv) < 0.0):
        raise DomainError("elapsed times must be >= 0")
    a = p.a_plus
    g = p.gamma
    if monotone == "decreasing":
        lower = flow_phi(x_start + w_bar, a * hv, g) - 2.0 * w_bar
        upper = flow_phi(x_start - w_bar, a * hv, g) + 2.0 * w_bar
    else:
        lower = flow_phi(x_start - w_bar, a * hv, g)
        upper = flow_phi(x_start + w_bar, a * hv, g)
    return lower, upper


def max_deviation(c_w: float, m_bound: float, a_coef: float, alpha: float, gamma: float):
    """Largest perturbation height compatible with staying near the flow.

    Given a Hoelder-type bound |w_t| <= c_w t^alpha valid while |w| <= M, drift
    coefficient A, and exponents alpha, gamma, returns (t0, h_max) where
    t0 = c_{alpha,gamma} M / A is the time the comparison argument controls and
    h_max the guaranteed deviation cap there.
    """
    for name, v in (("c_w", c_w), ("M", m_bound), ("A", a_coef)):
        if not (np.isfinite(v) and v > 0.0):
            raise DomainError(f"{name} must be positive, got {v}")
    if not (np.isfinite(gamma) and gamma < 1.0):
        raise DomainError(f"gamma must be < 1, got {gamma}")
    denom = 1.0 + alpha * (gamma - 1.0)
    if not (np.isfinite(alpha) and 0.0 < alpha and denom > 0.0):
        raise DomainError(
            f"alpha must lie in (0, 1/(1-gamma)) = (0, {1.0 / (1.0 - gamma)}), got {alpha}"
        )
    c_ag = alpha * (1.0 - gamma) / denom
    t0 = c_ag * m_bound / a_coef
    h_max = c_w * pow_pos(t0, alpha) * pow_pos(m_bound + a_coef * t0, -1.0 / (1.0 - gamma))
    return t0, float(h_max)
