"""Deterministic feasibility search for the ledger of proof constants.

The singular-drift selection argument needs a family of interlocking
constants.  Stage one picks the exponent bookkeeping (sigma, xi, theta,
mu_g, delta) for a given (gamma, H, alpha, kappa).  Stage two extends a
feasible stage-one ledger with the event-construction constants
(t_e, U, vartheta, beta, q, K_A, t_star, c_Af, c_Ac, ell, C_W).

Everything here is closed-form assignment plus a couple of conservative
caps; no randomized search.  The verifier in ``ledger_check`` re-evaluates
every inequality independently, so the two modules deliberately do not
share evaluation helpers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import DomainError, InfeasibleError

__all__ = [
    "LEDGER_FLAG_NAMES",
    "PartialLedger",
    "ConstantsLedger",
    "solve_fixed",
    "solve_stage2",
    "max_feasible_kappa",
    "kappa_ceiling",
]


# Canonical flag names; the ledger's flag dict covers exactly these.
LEDGER_FLAG_NAMES = (
    "sigma_range",
    "nu_def",
    "fixed_one",
    "fixed_two_theta",
    "fixed_two_mu",
    "ca_tstar_envelope",
    "ca_tstar_delta",
    "t_star_consistent",
    "teu",
    "vartheta_lower",
    "girsanov_proba",
    "escape_te",
    "fixed_five_q",
    "k_a_consistent",
    "ell_consistent",
    "ell_cw",
    "vartheta_range",
    "type_ranges",
)

# delta values above this are never used by stage two; several caps below
# are made conservative over the whole interval (0, _DELTA_GUARD].
_DELTA_GUARD = 1.0 / 60.0


def _validate_pair(gamma: float, hurst: float) -> None:
    if not (math.isfinite(gamma) and gamma < 1.0):
        raise DomainError(f"gamma must be finite and < 1, got {gamma}")
    if not (0.0 < hurst < 1.0):
        raise DomainError(f"hurst must lie in (0, 1), got {hurst}")
    if gamma <= 1.0 - 1.0 / (2.0 * hurst):
        raise DomainError(
            f"(gamma, hurst) = ({gamma}, {hurst}) violates gamma > 1 - 1/(2H)"
        )


@dataclass(frozen=True)
class PartialLedger:
    """Stage-one constants; carries the (alpha, kappa) they were solved for."""

    gamma: float
    hurst: float
    alpha: float
    kappa: float
    sigma: float
    xi: float
    theta: float
    mu_g: float
    delta: float

    def as_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "hurst": self.hurst,
            "alpha": self.alpha,
            "kappa": self.kappa,
            "sigma": self.sigma,
            "xi": self.xi,
            "theta": self.theta,
            "mu_g": self.mu_g,
            "delta": self.delta,
        }


@dataclass(frozen=True)
class ConstantsLedger:
    """Full ledger: stage-one fields plus the stage-two event constants.

    ``flags`` / ``slacks`` record the solver's own inequality evaluation
    (the independent verifier produces its own report from the values).
    Slack convention: LHS - RHS of the normalized "LHS < RHS" form, so
    satisfied constraints have negative slack and binding ones sit near 0.
    """

    gamma: float
    hurst: float
    alpha: float
    kappa: float
    sigma: float
    xi: float
    theta: float
    mu_g: float
    delta: float
    t_e: float
    c_af: float
    c_ac: float
    u_big: float
    vartheta: float
    c_w: float
    beta: float
    q: float
    k_a: float
    t_star: float
    ell: float
    xi1: float
    xi2: float
    c_alpha_gamma: float
    a_coef: float = 1.0
    c_b: float = 1.0
    c_g: float = 1.0
    lam: float = 1.0
    k_ell: float = 1.0
    k_gamma: float = 1.0
    flags: dict = field(default_factory=dict)
    slacks: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return bool(self.flags) and all(self.flags.values())

    def to_json_dict(self) -> dict:
        out = {
            name: getattr(self, name)
            for name in (
                "gamma", "hurst", "alpha", "kappa", "sigma", "xi", "theta",
                "mu_g", "delta", "t_e", "c_af", "c_ac", "u_big", "vartheta",
                "c_w", "beta", "q", "k_a", "t_star", "ell", "xi1", "xi2",
                "c_alpha_gamma", "a_coef", "c_b", "c_g", "lam", "k_ell",
                "k_gamma",
            )
        }
        out["flags"] = dict(self.flags)
        out["slacks"] = dict(self.slacks)
        return out

    @classmethod
    def from_json_dict(cls, data: dict) -> "ConstantsLedger":
        kwargs = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**kwargs)


def solve_fixed(gamma: float, hurst: float, alpha: float, kappa: float) -> PartialLedger:
    """Pick (sigma, xi, theta, mu_g, delta) for the exponent inequalities.

    Sets sigma = 1 and xi from the scaling identity alpha = sigma + xi(H - sigma).
    For gamma < 0 the proof's recipe value of delta is used when it leaves
    enough budget; otherwise delta shrinks until the theta/mu_g split fits.
    """
    _validate_pair(gamma, hurst)
    growth = 1.0 / (1.0 - gamma)

    binding: list[str] = []
    if not (math.isfinite(kappa) and kappa > 0.0):
        binding.append("kappa must be positive")
    elif kappa >= 1.0:
        binding.append("fixed_two needs (1+theta)kappa < 1 with theta > 0, so kappa < 1")
    if not (math.isfinite(alpha) and alpha > hurst + 1.5 * kappa):
        binding.append("alpha must exceed 3/2*kappa + H")
    if not (alpha < growth):
        binding.append("alpha must be below 1/(1-gamma)")
    if binding:
        raise InfeasibleError("stage-one preconditions violated", binding)

    sigma = 1.0
    xi = (1.0 - alpha) / (1.0 - hurst)
    margin = alpha - hurst - 1.5 * kappa  # > 0 by the window check

    # largest delta that keeps a comfortable budget for the theta/mu split
    delta_budget = margin * (1.0 - hurst) / (8.0 * (alpha - hurst))
    delta = min(0.01, delta_budget, (1.0 - hurst) / 8.0)
    if gamma < 0.0:
        # recipe: xi = (sigma - growth)/(sigma - H - 2 delta) at sigma = 1
        delta_recipe = (1.0 - hurst) * (growth - alpha) / (2.0 * (1.0 - alpha))
        budget_recipe = (1.0 - xi) * (sigma - hurst - 2.0 * delta_recipe)
        if budget_recipe > 1.5 * kappa * (1.0 + 1e-9):
            delta = delta_recipe

    gap = sigma - hurst - 2.0 * delta
    budget = (1.0 - xi) * gap
    if not (budget > 1.5 * kappa):
        raise InfeasibleError(
            "stage-one budget exhausted",
            ["fixed_one leaves no room for theta and mu_g"],
        )

    # 1/(1+theta) = kappa*s and 1/mu_g = kappa*s/2 with s in (1, 1/kappa);
    # any s in that range satisfies fixed_two, and s^2 <= budget/(3 kappa/2)
    # keeps fixed_one strict.
    s_cap = min(1.9, 0.5 * (1.0 + 1.0 / kappa))
    s = min(s_cap, math.sqrt(budget / (1.5 * kappa)))
    theta = 1.0 / (kappa * s) - 1.0
    mu_g = 2.0 / (kappa * s)

    partial = PartialLedger(
        gamma=gamma, hurst=hurst, alpha=alpha, kappa=kappa,
        sigma=sigma, xi=xi, theta=theta, mu_g=mu_g, delta=delta,
    )

    # defensive re-check of the three displayed groups
    failed: list[str] = []
    if not (hurst < sigma <= 1.0):
        failed.append("sigma_range")
    if abs(alpha - (sigma + xi * (hurst - sigma))) > 1e-12:
        failed.append("nu_def")
    if not (xi + (1.0 / (1.0 + theta) + 1.0 / mu_g) / gap < 1.0):
        failed.append("fixed_one")
    if not ((1.0 + theta) * kappa < 1.0):
        failed.append("fixed_two_theta")
    if not (mu_g * kappa < 2.0):
        failed.append("fixed_two_mu")
    if not (theta > 0.0 and mu_g > 0.0 and delta > 0.0):
        failed.append("type_ranges")
    if failed:
        raise InfeasibleError("stage-one assignment failed its own checks", failed)
    return partial


def _mid(lo: float, hi: float) -> float:
    return 0.5 * (lo + hi)


def solve_stage2(
    partial: PartialLedger,
    gamma: float,
    hurst: float,
    *,
    a_coef: float = 1.0,
    c_b: float = 1.0,
    c_g: float = 1.0,
    lam: float = 1.0,
    k_ell: float = 1.0,
    k_gamma: float = 1.0,
    vartheta: float | None = None,
) -> ConstantsLedger:
    """Extend a stage-one ledger with the event-construction constants.

    Strategy: fix vartheta and beta in the middle of their admissible
    windows, take q and K_A from their defining display, escalate U until
    the middle member of the three-term bound clears K_A/3, then cap t_e
    so that every remaining inequality holds for any delta in
    (0, 1/60]; finally shrink delta to tame (t_star)^(10 delta/H).
    """
    _validate_pair(gamma, hurst)
    if (gamma, hurst) != (partial.gamma, partial.hurst):
        raise DomainError("partial ledger was solved for a different (gamma, hurst)")
    for name, val in (("a_coef", a_coef), ("c_b", c_b), ("c_g", c_g),
                      ("lam", lam), ("k_ell", k_ell), ("k_gamma", k_gamma)):
        if not (math.isfinite(val) and val > 0.0):
            raise DomainError(f"{name} must be positive and finite, got {val}")

    alpha = partial.alpha
    kappa = partial.kappa
    sigma = partial.sigma
    xi = partial.xi
    theta = partial.theta
    mu_g = partial.mu_g
    delta0 = partial.delta

    # vartheta window: lower end keeps the beta interval nonempty, upper
    # end is the natural < 2 constraint sharpened to 1/(1/2 + delta0)
    vt_lo = 1.0 / (sigma - hurst + 0.5)
    vt_hi = min(2.0, 1.0 / (0.5 + delta0))
    if vartheta is None:
        vartheta = _mid(vt_lo, vt_hi)
    elif not (vt_lo < vartheta < vt_hi):
        raise InfeasibleError(
            f"requested vartheta {vartheta} outside ({vt_lo}, {vt_hi})",
            ["vartheta_range"],
        )

    beta = _mid(1.0 / vartheta + hurst - 0.5, sigma)

    if gamma < 0.0:
        q = 10.0 ** (1.0 / (2.0 * alpha))  # geometric mid of (2^(1/a), 5^(1/a))
    else:
        q = 1.0 + 1.0 / (4.0 * k_gamma)

    one_m_gamma = 1.0 - gamma
    c_alpha_gamma = alpha * one_m_gamma / (1.0 + alpha * (gamma - 1.0))
    k_a = (
        q ** (-alpha)
        * min(
            5.0 ** (-1.0 / (alpha * one_m_gamma)),
            a_coef ** alpha * (1.0 + c_alpha_gamma) ** (1.0 / one_m_gamma),
        )
        / 3.0
    )
    if not (0.0 < k_a < 1.0):
        raise InfeasibleError(f"K_A = {k_a} outside (0, 1)", ["type_ranges"])

    # U large enough that U^(-vartheta(1/2 - 3 delta)) < K_A/3 for every
    # delta <= 1/60 (then 1/2 - 3 delta >= 0.45), with t_star > 1 killing
    # the second factor of the middle member.
    u_big = max(
        (1.5) ** (2.0 / vartheta),
        2.25,
        2.0 * (3.0 / k_a) ** (1.0 / (0.45 * vartheta)),
    )

    # t_e caps, each conservative over delta in (0, 1/60]
    cap_escape = (min(0.25, 8.0 ** (-gamma)) / max(1.0, a_coef)) ** (
        1.0 / min(hurst, 0.5)
    )

    e1 = 1.0 + vartheta * (hurst - 0.5 - beta)  # < 0 since beta > 1/vt + H - 1/2
    r1 = (k_a / 3.0) ** (1.0 / e1)
    ratio = u_big / r1
    cap_term1 = 0.9 * min(ratio ** 2.0, ratio ** (1.0 / (0.5 + _DELTA_GUARD)))

    rhs5 = 5.0 ** (1.0 / (alpha * one_m_gamma))
    e_zero = 0.5 * (1.0 + vartheta * (hurst - 0.5))  # > 0 since vartheta < 2
    q_need = (rhs5 + 1.0) / u_big ** (vartheta * (hurst - 0.5))
    cap_vl = math.inf if q_need <= 1.0 else q_need ** (-1.0 / e_zero)

    t_e = 0.5 * min(cap_escape, cap_term1, cap_vl, 0.01)
    if not (t_e > 0.0 and math.isfinite(t_e)):
        raise InfeasibleError(f"t_e cap collapsed to {t_e}", ["teu", "escape_te"])

    # Girsanov positivity: needs delta < 1/2 - H(1-gamma) asymptotically;
    # halve t_e until the log-space comparison holds at the largest delta
    # stage two might keep.
    delta_gir = 0.5 - hurst * one_m_gamma  # > 0 by the standing constraint
    delta_worst = min(delta0, _DELTA_GUARD, 0.9 * delta_gir)

    def _girsanov_ok(te: float, dlt: float) -> bool:
        ln_te = math.log(te)
        try:
            pen1 = te ** (-1.0 - 2.0 * dlt)
            pen2 = 9.0 * lam * te ** (-2.0 * (1.0 - hurst * one_m_gamma))
        except OverflowError:
            return False
        term1 = math.log(12.0 * c_b * (u_big - 1.0)) - 0.5 * ln_te - pen1
        term2 = math.log(c_g) - pen2
        return term1 > term2

    for _ in range(200):
        if _girsanov_ok(t_e, delta_worst):
            break
        t_e *= 0.5
    else:
        raise InfeasibleError(
            "girsanov positivity not reached by shrinking t_e",
            ["girsanov_proba"],
        )

    # final delta: respect stage one, the guard, the Girsanov window and
    # (t_star)^(10 delta / H) < 2 with t_star evaluated at the worst delta
    ln_te = math.log(t_e)
    ln_tstar_worst = vartheta * (math.log(u_big) - (0.5 + _DELTA_GUARD) * ln_te)
    delta = min(
        delta0,
        _DELTA_GUARD,
        0.45 * hurst * math.log(2.0) / (10.0 * ln_tstar_worst),
        0.9 * delta_gir,
    )

    gap = sigma - hurst - 2.0 * delta
    ln_tstar = vartheta * (math.log(u_big) - (0.5 + delta) * ln_te)
    t_star = math.exp(ln_tstar)

    c_af = 0.5 * min(
        math.exp((hurst + delta - sigma) * math.log1p(t_star)),
        k_a / 3.0,
    )
    c_ac = 1.0  # free constant of the admissibility definition

    xi2 = 1.0 / (mu_g * gap)
    xi1 = 1.0 - xi - xi2
    ell = xi1 * gap
    if not (xi1 > 0.0 and ell > 0.0):
        raise InfeasibleError(f"xi1 = {xi1} not positive", ["ell_consistent"])

    ln_cw = math.log(k_ell / c_af) / ell
    if ln_cw > 700.0:
        raise InfeasibleError(
            f"C_W would need log {ln_cw:.1f}; c_Af too small for ell = {ell:.4g}",
            ["ell_cw"],
        )
    c_w = 1.01 * max(1.0, math.exp(ln_cw))

    # solver-side flag evaluation (the verifier re-derives these on its own)
    flags: dict[str, bool] = {}
    slacks: dict[str, float] = {}

    def put(name: str, slack: float, ok: bool | None = None) -> None:
        flags[name] = (slack < 0.0) if ok is None else ok
        slacks[name] = slack

    put("sigma_range", max(hurst - sigma, sigma - 1.0),
        ok=(hurst < sigma <= 1.0))
    put("nu_def", abs(alpha - (sigma + xi * (hurst - sigma))) - 1e-12,
        ok=abs(alpha - (sigma + xi * (hurst - sigma))) <= 1e-12)
    put("fixed_one", xi + (1.0 / (1.0 + theta) + 1.0 / mu_g) / gap - 1.0)
    put("fixed_two_theta", (1.0 + theta) * kappa - 1.0)
    put("fixed_two_mu", mu_g * kappa - 2.0)
    ln1p_ts = math.log1p(t_star)
    put("ca_tstar_envelope",
        math.log(c_af) + sigma * ln1p_ts - (hurst + delta) * ln1p_ts,
        ok=math.log(c_af) + sigma * ln1p_ts <= (hurst + delta) * ln1p_ts)
    put("ca_tstar_delta", (10.0 * delta / hurst) * ln_tstar - math.log(2.0))
    put("t_star_consistent",
        abs(ln_tstar - vartheta * (math.log(u_big) - (0.5 + delta) * ln_te)) - 1e-9,
        ok=True)  # identical expression by construction
    ln_base = math.log(u_big) - (0.5 + delta) * ln_te
    m1 = e1 * ln_base
    m2 = -vartheta * (0.5 - 3.0 * delta) * math.log(u_big) \
        - 3.0 * delta * (0.5 + delta) * ln_tstar
    m3 = math.log(c_af)
    put("teu", max(m1, m2, m3) - math.log(k_a / 3.0))
    m_star = t_e ** (-(0.5 + delta) * (1.0 + vartheta * (hurst - 0.5))) \
        * u_big ** (vartheta * (hurst - 0.5)) - t_e ** hurst
    put("vartheta_lower", rhs5 - m_star)
    pen1 = t_e ** (-1.0 - 2.0 * delta)
    pen2 = 9.0 * lam * t_e ** (-2.0 * (1.0 - hurst * one_m_gamma))
    put("girsanov_proba",
        (math.log(c_g) - pen2)
        - (math.log(12.0 * c_b * (u_big - 1.0)) - 0.5 * ln_te - pen1))
    put("escape_te",
        max(1.0, a_coef) * t_e ** (min(hurst, 0.5) + delta)
        - min(0.25, 8.0 ** (-gamma)),
        ok=max(1.0, a_coef) * t_e ** (min(hurst, 0.5) + delta)
        <= min(0.25, 8.0 ** (-gamma)))
    if gamma < 0.0:
        put("fixed_five_q",
            max(2.0 ** (1.0 / alpha) - q, q - 5.0 ** (1.0 / alpha)))
    else:
        put("fixed_five_q", max(1.0 - q, q - (1.0 + 1.0 / (2.0 * k_gamma))))
    put("k_a_consistent", 0.0 - 1e-9, ok=True)  # assigned from the display
    put("ell_consistent",
        max(abs(xi2 - 1.0 / (mu_g * gap)), abs(xi1 - (1.0 - xi - xi2)),
            abs(ell - xi1 * gap)) - 1e-9,
        ok=True)
    put("ell_cw", math.log(k_ell) - ell * math.log(c_w) - math.log(c_af),
        ok=k_ell * c_w ** (-ell) <= c_af)
    put("vartheta_range", max(-vartheta, vartheta - 2.0))
    type_slack = max(
        -t_e, t_e - 1.0,
        -c_af, c_af - 1.0,
        2.0 - u_big,
        1.0 - c_w,
        beta - sigma, hurst - beta,
        -delta,
        -k_a, k_a - 1.0,
        -c_ac,
        -theta, -mu_g,
        1.0 - q,
    )
    put("type_ranges", type_slack,
        ok=(0.0 < t_e < 1.0 and 0.0 < c_af < 1.0 and u_big > 2.0
            and c_w >= 1.0 and hurst < beta <= sigma and delta > 0.0
            and 0.0 < k_a < 1.0 and c_ac > 0.0 and theta > 0.0
            and mu_g > 0.0 and q > 1.0))

    failed = [name for name, ok in flags.items() if not ok]
    if failed:
        raise InfeasibleError("stage-two assignment failed its own checks", failed)

    return ConstantsLedger(
        gamma=gamma, hurst=hurst, alpha=alpha, kappa=kappa,
        sigma=sigma, xi=xi, theta=theta, mu_g=mu_g, delta=delta,
        t_e=t_e, c_af=c_af, c_ac=c_ac, u_big=u_big, vartheta=vartheta,
        c_w=c_w, beta=beta, q=q, k_a=k_a, t_star=t_star, ell=ell,
        xi1=xi1, xi2=xi2, c_alpha_gamma=c_alpha_gamma,
        a_coef=a_coef, c_b=c_b, c_g=c_g, lam=lam, k_ell=k_ell,
        k_gamma=k_gamma, flags=flags, slacks=slacks,
    )


def kappa_ceiling(gamma: float, hurst: float) -> float:
    """Analytic upper bound (2/3)(1/(1-gamma) - H) on the feasible kappa."""
    _validate_pair(gamma, hurst)
    return (2.0 / 3.0) * (1.0 / (1.0 - gamma) - hurst)


def max_feasible_kappa(gamma: float, hurst: float, *, iterations: int = 30) -> float:
    """Bisect for the largest kappa with a full two-stage feasible ledger.

    alpha is taken mid-window at each probe.  The result never exceeds
    min(kappa_ceiling, 1): above the ceiling the alpha window is empty and
    kappa >= 1 contradicts (1+theta)kappa < 1.
    """
    _validate_pair(gamma, hurst)
    growth = 1.0 / (1.0 - gamma)

    def feasible(kappa: float) -> bool:
        alpha = 0.5 * (hurst + 1.5 * kappa + growth)
        try:
            partial = solve_fixed(gamma, hurst, alpha, kappa)
            solve_stage2(partial, gamma, hurst)
        except InfeasibleError:
            return False
        return True

    lo = 1e-6
    hi = min(kappa_ceiling(gamma, hurst), 1.0)
    if not feasible(lo):
        raise InfeasibleError(
            f"no feasible kappa found near 0 for gamma={gamma}, H={hurst}",
            ["kappa_window"],
        )
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo
