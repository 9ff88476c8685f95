"""Independent re-verification of a constants ledger.

Every displayed relation is evaluated directly from the ledger's stored
values.  Nothing here is shared with the search in ``constants``; the two
modules must agree on solver output, and that agreement is itself a test.

Slack convention: each relation is normalized to "LHS - RHS" of its
"LHS < RHS" (or <=) form, so negative slack means satisfied and values
near zero expose binding constraints.  Relations compared on log scale
say so in their note.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .constants import ConstantsLedger
from .errors import DomainError

__all__ = ["FlagEntry", "LedgerReport", "verify_ledger"]

_IDENTITY_TOL = 1e-9
_NU_TOL = 1e-12


@dataclass(frozen=True)
class FlagEntry:
    name: str
    ok: bool
    slack: float
    note: str = ""


@dataclass(frozen=True)
class LedgerReport:
    entries: tuple[FlagEntry, ...]

    @property
    def ok(self) -> bool:
        return all(e.ok for e in self.entries)

    def entry(self, name: str) -> FlagEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def to_json_dict(self) -> dict:
        return {
            "ok": self.ok,
            "flags": {
                e.name: {"ok": e.ok, "slack": e.slack, "note": e.note}
                for e in self.entries
            },
        }


def verify_ledger(ledger: ConstantsLedger, gamma: float, hurst: float) -> LedgerReport:
    """Evaluate every displayed inequality of the constants system."""
    if not (math.isfinite(gamma) and gamma < 1.0 and 0.0 < hurst < 1.0):
        raise DomainError("invalid (gamma, hurst)")

    L = ledger
    entries: list[FlagEntry] = []

    def add(name: str, ok: bool, slack: float, note: str = "") -> None:
        entries.append(FlagEntry(name=name, ok=bool(ok), slack=float(slack), note=note))

    # ---- stage one -------------------------------------------------------
    add("sigma_range", hurst < L.sigma <= 1.0, max(hurst - L.sigma, L.sigma - 1.0))

    nu_dev = abs(L.alpha - (L.sigma + L.xi * (hurst - L.sigma)))
    add("nu_def", nu_dev <= _NU_TOL, nu_dev - _NU_TOL,
        note="identity alpha = sigma + xi(H - sigma)")

    gap = L.sigma - hurst - 2.0 * L.delta
    if gap <= 0.0:
        add("fixed_one", False, math.inf, note="sigma - H - 2 delta <= 0")
    else:
        lhs = L.xi + (1.0 / (1.0 + L.theta) + 1.0 / L.mu_g) / gap
        add("fixed_one", lhs < 1.0, lhs - 1.0)
    add("fixed_two_theta", (1.0 + L.theta) * L.kappa < 1.0,
        (1.0 + L.theta) * L.kappa - 1.0)
    add("fixed_two_mu", L.mu_g * L.kappa < 2.0, L.mu_g * L.kappa - 2.0)

    # ---- stage two -------------------------------------------------------
    log1p_ts = math.log1p(L.t_star)
    env_slack = math.log(L.c_af) + L.sigma * log1p_ts - (hurst + L.delta) * log1p_ts
    add("ca_tstar_envelope", env_slack <= 0.0, env_slack,
        note="log scale: c_Af (1+t*)^sigma <= (1+t*)^(H+delta)")

    log_ts = math.log(L.t_star)
    d_slack = (10.0 * L.delta / hurst) * log_ts - math.log(2.0)
    add("ca_tstar_delta", d_slack < 0.0, d_slack,
        note="log scale: (t*)^(10 delta/H) < 2")

    ts_expected = (L.u_big * L.t_e ** (-0.5 - L.delta)) ** L.vartheta
    ts_dev = abs(L.t_star / ts_expected - 1.0)
    add("t_star_consistent", ts_dev <= _IDENTITY_TOL, ts_dev - _IDENTITY_TOL,
        note="t* = (U t_e^(-1/2-delta))^vartheta")

    log_base = math.log(L.u_big) - (0.5 + L.delta) * math.log(L.t_e)
    member1 = (1.0 + L.vartheta * (hurst - 0.5 - L.beta)) * log_base
    member2 = (
        -L.vartheta * (0.5 - 3.0 * L.delta) * math.log(L.u_big)
        - 3.0 * L.delta * (0.5 + L.delta) * log_ts
    )
    member3 = math.log(L.c_af)
    teu_slack = max(member1, member2, member3) - math.log(L.k_a / 3.0)
    add("teu", teu_slack < 0.0, teu_slack,
        note="log scale: max of three terms < K_A/3")

    m_star = (
        L.t_e ** (-(0.5 + L.delta) * (1.0 + L.vartheta * (hurst - 0.5)))
        * L.u_big ** (L.vartheta * (hurst - 0.5))
        - L.t_e ** hurst
    )
    rhs5 = 5.0 ** (1.0 / (L.alpha * (1.0 - gamma)))
    add("vartheta_lower", m_star > rhs5, rhs5 - m_star,
        note="M*(1/t_e, U) > 5^(1/(alpha(1-gamma)))")

    try:
        pen1 = L.t_e ** (-1.0 - 2.0 * L.delta)
        pen2 = 9.0 * L.lam * L.t_e ** (-2.0 * (1.0 - hurst * (1.0 - gamma)))
        g_term1 = math.log(12.0 * L.c_b * (L.u_big - 1.0)) - 0.5 * math.log(L.t_e) - pen1
        g_term2 = math.log(L.c_g) - pen2
        g_slack = g_term2 - g_term1
        g_ok = g_term1 > g_term2
    except (OverflowError, ValueError):
        g_slack, g_ok = math.inf, False
    add("girsanov_proba", g_ok, g_slack,
        note="log scale; C_G sign follows the display, which disagrees with "
             "the escape-event lemma's convention")

    esc_lhs = max(1.0, L.a_coef) * L.t_e ** (min(hurst, 0.5) + L.delta)
    esc_rhs = min(0.25, 8.0 ** (-gamma))
    add("escape_te", esc_lhs <= esc_rhs, esc_lhs - esc_rhs)

    if gamma < 0.0:
        q_lo, q_hi = 2.0 ** (1.0 / L.alpha), 5.0 ** (1.0 / L.alpha)
        note5 = "q in (2^(1/alpha), 5^(1/alpha)) for gamma < 0"
    else:
        q_lo, q_hi = 1.0, 1.0 + 1.0 / (2.0 * L.k_gamma)
        note5 = "q in (1, 1 + 1/(2 K_gamma)) for gamma >= 0"
    add("fixed_five_q", q_lo < L.q < q_hi, max(q_lo - L.q, L.q - q_hi), note=note5)

    cag = L.alpha * (1.0 - gamma) / (1.0 + L.alpha * (gamma - 1.0))
    ka_expected = (
        L.q ** (-L.alpha)
        * min(
            5.0 ** (-1.0 / (L.alpha * (1.0 - gamma))),
            L.a_coef ** L.alpha * (1.0 + cag) ** (1.0 / (1.0 - gamma)),
        )
        / 3.0
    )
    ka_dev = max(abs(L.k_a / ka_expected - 1.0), abs(L.c_alpha_gamma / cag - 1.0))
    add("k_a_consistent", ka_dev <= _IDENTITY_TOL, ka_dev - _IDENTITY_TOL,
        note="K_A = K(A, 1) from its defining display")

    xi2_expected = 1.0 / (L.mu_g * gap) if gap > 0.0 else math.inf
    ell_dev = max(
        abs(L.xi2 - xi2_expected),
        abs(L.xi1 - (1.0 - L.xi - L.xi2)),
        abs(L.ell - L.xi1 * gap),
    )
    add("ell_consistent", ell_dev <= _IDENTITY_TOL, ell_dev - _IDENTITY_TOL,
        note="xi2 = 1/(mu_g(sigma-H-2delta)), xi1 = 1 - xi - xi2, ell = xi1(sigma-H-2delta)")

    cw_slack = math.log(L.k_ell) - L.ell * math.log(L.c_w) - math.log(L.c_af)
    add("ell_cw", L.k_ell * L.c_w ** (-L.ell) <= L.c_af, cw_slack,
        note="log scale: K C_W^(-ell) <= c_Af")

    add("vartheta_range", 0.0 < L.vartheta < 2.0,
        max(-L.vartheta, L.vartheta - 2.0))

    type_ok = (
        0.0 < L.t_e < 1.0
        and 0.0 < L.c_af < 1.0
        and L.u_big > 2.0
        and L.c_w >= 1.0
        and hurst < L.beta <= L.sigma
        and L.delta > 0.0
        and 0.0 < L.k_a < 1.0
        and L.c_ac > 0.0
        and L.theta > 0.0
        and L.mu_g > 0.0
        and L.q > 1.0
        and L.xi1 > 0.0
        and L.ell > 0.0
    )
    type_slack = max(
        -L.t_e, L.t_e - 1.0,
        -L.c_af, L.c_af - 1.0,
        2.0 - L.u_big,
        1.0 - L.c_w,
        hurst - L.beta, L.beta - L.sigma,
        -L.delta,
        -L.k_a, L.k_a - 1.0,
        -L.c_ac,
        -L.theta, -L.mu_g,
        1.0 - L.q,
        -L.xi1, -L.ell,
    )
    add("type_ranges", type_ok, type_slack,
        note="t_e, c_Af in (0,1); U > 2; C_W >= 1; sigma >= beta > H; positivity")

    return LedgerReport(entries=tuple(entries))
