"""Seeded batch execution for the simulate and sweep commands.

Every path is reproducible from (master_seed, path_index) alone, so the
work can be chunked arbitrarily and run on any number of workers without
changing a byte of output.  Chunk results are merged by path index; the
runner itself never writes files (the CLI passes a sink for saved paths).
"""

from __future__ import annotations

import json
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import PACKAGE_VERSION, build_model, config_hash, resolve_grid
from .errors import Refusal
from .fbm import fbm_increments_batch, make_noise, path_rng, path_seed_word
from .flow import ModelParams, transition_point
from .grids import TimeGrid
from .integrate import integrate_batch
from .selection import SelectionOutcome, _wilson, detect_selection_batch, tail_fit

__all__ = [
    "BatchResult",
    "run_batch",
    "build_summary",
    "run_sweep",
    "SWEEP_COLUMNS",
    "sweep_rows_to_csv_bytes",
    "derive_sweep_seed",
]

_SIGN_CODE = {"+": 1, "-": -1, "undecided": 0}


def _chunk_size(n_nodes: int) -> int:
    # keep a chunk's path matrix around 20M floats, within [64, 8192] paths
    return max(64, min(8192, int(2e7 // max(1, n_nodes))))


def _run_chunk(cfg_json: str, master_seed: int, epsilon: float, lo: int, hi: int) -> dict:
    """Simulate paths lo..hi-1; pure function of its arguments."""
    cfg = json.loads(cfg_json)
    model = build_model(cfg["model"], epsilon=epsilon)
    grid = resolve_grid(model, cfg["grid"])
    idx = range(lo, hi)
    noise_cfg = cfg["noise"]
    if noise_cfg["mode"] == "exact":
        inc = fbm_increments_batch(
            grid, model.hurst, master_seed, idx, method=noise_cfg["method"]
        )
    else:
        inc = np.empty((hi - lo, grid.n))
        for i, j in enumerate(idx):
            bundle = make_noise(
                grid,
                model.hurst,
                path_rng(master_seed, j),
                mode="volterra",
                history_horizon=noise_cfg["history_horizon"],
                method=noise_cfg["method"],
            )
            inc[i] = bundle.increments()
    values = integrate_batch(model, grid, inc, scheme=cfg["scheme"], x0=cfg["x0"])
    det = cfg["detection"]
    outcomes = detect_selection_batch(
        values,
        grid,
        model,
        det["alpha"],
        margin_mode=det["margin_mode"],
        rel_delta=det["rel_delta"],
    )
    seeds = np.array([path_seed_word(master_seed, j) for j in idx], dtype=np.uint64)
    out = {"lo": lo, "hi": hi, "outcomes": outcomes, "seeds": seeds}
    if cfg["save_paths"]:
        out["values"] = values
    return out


@dataclass(frozen=True)
class BatchResult:
    """Merged outcome of one simulate batch at a single epsilon."""

    epsilon: float
    t_eps: float
    x_eps: float
    grid: TimeGrid
    outcomes: tuple[SelectionOutcome, ...]
    seeds: np.ndarray  # uint64 per-path seed words, index-aligned

    @property
    def n_paths(self) -> int:
        return len(self.outcomes)


def run_batch(
    resolved: dict,
    *,
    epsilon: float | None = None,
    master_seed: int | None = None,
    workers: int = 1,
    path_sink=None,
) -> BatchResult:
    """Run n_paths simulations under a resolved config.

    epsilon/master_seed override the config (used by sweep).  workers is
    execution machinery, never configuration: any value yields the same
    bytes.  path_sink, if given, is called as path_sink(path_index, grid,
    values_row) for every path in index order; this is the only escape
    hatch for raw paths, and the caller owns the I/O.
    """
    eps = resolved["model"].get("epsilon") if epsilon is None else epsilon
    if eps is None:
        raise Refusal("config has no model.epsilon and none was supplied")
    seed = resolved["seed"] if master_seed is None else master_seed
    model = build_model(resolved["model"], epsilon=eps)
    grid = resolve_grid(model, resolved["grid"])
    tp = transition_point(model)
    n_paths = resolved["n_paths"]
    want_paths = path_sink is not None

    cfg = dict(resolved)
    cfg["save_paths"] = want_paths
    cfg_json = json.dumps(cfg, sort_keys=True)

    size = _chunk_size(grid.n_nodes)
    chunks = [(lo, min(lo + size, n_paths)) for lo in range(0, n_paths, size)]

    outcomes: list = [None] * n_paths
    seeds = np.zeros(n_paths, dtype=np.uint64)

    def consume(res: dict) -> None:
        lo, hi = res["lo"], res["hi"]
        outcomes[lo:hi] = res["outcomes"]
        seeds[lo:hi] = res["seeds"]
        if want_paths:
            vals = res["values"]
            for i in range(lo, hi):
                path_sink(i, grid, vals[i - lo])

    if workers <= 1 or len(chunks) == 1:
        for lo, hi in chunks:
            consume(_run_chunk(cfg_json, seed, eps, lo, hi))
    else:
        # consume in submission order; bounded queue keeps memory flat when
        # chunks carry full path matrices
        max_inflight = workers + 2
        with ProcessPoolExecutor(max_workers=workers) as pool:
            pending: deque = deque()
            for lo, hi in chunks:
                pending.append(pool.submit(_run_chunk, cfg_json, seed, eps, lo, hi))
                while len(pending) >= max_inflight:
                    consume(pending.popleft().result())
            while pending:
                consume(pending.popleft().result())

    return BatchResult(
        epsilon=float(eps),
        t_eps=tp.t_eps,
        x_eps=tp.x_eps,
        grid=grid,
        outcomes=tuple(outcomes),
        seeds=seeds,
    )


def _psi_quantiles(psi_scaled: np.ndarray) -> dict:
    if psi_scaled.size == 0:
        return {"q25": None, "median": None, "q75": None}
    q25, med, q75 = np.quantile(psi_scaled, [0.25, 0.5, 0.75])
    return {"q25": float(q25), "median": float(med), "q75": float(q75)}


def build_summary(result: BatchResult, resolved: dict) -> dict:
    """Plot-ready JSON summary; every value is a plain int/float/None."""
    n = result.n_paths
    sign_codes = np.array([_SIGN_CODE[o.sign] for o in result.outcomes], dtype=np.int8)
    n_plus = int(np.count_nonzero(sign_codes == 1))
    n_minus = int(np.count_nonzero(sign_codes == -1))
    n_undecided = n - n_plus - n_minus
    n_decided = n_plus + n_minus

    psi = np.array([o.psi_hat for o in result.outcomes])
    decided = sign_codes != 0
    psi_scaled = psi[decided] / result.t_eps

    if n_decided > 0:
        p_plus_dec = n_plus / n_decided
        p_minus_dec = n_minus / n_decided
        ci_plus = list(_wilson(n_plus, n_decided))
        ci_minus = list(_wilson(n_minus, n_decided))
    else:
        p_plus_dec = p_minus_dec = None
        ci_plus = ci_minus = None

    kappa_hat = r_squared = None
    try:
        fit = tail_fit(psi[decided], result.t_eps)
        kappa_hat, r_squared = float(fit.kappa), float(fit.r_squared)
    except Refusal:
        pass

    n_viol = np.array([o.n_violations for o in result.outcomes], dtype=np.int64)
    max_exc = np.array([o.max_excess for o in result.outcomes])

    return {
        "schema_version": resolved["schema_version"],
        "package_version": PACKAGE_VERSION,
        "config_sha256": config_hash(resolved),
        "epsilon": result.epsilon,
        "t_eps": float(result.t_eps),
        "x_eps": float(result.x_eps),
        "grid": {"dt": result.grid.dt, "n_steps": result.grid.n,
                 "horizon": float(result.grid.span)},
        "n_paths": n,
        "counts": {"plus": n_plus, "minus": n_minus, "undecided": n_undecided},
        "p_plus": n_plus / n,
        "p_minus": n_minus / n,
        "undecided_frac": n_undecided / n,
        "decided_frac": n_decided / n,
        "p_plus_decided": p_plus_dec,
        "p_minus_decided": p_minus_dec,
        "ci_plus_decided": ci_plus,
        "ci_minus_decided": ci_minus,
        "psi_over_t_eps": _psi_quantiles(psi_scaled),
        "tail": {"kappa_hat": kappa_hat, "r_squared": r_squared},
        "violations": {
            "mean_count": float(n_viol.mean()) if n else None,
            "max_count": int(n_viol.max()) if n else None,
            "max_excess": float(max_exc.max()) if n else None,
        },
    }


SWEEP_COLUMNS = (
    "epsilon",
    "t_eps",
    "x_eps",
    "p_plus",
    "p_minus",
    "undecided",
    "decided_frac",
    "psi_med",
    "psi_q25",
    "psi_q75",
    "kappa_hat",
    "r_squared",
)


def derive_sweep_seed(master_seed: int, eps_index: int) -> int:
    """Per-epsilon master seed; independent streams across the sweep."""
    ss = np.random.SeedSequence([int(master_seed), int(eps_index)])
    return int(ss.generate_state(1, np.uint64)[0])


def run_sweep(
    resolved: dict, *, workers: int = 1, path_sink=None
) -> tuple[list[dict], list[dict]]:
    """One batch per epsilon. Returns (csv rows, per-epsilon summaries)."""
    rows = []
    summaries = []
    for i, eps in enumerate(resolved["epsilons"]):
        seed_i = derive_sweep_seed(resolved["seed"], i)
        result = run_batch(
            resolved, epsilon=eps, master_seed=seed_i, workers=workers, path_sink=path_sink
        )
        summary = build_summary(result, resolved)
        quant = summary["psi_over_t_eps"]
        rows.append(
            {
                "epsilon": eps,
                "t_eps": summary["t_eps"],
                "x_eps": summary["x_eps"],
                "p_plus": summary["p_plus"],
                "p_minus": summary["p_minus"],
                "undecided": summary["undecided_frac"],
                "decided_frac": summary["decided_frac"],
                "psi_med": quant["median"],
                "psi_q25": quant["q25"],
                "psi_q75": quant["q75"],
                "kappa_hat": summary["tail"]["kappa_hat"],
                "r_squared": summary["tail"]["r_squared"],
            }
        )
        summaries.append(summary)
    return rows, summaries


def sweep_rows_to_csv_bytes(rows: list[dict]) -> bytes:
    lines = [",".join(SWEEP_COLUMNS)]
    for row in rows:
        cells = []
        for col in SWEEP_COLUMNS:
            val = row[col]
            cells.append("" if val is None else repr(float(val)))
        lines.append(",".join(cells))
    return ("\n".join(lines) + "\n").encode("ascii")
