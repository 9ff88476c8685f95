"""Command line front end: simulate, sweep, constants, fbm-test.

Exit codes: 0 ok, 2 config error (including refusals of formally valid but
unusable inputs), 3 infeasible constraint system, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import pathlib
import sys

import numpy as np

from .config import (
    build_manifest,
    load_config_file,
    resolve_input,
)
from .constants import kappa_ceiling, solve_fixed, solve_stage2
from .errors import (
    ConfigError,
    DomainError,
    FbmSynthesisError,
    InfeasibleError,
    IntegrationError,
    Refusal,
)
from .fbm import (
    PastWindow,
    fbm_increments_batch,
    generate_fbm_exact,
    kernel_G,
    make_noise,
    norm_M_batch,
    past_process,
)
from .grids import Path, TimeGrid
from .ledger_check import verify_ledger
from .runner import build_summary, run_batch, run_sweep, sweep_rows_to_csv_bytes
from .selection import outcomes_to_csv_bytes

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERIC = 4

# pretty names for ledger fields whose python identifiers differ
_SYMBOLS = {
    "c_af": "c_Af",
    "c_ac": "c_Ac",
    "u_big": "U",
    "c_w": "C_W",
    "k_a": "K_A",
    "mu_g": "mu_g",
    "t_star": "t*",
    "c_alpha_gamma": "c_{alpha,gamma}",
}


def _write_bytes(path: pathlib.Path, data: bytes) -> None:
    path.write_bytes(data)


def _write_json(path: pathlib.Path, obj) -> None:
    path.write_bytes((json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8"))


def _prepare_outdir(out: str, force: bool) -> pathlib.Path:
    outdir = pathlib.Path(out)
    if outdir.exists() and any(outdir.iterdir()) and not force:
        raise ConfigError(f"output directory {outdir} exists and is not empty (use --force)")
    outdir.mkdir(parents=True, exist_ok=True)
    return outdir


def _apply_overrides(raw: dict, args) -> dict:
    """Push --seed/--save-paths into the config (or manifest's config).

    --workers is deliberately not pushed here: worker count is execution
    machinery, so it must never enter the config or its hash.
    """
    target = raw["config"] if ("config" in raw and "command" in raw) else raw
    if not isinstance(target, dict):
        return raw
    if args.seed is not None:
        target["seed"] = args.seed
    if args.save_paths:
        target["save_paths"] = True
    return raw


def cmd_simulate(args) -> int:
    raw = _apply_overrides(load_config_file(args.config), args)
    resolved = resolve_input(raw, "simulate")
    outdir = _prepare_outdir(args.out, args.force)

    sink = None
    if resolved["save_paths"]:
        paths_dir = outdir / "paths"
        paths_dir.mkdir(exist_ok=True)

        def sink(i: int, grid: TimeGrid, row) -> None:
            Path(grid, row).save_binary(str(paths_dir / f"path_{i:06d}.fsel"))

    result = run_batch(resolved, workers=args.workers or 1, path_sink=sink)
    summary = build_summary(result, resolved)

    _write_json(outdir / "manifest.json", build_manifest("simulate", resolved))
    _write_bytes(
        outdir / "outcomes.csv",
        outcomes_to_csv_bytes(result.outcomes, range(result.n_paths), result.seeds),
    )
    _write_json(outdir / "summary.json", summary)
    print(
        f"simulate: {result.n_paths} paths -> {outdir} "
        f"(decided {summary['decided_frac']:.4f}, p_plus {summary['p_plus']:.4f})"
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    raw = _apply_overrides(load_config_file(args.config), args)
    resolved = resolve_input(raw, "sweep")
    outdir = _prepare_outdir(args.out, args.force)

    rows, summaries = run_sweep(resolved, workers=args.workers or 1)
    _write_json(outdir / "manifest.json", build_manifest("sweep", resolved))
    _write_bytes(outdir / "sweep.csv", sweep_rows_to_csv_bytes(rows))
    _write_json(outdir / "summaries.json", summaries)
    print(f"sweep: {len(rows)} epsilon values -> {outdir}")
    return EXIT_OK


def _print_ledger(ledger, report) -> None:
    print("ledger values")
    for name in (
        "gamma", "hurst", "alpha", "kappa", "sigma", "xi", "theta", "mu_g",
        "delta", "t_e", "c_af", "c_ac", "u_big", "vartheta", "c_w", "beta",
        "q", "k_a", "t_star", "ell", "xi1", "xi2", "c_alpha_gamma",
    ):
        label = _SYMBOLS.get(name, name)
        print(f"  {label:<18} {getattr(ledger, name):.10g}")
    print("constraint flags (slack = LHS - RHS, negative is satisfied)")
    for e in report.entries:
        state = "ok  " if e.ok else "FAIL"
        note = f"  [{e.note}]" if e.note else ""
        print(f"  {state} {e.name:<20} slack {e.slack: .4e}{note}")


def cmd_constants(args) -> int:
    gamma, hurst = args.gamma, args.hurst
    ceiling = kappa_ceiling(gamma, hurst)
    kappa = args.kappa if args.kappa is not None else min(0.5 * ceiling, 0.5)
    growth = 1.0 / (1.0 - gamma)
    alpha = args.alpha if args.alpha is not None else 0.5 * (hurst + 1.5 * kappa + growth)

    partial = solve_fixed(gamma, hurst, alpha, kappa)
    ledger = solve_stage2(
        partial, gamma, hurst,
        a_coef=args.a_coef, c_b=args.c_b, c_g=args.c_g, lam=args.lam,
        k_ell=args.k_ell, k_gamma=args.k_gamma, vartheta=args.vartheta,
    )
    report = verify_ledger(ledger, gamma, hurst)
    _print_ledger(ledger, report)
    if args.out:
        _write_json(
            pathlib.Path(args.out),
            {
                "gamma": gamma,
                "hurst": hurst,
                "kappa_ceiling": ceiling,
                "ledger": ledger.to_json_dict(),
                "report": report.to_json_dict(),
            },
        )
        print(f"wrote {args.out}")
    if not report.ok:
        print("verifier disagrees with the solver", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _fbm_covariance_check(hurst: float, n: int, samples: int, seed: int):
    grid = TimeGrid(0.0, 1.0 / n, n)
    second = np.zeros((n, n))
    chunk = max(1, min(4096, int(4e6 // max(1, n))))
    for lo in range(0, samples, chunk):
        idx = range(lo, min(lo + chunk, samples))
        vals = np.cumsum(fbm_increments_batch(grid, hurst, seed, idx), axis=1)
        second += vals.T @ vals
    emp = second / samples
    t = grid.nodes()[1:]
    h2 = 2.0 * hurst
    r_true = 0.5 * (t[:, None] ** h2 + t[None, :] ** h2 - np.abs(t[:, None] - t[None, :]) ** h2)
    se = np.sqrt((np.diag(r_true)[:, None] * np.diag(r_true)[None, :] + r_true**2) / samples)
    return float(np.max(np.abs(emp - r_true) / se))


def _fbm_mnorm_ks(hurst: float, n: int, samples: int, seed: int):
    from scipy.stats import ks_2samp

    delta = 0.1
    lam = 2.0
    stats = []
    for stream, span in ((1, 1.0), (2, lam)):
        grid = TimeGrid(0.0, span / n, n)
        chunk = max(1, min(4096, int(4e6 // max(1, n))))
        vals_norm = np.empty(samples)
        base = stream * samples
        for lo in range(0, samples, chunk):
            idx = range(base + lo, base + min(lo + chunk, samples))
            inc = fbm_increments_batch(grid, hurst, seed, idx)
            rows = np.concatenate([np.zeros((inc.shape[0], 1)), np.cumsum(inc, axis=1)], axis=1)
            vals_norm[lo : lo + inc.shape[0]] = norm_M_batch(rows, grid.dt, delta)
        stats.append(vals_norm)
    # self-similarity: the [0, lam] statistic rescaled by lam^(1/2 - H)
    # has the law of the [0, 1] statistic
    scaled = stats[1] * lam ** (0.5 - hurst)
    res = ks_2samp(stats[0], scaled)
    return float(res.statistic), float(res.pvalue)


def _fbm_degeneracy_exact() -> bool:
    ok = kernel_G(0.7, 2.0, 1.25, 0.5) == 0.0
    grid = TimeGrid(0.0, 0.125, 32)
    b = generate_fbm_exact(grid, 0.5, seed=11)
    pp = past_process(b, PastWindow(u=0.5, v=1.0, s=1.5), TimeGrid(1.5, 0.25, 8), 0.5)
    ok = ok and bool(np.all(pp.values == 0.0))
    bundle = make_noise(TimeGrid(0.0, 0.25, 16), 0.5, seed=7)
    ok = ok and bundle.brownian is bundle.fbm
    return ok


def cmd_fbmtest(args) -> int:
    n = args.n
    if n < 2 or (n & (n - 1)) != 0:
        raise ConfigError(f"n must be a power of two for the FFT method, got {n}")
    if args.samples < 100:
        raise ConfigError(f"samples must be >= 100, got {args.samples}")

    cov_max_se = _fbm_covariance_check(args.hurst, n, args.samples, args.seed)
    ks_stat, ks_pvalue = _fbm_mnorm_ks(args.hurst, n, args.samples, args.seed)
    degeneracy = _fbm_degeneracy_exact() if args.hurst == 0.5 else None

    diag = {
        "hurst": args.hurst,
        "n": n,
        "samples": args.samples,
        "seed": args.seed,
        "covariance": {"max_abs_error_se": cov_max_se, "pass": cov_max_se < 4.0},
        "mnorm_scaling": {
            "ks_statistic": ks_stat,
            "p_value": ks_pvalue,
            "pass": ks_pvalue > 1e-3,
        },
        "markov_degeneracy_exact": degeneracy,
    }
    blob = json.dumps(diag, indent=2, sort_keys=True)
    print(blob)
    if args.out:
        pathlib.Path(args.out).write_bytes((blob + "\n").encode("utf-8"))
    ok = diag["covariance"]["pass"] and diag["mnorm_scaling"]["pass"]
    if degeneracy is not None:
        ok = ok and degeneracy
    return EXIT_OK if ok else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracsel",
        description="Simulation lab for noise-driven selection in singular-drift SDEs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn in (("simulate", cmd_simulate), ("sweep", cmd_sweep)):
        p = sub.add_parser(name, help=f"run the {name} experiment from a JSON config")
        p.add_argument("--config", required=True, help="config or manifest JSON file")
        p.add_argument("--out", required=True, help="output artifact directory")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument(
            "--workers",
            type=int,
            default=None,
            help="process count for this run; never affects outputs",
        )
        p.add_argument("--force", action="store_true", help="write into an existing directory")
        p.add_argument("--save-paths", action="store_true", help="persist per-path binaries")
        p.set_defaults(func=fn)

    p = sub.add_parser("constants", help="solve and verify the proof-constants ledger")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--hurst", type=float, required=True)
    p.add_argument("--alpha", type=float, default=None, help="default: mid-window")
    p.add_argument("--kappa", type=float, default=None, help="default: half the ceiling")
    p.add_argument("--a-coef", type=float, default=1.0, help="drift coefficient A")
    p.add_argument("--c-b", type=float, default=1.0)
    p.add_argument("--c-g", type=float, default=1.0)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--k-ell", type=float, default=1.0)
    p.add_argument("--k-gamma", type=float, default=1.0)
    p.add_argument("--vartheta", type=float, default=None)
    p.add_argument("--out", default=None, help="write ledger + report JSON here")
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("fbm-test", help="fractional noise engine diagnostics")
    p.add_argument("--hurst", type=float, required=True)
    p.add_argument("--n", type=int, default=256, help="grid steps (power of two)")
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="write diagnostics JSON here")
    p.set_defaults(func=cmd_fbmtest)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        for item in exc.binding:
            print(f"  binding: {item}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (IntegrationError, FbmSynthesisError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, Refusal, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
