"""Experiment configuration: JSON schema, defaults, hashing, manifests.

A config is a single JSON object, schema version 1.  Validation resolves
every default explicitly so the manifest written next to an artifact
records the exact experiment with no hidden state.  Reruns accept either
a raw config or a previously written manifest.
"""

from __future__ import annotations

import hashlib
import json
import math

from .errors import ConfigError
from .flow import ModelParams, transition_point
from .grids import TimeGrid
from .integrate import SCHEMES

__all__ = [
    "PACKAGE_VERSION",
    "SCHEMA_VERSION",
    "load_config_file",
    "validate_config",
    "resolve_input",
    "resolve_grid",
    "build_model",
    "config_hash",
    "build_manifest",
]

PACKAGE_VERSION = "0.1.0"
SCHEMA_VERSION = 1

_MARGIN_MODES = ("paper", "relative")
_NOISE_MODES = ("exact", "volterra")
_FBM_METHODS = ("auto", "fft", "cholesky")
_MAX_SEED = 2**64


def _require_obj(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"{path}: expected an object, got {type(value).__name__}")
    return value


def _no_extras(obj: dict, allowed, path: str) -> None:
    extras = sorted(set(obj) - set(allowed))
    if extras:
        raise ConfigError(f"{path}: unknown key(s) {extras}")


def _as_float(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    out = float(value)
    if not math.isfinite(out):
        raise ConfigError(f"{path}: must be finite, got {out}")
    return out


def _as_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    return value


def _as_bool(value, path: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{path}: expected true/false, got {value!r}")
    return value


def _choice(value, options, path: str) -> str:
    if value not in options:
        raise ConfigError(f"{path}: must be one of {list(options)}, got {value!r}")
    return value


def load_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return _require_obj(raw, "<config>")


def _validate_model(raw: dict, need_epsilon: bool) -> dict:
    obj = _require_obj(raw, "model")
    _no_extras(obj, ("gamma", "hurst", "a_plus", "a_minus", "epsilon"), "model")
    out = {}
    for key in ("gamma", "hurst"):
        if key not in obj:
            raise ConfigError(f"model.{key}: required")
        out[key] = _as_float(obj[key], f"model.{key}")
    out["a_plus"] = _as_float(obj.get("a_plus", 1.0), "model.a_plus")
    out["a_minus"] = _as_float(obj.get("a_minus", 1.0), "model.a_minus")
    if "epsilon" in obj:
        out["epsilon"] = _as_float(obj["epsilon"], "model.epsilon")
    elif need_epsilon:
        raise ConfigError("model.epsilon: required for simulate")
    return out


def _validate_grid(raw) -> dict:
    if raw is None:
        return {"dt_factor": 0.001, "horizon_factor": 50.0}
    obj = _require_obj(raw, "grid")
    _no_extras(obj, ("dt_factor", "horizon_factor", "dt", "horizon"), "grid")
    factor_keys = {"dt_factor", "horizon_factor"} & set(obj)
    abs_keys = {"dt", "horizon"} & set(obj)
    if factor_keys and abs_keys:
        raise ConfigError("grid: give either dt_factor/horizon_factor or dt/horizon, not both")
    if abs_keys:
        if abs_keys != {"dt", "horizon"}:
            raise ConfigError("grid: absolute form needs both dt and horizon")
        dt = _as_float(obj["dt"], "grid.dt")
        horizon = _as_float(obj["horizon"], "grid.horizon")
        if dt <= 0.0 or horizon <= 0.0:
            raise ConfigError("grid: dt and horizon must be positive")
        if horizon < dt:
            raise ConfigError("grid: horizon must be at least dt")
        return {"dt": dt, "horizon": horizon}
    out = {
        "dt_factor": _as_float(obj.get("dt_factor", 0.001), "grid.dt_factor"),
        "horizon_factor": _as_float(obj.get("horizon_factor", 50.0), "grid.horizon_factor"),
    }
    if out["dt_factor"] <= 0.0 or out["horizon_factor"] <= 0.0:
        raise ConfigError("grid: dt_factor and horizon_factor must be positive")
    if out["horizon_factor"] < out["dt_factor"]:
        raise ConfigError("grid: horizon_factor must be at least dt_factor")
    return out


def _validate_detection(raw, model: dict) -> dict:
    obj = _require_obj(raw if raw is not None else {}, "detection")
    _no_extras(obj, ("alpha", "margin_mode", "rel_delta"), "detection")
    alpha = obj.get("alpha")
    if alpha is None:
        # default: midway between the noise and drift growth exponents
        alpha = 0.5 * (model["hurst"] + 1.0 / (1.0 - model["gamma"]))
    else:
        alpha = _as_float(alpha, "detection.alpha")
        if alpha <= 0.0:
            raise ConfigError(f"detection.alpha: must be positive, got {alpha}")
    mode = _choice(obj.get("margin_mode", "paper"), _MARGIN_MODES, "detection.margin_mode")
    rel = _as_float(obj.get("rel_delta", 0.1), "detection.rel_delta")
    if not (0.0 < rel < 1.0):
        raise ConfigError(f"detection.rel_delta: must lie in (0, 1), got {rel}")
    return {"alpha": alpha, "margin_mode": mode, "rel_delta": rel}


def _validate_noise(raw) -> dict:
    obj = _require_obj(raw if raw is not None else {}, "noise")
    _no_extras(obj, ("mode", "history_horizon", "method"), "noise")
    mode = _choice(obj.get("mode", "exact"), _NOISE_MODES, "noise.mode")
    hh = _as_float(obj.get("history_horizon", 1000.0), "noise.history_horizon")
    if hh < 0.0:
        raise ConfigError(f"noise.history_horizon: must be >= 0, got {hh}")
    method = _choice(obj.get("method", "auto"), _FBM_METHODS, "noise.method")
    return {"mode": mode, "history_horizon": hh, "method": method}


def validate_config(raw: dict, command: str) -> dict:
    """Validate and resolve a config for 'simulate' or 'sweep'.

    Returns a new dict with every default made explicit. Raises ConfigError
    with a field path on the first problem found.
    """
    if command not in ("simulate", "sweep"):
        raise ConfigError(f"unknown command {command!r}")
    obj = _require_obj(raw, "<config>")
    # worker count is deliberately not configuration: results may never
    # depend on it, so it stays a CLI-only execution flag
    allowed = [
        "schema_version", "model", "grid", "n_paths", "seed", "scheme",
        "x0", "detection", "noise", "save_paths",
    ]
    if command == "sweep":
        allowed.append("epsilons")
    _no_extras(obj, allowed, "<config>")

    sv = obj.get("schema_version", SCHEMA_VERSION)
    if sv != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, got {sv!r}")
    if "model" not in obj:
        raise ConfigError("model: required")

    resolved: dict = {"schema_version": SCHEMA_VERSION}
    resolved["model"] = _validate_model(obj["model"], need_epsilon=command == "simulate")
    resolved["grid"] = _validate_grid(obj.get("grid"))

    n_paths = _as_int(obj.get("n_paths", 1000), "n_paths")
    if n_paths < 1:
        raise ConfigError(f"n_paths: must be >= 1, got {n_paths}")
    resolved["n_paths"] = n_paths

    seed = _as_int(obj.get("seed", 0), "seed")
    if not (0 <= seed < _MAX_SEED):
        raise ConfigError(f"seed: must lie in [0, 2^64), got {seed}")
    resolved["seed"] = seed

    resolved["scheme"] = _choice(obj.get("scheme", "flow-splitting"), SCHEMES, "scheme")
    resolved["x0"] = _as_float(obj.get("x0", 0.0), "x0")
    resolved["detection"] = _validate_detection(obj.get("detection"), resolved["model"])
    resolved["noise"] = _validate_noise(obj.get("noise"))
    resolved["save_paths"] = _as_bool(obj.get("save_paths", False), "save_paths")
    if command == "sweep" and resolved["save_paths"]:
        raise ConfigError("save_paths: not supported for sweep; run simulate per epsilon")

    if command == "sweep":
        eps_list = obj.get("epsilons")
        if not isinstance(eps_list, list) or len(eps_list) < 2:
            raise ConfigError("epsilons: sweep needs a list of at least two values")
        out_eps = []
        for i, e in enumerate(eps_list):
            val = _as_float(e, f"epsilons[{i}]")
            if val <= 0.0:
                raise ConfigError(f"epsilons[{i}]: must be positive, got {val}")
            out_eps.append(val)
        resolved["epsilons"] = out_eps

    # semantic model constraints (range interplay) via the dataclass itself
    try:
        build_model(resolved["model"], epsilon=resolved["model"].get("epsilon", 1.0))
    except Exception as exc:
        raise ConfigError(f"model: {exc}") from exc
    return resolved


def build_model(model_cfg: dict, epsilon: float | None = None) -> ModelParams:
    eps = model_cfg.get("epsilon") if epsilon is None else epsilon
    return ModelParams(
        gamma=model_cfg["gamma"],
        hurst=model_cfg["hurst"],
        a_plus=model_cfg["a_plus"],
        a_minus=model_cfg["a_minus"],
        epsilon=eps,
    )


def resolve_grid(params: ModelParams, grid_cfg: dict) -> TimeGrid:
    """Concrete TimeGrid from either grid form; factor form scales with t_eps."""
    if "dt" in grid_cfg:
        dt = grid_cfg["dt"]
        horizon = grid_cfg["horizon"]
    else:
        tp = transition_point(params)
        dt = grid_cfg["dt_factor"] * tp.t_eps
        horizon = grid_cfg["horizon_factor"] * tp.t_eps
    n = max(1, int(round(horizon / dt)))
    return TimeGrid(t0=0.0, dt=dt, n=n)


def config_hash(resolved: dict) -> str:
    blob = json.dumps(resolved, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def build_manifest(command: str, resolved: dict) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "package_version": PACKAGE_VERSION,
        "command": command,
        "master_seed": resolved["seed"],
        "config": resolved,
        "config_sha256": config_hash(resolved),
    }


def resolve_input(raw: dict, command: str) -> dict:
    """Accept a raw config or a manifest written by a previous run."""
    obj = _require_obj(raw, "<config>")
    if "config" in obj and "command" in obj:
        if obj["command"] != command:
            raise ConfigError(
                f"manifest was written by '{obj['command']}', not '{command}'"
            )
        resolved = validate_config(_require_obj(obj["config"], "config"), command)
        stated = obj.get("config_sha256")
        if stated is not None and stated != config_hash(resolved):
            raise ConfigError("manifest config_sha256 does not match its config")
        return resolved
    return validate_config(obj, command)
