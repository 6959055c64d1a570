"""Run configuration: strict JSON parsing, defaults and kernel construction.

A config is one JSON object. Unknown keys are rejected at every level with
the dotted path of the offending key; the seed is mandatory.

    {
      "experiment": "ctrw-limit",
      "seed": 20240611,
      "kernel": {"family": "pareto", "alpha": 1.0, "beta": 0.5, "rho": 0.0},
      "monte_carlo": {"n_paths": 100000},
      "tau_list": [0.01, 0.003, 0.001],
      "t": 1.0,
      "grid": {"y_lower": -8, "y_upper": 8, "bins": 16}
    }
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from typing import Any

from .errors import ConfigError
from .rng import BLOCK_SIZE

EXPERIMENTS = ("sample-check", "generator-check", "semigroup-converge", "subordination-check", "ctrw-limit")
SEED_MAX = 2**64 - 1

_KERNEL_DEFAULTS = {
    "family": "pareto",
    "alpha": 1.0,
    "beta": 0.5,
    "rho": 0.0,
    "dim": 1,
    "S": {"family": "canonical"},
    "w": {"family": "beta"},
    "temporal": "pareto",
}
_S_KEYS = {"canonical": set(), "constant": {"value"}, "sinusoidal": {"eps"}, "anisotropic": {"eps"}}
_W_KEYS = {"beta": set(), "constant": {"value"}}

# per experiment: defaults for grid, params, checks, plus default h/tau lists and n_paths
_DEFAULTS: dict[str, dict[str, Any]] = {
    "sample-check": {
        "kernel": {"alpha": 1.0, "beta": 0.5},
        "grid": {"y_lower": -10.0, "y_upper": 10.0, "bins": 40},
        "params": {"sigma": 1.0},
        "checks": ["symmetric", "one-sided"],
        "n_paths": 100_000,
    },
    "generator-check": {
        "grid": {"x_lower": -40.0, "x_upper": 40.0, "dx": 0.05, "interior": 5.0},
        "params": {"alpha_list": [0.5, 1.0, 1.5], "p_list": [0.5, 1.0, 2.0]},
        "checks": ["eigenfunction"],
    },
    "semigroup-converge": {
        "kernel": {"alpha": 1.0},
        "grid": {"x_lower": -60.0, "x_upper": 60.0, "dx": 0.025, "probe_halfwidth": 5.0},
        "params": {"positivity_steps": 10, "positivity_h": 0.1},
        "checks": ["witness", "positivity"],
        "h_list": [0.2, 0.1, 0.05],
        "t": 1.0,
    },
    "subordination-check": {
        "kernel": {"alpha": 1.0, "beta": 0.5},
        "grid": {
            "t_min": 0.5, "t_max": 2.0, "t_count": 7, "u_max": 3.0, "du": 0.01, "per_decade": 40,
            "residual_q_h": 0.01, "residual_g_h": 0.02,
        },
        "params": {},
        "checks": ["inverse-density", "mittag-leffler", "residuals"],
    },
    "ctrw-limit": {
        "kernel": {"alpha": 1.0, "beta": 0.5, "rho": 0.0},
        "grid": {"y_lower": -8.0, "y_upper": 8.0, "bins": 16},
        "params": {
            "dependent_rho": 1.0, "dependent_tau": 0.003, "dependent_ds_steps": 2, "dependent_s_max": 4.0,
            "duality_paths": 200, "duality_tau": 0.01, "duality_t_list": [0.25, 0.5, 1.0, 2.0],
        },
        "checks": ["convergence", "dependent", "duality"],
        "tau_list": [0.01, 0.003, 0.001],
        "t": 1.0,
        "n_paths": 100_000,
    },
}
_TOP_KEYS = {"experiment", "seed", "output_dir", "kernel", "grid", "params", "monte_carlo",
             "h_list", "tau_list", "t", "checks"}
_CHECKS = {
    "sample-check": {"symmetric", "one-sided"},
    "generator-check": {"eigenfunction"},
    "semigroup-converge": {"witness", "positivity"},
    "subordination-check": {"inverse-density", "mittag-leffler", "residuals"},
    "ctrw-limit": {"convergence", "dependent", "duality"},
}


@dataclass(frozen=True)
class KernelSpec:
    family: str = "pareto"
    alpha: float = 1.0
    beta: float = 0.5
    rho: float = 0.0
    dim: int = 1
    S: dict = field(default_factory=lambda: {"family": "canonical"})
    w: dict = field(default_factory=lambda: {"family": "beta"})
    temporal: str = "pareto"

    def spectral(self):
        from . import stable_core as sc

        fam = self.S["family"]
        if fam == "canonical":
            return sc.canonical_density(self.alpha, self.dim)
        if fam == "constant":
            return sc.constant_density(self.S["value"], self.dim, self.alpha)
        if fam == "sinusoidal":
            return sc.sinusoidal_density(self.alpha, self.S.get("eps", 0.5))
        return sc.anisotropic_density(self.alpha, self.S.get("eps", 0.5))

    def jump_kernel(self):
        from .jump_kernels import JumpKernel

        return JumpKernel(self.spectral(), self.alpha, self.family)

    def double_kernel(self, rho: float | None = None):
        from .jump_kernels import DoubleJumpKernel

        w = None
        if self.w["family"] == "constant":
            value = float(self.w["value"])
            w = lambda x, u: value + 0.0 * x  # noqa: E731
        return DoubleJumpKernel(self.jump_kernel(), self.beta, self.rho if rho is None else rho, w, self.temporal)


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    seed: int
    kernel: KernelSpec
    grid: dict
    params: dict
    n_paths: int
    block_size: int
    h_list: tuple
    tau_list: tuple
    t: float
    checks: tuple
    output_dir: str | None = None

    def as_dict(self) -> dict:
        """Normalised config with every default filled in (goes into summary.json)."""
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "kernel": dict(self.kernel.__dict__),
            "grid": dict(self.grid),
            "params": dict(self.params),
            "monte_carlo": {"n_paths": self.n_paths, "block_size": self.block_size},
            "h_list": list(self.h_list),
            "tau_list": list(self.tau_list),
            "t": self.t,
            "checks": list(self.checks),
        }


def _fail(path: str, rule: str, got=None):
    tail = "" if got is None else f", got {got!r}"
    raise ConfigError(f"{path}: {rule}{tail}")


def _reject_unknown(doc: dict, allowed, path: str):
    for k in doc:
        if k not in allowed:
            where = f"{path}.{k}" if path else k
            raise ConfigError(f"{where}: unknown key (allowed: {', '.join(sorted(allowed))})")


def _number(v, path, lo=-math.inf, hi=math.inf, lo_open=True, hi_open=True, rule=None) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(path, "must be a number", v)
    v = float(v)
    ok = math.isfinite(v) and (v > lo if lo_open else v >= lo) and (v < hi if hi_open else v <= hi)
    if not ok:
        if rule is None:
            lb = "(" if lo_open else "["
            rb = ")" if hi_open else "]"
            rule = f"must lie in {lb}{lo:g},{hi:g}{rb}"
        _fail(path, rule, v)
    return v


def _integer(v, path, lo=None, hi=None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        _fail(path, "must be an integer", v)
    if (lo is not None and v < lo) or (hi is not None and v > hi):
        _fail(path, f"must lie in [{lo}, {hi}]", v)
    return int(v)


def _alpha(v, path):
    return _number(v, path, 0.0, 2.0, rule="alpha ∈ (0,2)")


def _beta(v, path):
    return _number(v, path, 0.0, 1.0, rule="beta ∈ (0,1)")


def _parse_kernel(doc, base: dict) -> KernelSpec:
    merged = copy.deepcopy(_KERNEL_DEFAULTS)
    merged.update(copy.deepcopy(base))
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        _fail("kernel", "must be an object")
    _reject_unknown(doc, _KERNEL_DEFAULTS, "kernel")
    merged.update(copy.deepcopy(doc))
    if merged["family"] not in ("pareto", "lomax"):
        _fail("kernel.family", "must be one of pareto, lomax", merged["family"])
    alpha = _alpha(merged["alpha"], "kernel.alpha")
    beta = _beta(merged["beta"], "kernel.beta")
    rho = _number(merged["rho"], "kernel.rho", 0.0, 1.0, False, False, "rho ∈ [0,1]")
    dim = _integer(merged["dim"], "kernel.dim", 1, 2)
    S = merged["S"]
    if not isinstance(S, dict) or S.get("family") not in _S_KEYS:
        _fail("kernel.S.family", f"must be one of {', '.join(_S_KEYS)}", S.get("family") if isinstance(S, dict) else S)
    _reject_unknown(S, {"family"} | _S_KEYS[S["family"]], "kernel.S")
    if S["family"] == "constant":
        if "value" not in S:
            _fail("kernel.S.value", "required for the constant family")
        _number(S["value"], "kernel.S.value", 0.0)
    if "eps" in S:
        _number(S["eps"], "kernel.S.eps", 0.0, 1.0, False, True)
    if (S["family"] == "sinusoidal" and dim != 1) or (S["family"] == "anisotropic" and dim != 2):
        _fail("kernel.S.family", f"{S['family']} does not exist in d={dim}")
    w = merged["w"]
    if not isinstance(w, dict) or w.get("family") not in _W_KEYS:
        _fail("kernel.w.family", f"must be one of {', '.join(_W_KEYS)}", w.get("family") if isinstance(w, dict) else w)
    _reject_unknown(w, {"family"} | _W_KEYS[w["family"]], "kernel.w")
    if w["family"] == "constant":
        if "value" not in w:
            _fail("kernel.w.value", "required for the constant family")
        _number(w["value"], "kernel.w.value", 0.0)
    if merged["temporal"] not in ("pareto", "deterministic"):
        _fail("kernel.temporal", "must be pareto or deterministic", merged["temporal"])
    return KernelSpec(merged["family"], alpha, beta, rho, dim, S, w, merged["temporal"])


def _parse_section(doc, defaults: dict, path: str) -> dict:
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        _fail(path, "must be an object")
    _reject_unknown(doc, defaults, path)
    out = copy.deepcopy(defaults)
    for k, v in doc.items():
        d = defaults[k]
        p = f"{path}.{k}"
        if isinstance(d, list):
            if not isinstance(v, list) or not v:
                _fail(p, "must be a non-empty list", v)
            out[k] = [_number(x, f"{p}[{i}]") for i, x in enumerate(v)]
        elif isinstance(d, int) and not isinstance(d, bool):
            out[k] = _integer(v, p, 1)
        else:
            out[k] = _number(v, p)
    return out


def _decreasing(v, path) -> tuple:
    if not isinstance(v, list) or not v:
        _fail(path, "must be a non-empty list", v)
    vals = [_number(x, f"{path}[{i}]", 0.0) for i, x in enumerate(v)]
    for i, (a, b) in enumerate(zip(vals, vals[1:])):
        if not b < a:
            _fail(f"{path}[{i + 1}]", "list must be strictly decreasing", vals)
    return tuple(vals)


def _check_ranges(exp: str, grid: dict, params: dict):
    if "alpha_list" in params:
        for i, a in enumerate(params["alpha_list"]):
            _alpha(a, f"params.alpha_list[{i}]")
    if "p_list" in params:
        for i, p in enumerate(params["p_list"]):
            _number(p, f"params.p_list[{i}]", 0.0)
    for lo, hi in (("x_lower", "x_upper"), ("y_lower", "y_upper"), ("t_min", "t_max")):
        if lo in grid and not grid[hi] > grid[lo]:
            _fail(f"grid.{hi}", f"must exceed grid.{lo}", grid[hi])
    for k in ("dx", "du", "interior", "probe_halfwidth", "u_max", "residual_q_h", "residual_g_h", "t_min"):
        if k in grid:
            _number(grid[k], f"grid.{k}", 0.0)
    if "dependent_rho" in params:
        _number(params["dependent_rho"], "params.dependent_rho", 0.0, 1.0, False, False, "rho ∈ [0,1]")
    for k in ("dependent_tau", "duality_tau", "positivity_h"):
        if k in params:
            _number(params[k], f"params.{k}", 0.0, 1.0, True, False)
    if "duality_t_list" in params:
        for i, t in enumerate(params["duality_t_list"]):
            _number(t, f"params.duality_t_list[{i}]", 0.0)
    if "sigma" in params:
        _number(params["sigma"], "params.sigma", 0.0)


def parse_config(text: str, seed_override: int | None = None) -> RunConfig:
    """Validate a JSON document and fill in the experiment's defaults.

    Raises :class:`ConfigError` naming the offending key and the rule it breaks.
    ``seed_override`` (the ``--seed`` flag) replaces or supplies the seed.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown(doc, _TOP_KEYS, "")
    exp = doc.get("experiment")
    if exp not in EXPERIMENTS:
        _fail("experiment", f"must be one of {', '.join(EXPERIMENTS)}", exp)
    if seed_override is not None:
        seed = _integer(seed_override, "--seed", 0, SEED_MAX)
    elif "seed" not in doc:
        raise ConfigError("seed: required (runs are reproducible only from an explicit seed)")
    else:
        seed = _integer(doc["seed"], "seed", 0, SEED_MAX)
    if seed_override is not None and "seed" in doc:
        _integer(doc["seed"], "seed", 0, SEED_MAX)

    d = _DEFAULTS[exp]
    kernel = _parse_kernel(doc.get("kernel"), d.get("kernel", {}))
    grid = _parse_section(doc.get("grid"), d["grid"], "grid")
    params = _parse_section(doc.get("params"), d["params"], "params")
    _check_ranges(exp, grid, params)

    mc = doc.get("monte_carlo", {})
    if not isinstance(mc, dict):
        _fail("monte_carlo", "must be an object")
    _reject_unknown(mc, {"n_paths", "block_size"}, "monte_carlo")
    n_paths = _integer(mc.get("n_paths", d.get("n_paths", 10_000)), "monte_carlo.n_paths", 2)
    block_size = _integer(mc.get("block_size", BLOCK_SIZE), "monte_carlo.block_size", 1)

    h_list = _decreasing(doc["h_list"], "h_list") if "h_list" in doc else tuple(d.get("h_list", ()))
    tau_list = _decreasing(doc["tau_list"], "tau_list") if "tau_list" in doc else tuple(d.get("tau_list", ()))
    for i, tau in enumerate(tau_list):
        _number(tau, f"tau_list[{i}]", 0.0, 1.0, True, False)
    t = _number(doc["t"], "t", 0.0) if "t" in doc else float(d.get("t", 1.0))

    checks = doc.get("checks", d["checks"])
    if not isinstance(checks, list) or not checks:
        _fail("checks", "must be a non-empty list", checks)
    for i, c in enumerate(checks):
        if c not in _CHECKS[exp]:
            _fail(f"checks[{i}]", f"must be one of {', '.join(sorted(_CHECKS[exp]))}", c)
    out = doc.get("output_dir")
    if out is not None and not isinstance(out, str):
        _fail("output_dir", "must be a string", out)
    return RunConfig(exp, seed, kernel, grid, params, n_paths, block_size, h_list, tau_list, t, tuple(checks), out)


def load_config(path, seed_override: int | None = None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, seed_override)
