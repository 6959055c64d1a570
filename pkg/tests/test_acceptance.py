"""The eight acceptance criteria, each run from its checked-in config.

Every test records one PASS/FAIL line; the lines are printed in the terminal
summary under "acceptance criteria".
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from fracwalk.config import load_config, parse_config
from fracwalk.experiments import run_experiment
from fracwalk.io import verify_manifest

from conftest import ACCEPTANCE_LINES

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
_CACHE: dict[str, tuple] = {}


def run_config(name, tmp_path_factory):
    if name not in _CACHE:
        out = tmp_path_factory.mktemp(name)
        t0 = time.perf_counter()
        result = run_experiment(load_config(CONFIGS / f"{name}.json"), out)
        _CACHE[name] = (result, time.perf_counter() - t0)
    return _CACHE[name]


def record(criterion, title, checks, runtime=None, limit=None, extra_ok=True, note=""):
    ok = all(a["passed"] for a in checks) and bool(checks) and extra_ok
    timing = ""
    if limit is not None:
        ok = ok and runtime < limit
        timing = f" runtime {runtime:.1f}s (< {limit:g}s)"
    failed = [a for a in checks if not a["passed"]]
    shown = failed or checks
    vals = "; ".join(f"{a['name']}: {_short(a['measured'])}" for a in shown[:4])
    if len(shown) > 4:
        vals += f"; ... ({len(shown)} checks)"
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {title} |{timing} | {vals}{note}"
    ACCEPTANCE_LINES[criterion] = line
    print(line)
    return ok


def _short(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, list):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    return repr(v)


def of(result, criterion):
    return [a for a in result.assertions if a["criterion"] == criterion]


def test_criterion_1_sampler_fidelity(tmp_path_factory):
    res, secs = run_config("sample-check", tmp_path_factory)
    checks = of(res, 1)
    assert len(checks) == 2
    assert record(1, "stable sampler KS distances < 0.01", checks, secs, 10)


def test_criterion_2_generator_eigenfunctions(tmp_path_factory):
    res, secs = run_config("generator-check", tmp_path_factory)
    checks = of(res, 2)
    assert len(checks) == 9
    assert record(2, "cos(px) eigenfunction relative error < 0.01", checks, secs, 30)


def test_criterion_3_markov_scheme_witness(tmp_path_factory):
    res, secs = run_config("semigroup-converge", tmp_path_factory)
    checks = of(res, 3)
    assert len(checks) == 2
    assert record(3, "R_h^k f error decreases over h=0.2,0.1,0.05, final < 0.02", checks, secs, 60)


def test_criterion_4_inverse_subordinator_density(tmp_path_factory):
    res, secs = run_config("inverse-density", tmp_path_factory)
    checks = of(res, 4)
    assert len(checks) == 3
    assert record(4, "G-grid Q vs closed form, mass, self-similarity < 1e-3", checks, secs, 30)


def test_criterion_5_mittag_leffler_identity(tmp_path_factory):
    res, secs = run_config("mittag-leffler", tmp_path_factory)
    checks = of(res, 5)
    assert len(checks) == 1
    assert record(5, "Laplace transform of Q(1,.) vs e erfc(1) < 2e-3", checks, secs, 5)


def test_criterion_6_fractional_residuals(tmp_path_factory):
    res, secs = run_config("residuals", tmp_path_factory)
    checks = of(res, 6)
    assert len(checks) == 8
    assert record(6, "residual bounds, halving ratios in [1.5,3], negative controls >= 10x", checks, secs, 60)


def test_criterion_7_main_theorem_witness(tmp_path_factory):
    res, secs = run_config("ctrw-limit", tmp_path_factory)
    checks = of(res, 7)
    assert len(checks) == 3
    cfg = load_config(CONFIGS / "ctrw-limit.json")
    assert cfg.n_paths == 100_000 and list(cfg.tau_list) == [0.01, 0.003, 0.001]
    assert record(7, "L1 to the subordination density decreases over tau, final < 0.05; rho=1 estimators agree",
                  checks, secs, 300)


def _small(name, **over):
    doc = json.loads((CONFIGS / f"{name}.json").read_text())
    doc.update(over)
    return parse_config(json.dumps(doc))


def _outputs(out: Path):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != "manifest.json"}


def test_criterion_8_exactness(tmp_path_factory, monkeypatch):
    duality = of(run_config("ctrw-limit", tmp_path_factory)[0], 8)
    positivity = of(run_config("semigroup-converge", tmp_path_factory)[0], 8)
    assert len(duality) == 1 and len(positivity) == 3

    # bit-reproducibility: the same configs at small size under 1 and 4 workers
    identical = True
    for name, over in (
        ("ctrw-limit", {"monte_carlo": {"n_paths": 20000, "block_size": 2048},
                        "params": {"duality_paths": 40}}),
        ("semigroup-converge", {"h_list": [0.2, 0.1]}),
    ):
        cfg = _small(name, **over)
        outs = []
        for threads in (1, 4):
            monkeypatch.setenv("FRACWALK_THREADS", str(threads))
            out = tmp_path_factory.mktemp(f"{name}-{threads}")
            run_experiment(cfg, out)
            assert verify_manifest(out) == []
            outs.append(_outputs(out))
        identical = identical and outs[0] == outs[1] and any(k.endswith(".csv") for k in outs[0])
    assert record(8, "duality on every path, R_h positivity, byte-identical outputs for 1 vs 4 threads",
                  duality + positivity, extra_ok=identical,
                  note="" if identical else "; outputs differ across thread counts")
