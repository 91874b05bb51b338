"""Acceptance suite: the end-to-end experiments and the property battery.

Each criterion prints one ``PASS``/``FAIL`` line.  Training runs are cached
under ``runs/acceptance`` (override with ``MOLLIKIT_ACCEPTANCE_DIR``); a
cached run is reused only when its stored config snapshot matches the config
that would be run now.  A cold run of everything takes a few CPU hours.

Run standalone with ``python tests/test_acceptance.py`` or through pytest.
"""

from __future__ import annotations

import json
import os
import statistics
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from mollikit import checkpoint, config
from mollikit.evalmetrics import density_grid, read_jsonl, top_density_cells
from mollikit.trainer import run_experiment

ROOT = Path(__file__).resolve().parents[1]
CACHE = Path(os.environ.get("MOLLIKIT_ACCEPTANCE_DIR", ROOT / "runs" / "acceptance"))
DATA = Path(os.environ.get("MOLLIKIT_DATA", ROOT / "data"))
SEEDS = (0, 1, 2, 3)

REPORT: list[str] = []


def report(name: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    REPORT.append(line)
    print(line, flush=True)


def paired_run(recipe: str, seed: int, overrides: dict | None = None) -> dict:
    """Summary of a vanilla/mollified pair, from cache when the config is unchanged."""
    flags = {"train.seed": seed, **(overrides or {})}
    tag = recipe + "".join(f"_{k}={v}" for k, v in sorted((overrides or {}).items()) if k != "data.path")
    out = CACHE / tag / f"seed{seed}"
    want = config.resolve(recipe, None, flags)
    summary = out / "summary.json"
    snap = out / "mollified" / "config.snapshot"
    if summary.exists() and snap.exists() and config.parse_file(snap) == want:
        return json.loads(summary.read_text())
    return run_experiment(recipe, out, flags)


def mmd_criterion(recipe: str, min_ratio: float) -> tuple[bool, str, list[dict], int]:
    runs = [paired_run(recipe, s) for s in SEEDS]
    van = [r["runs"]["vanilla"]["final_mmd2"] for r in runs]
    mol = [r["runs"]["mollified"]["final_mmd2"] for r in runs]
    ratio = statistics.median(van) / statistics.median(mol)
    wins = sum(m < v for v, m in zip(van, mol))
    detail = (f"median ratio {ratio:.2f} (need >= {min_ratio}), mollified wins {wins}/4; "
              f"x1e4 vanilla {[round(v * 1e4, 4) for v in van]} mollified {[round(m * 1e4, 4) for m in mol]}")
    return ratio >= min_ratio, detail, runs, wins


# ---------------------------------------------------------------------------


@pytest.mark.slow
def test_c1_toy_gmm_mmd_improvement():
    ok, detail, _, wins = mmd_criterion("toy-gmm", 2.0)
    ok = ok and wins >= 3
    report("C1 toy-gmm MMD", ok, detail)
    assert ok, detail


@pytest.mark.slow
def test_c2_von_mises_manifold():
    ratio_ok, detail, _, _ = mmd_criterion("toy-vonmises", 10.0)
    off = []
    for s in SEEDS:
        tag = CACHE / "toy-vonmises" / f"seed{s}" / "mollified" / "model.ckpt"
        model = checkpoint.load(tag)
        bounds = (-4.0, 4.0)
        cells = top_density_cells(density_grid(model, bounds, 101), bounds, 0.01)
        off.append(float(np.max(np.abs(np.linalg.norm(cells, axis=1) - 1.0))))
    circle_ok = all(d <= 0.25 for d in off)
    detail += f"; top-1% cells max distance to circle per seed {[round(d, 3) for d in off]} (need <= 0.25)"
    ok = ratio_ok and circle_ok
    report("C2 von Mises", ok, detail)
    assert ok, detail


UCI = {
    "red-wine": "winequality-red.csv",
    "white-wine": "winequality-white.csv",
}


def uci_gap(name: str, flow: str, small: bool = False) -> tuple[float, list[float], list[float]]:
    recipe = f"uci-{name}" + ("-realnvp" if flow == "realnvp" else "") + ("-small" if small else "")
    runs = [paired_run(recipe, s, {"data.path": str(DATA / UCI[name])}) for s in SEEDS]
    van = [r["runs"]["vanilla"]["final_test_ll"] for r in runs]
    mol = [r["runs"]["mollified"]["final_test_ll"] for r in runs]
    if any(v is None for v in van + mol):
        return float("nan"), van, mol
    return float(np.mean(mol) - np.mean(van)), van, mol


@pytest.mark.slow
@pytest.mark.parametrize("name", list(UCI))
def test_c3_uci_loglik(name):
    if not (DATA / UCI[name]).exists():
        report(f"C3 UCI {name}", False, f"data file {DATA / UCI[name]} not present; criterion not run")
        pytest.skip(f"{UCI[name]} not available offline")
    lines, ok = [], True
    for flow, need in (("maf", 1.0), ("realnvp", 2.0)):
        gap, van, mol = uci_gap(name, flow)
        good = gap >= need
        ok &= good
        lines.append(f"{flow} gap {gap:.2f} nats (need >= {need}); vanilla {np.round(van, 2).tolist()} "
                     f"mollified {np.round(mol, 2).tolist()}")
    report(f"C3 UCI {name}", ok, "; ".join(lines))
    assert ok, lines


PROPERTY_TESTS = {
    "autodiff vs finite differences (>= 50 nets, rel 1e-4)":
        ["tests/test_autodiff.py::test_gradient_battery_against_finite_differences"],
    "flow invertibility (1e3 points per layer type, 1e-8)":
        ["tests/test_flows.py::test_layer_invertibility"],
    "log-det vs numeric Jacobian (D <= 5, rel 1e-4)":
        ["tests/test_flows.py::test_logdet_matches_numeric_jacobian"],
    "2-D density integrates to 1 +- 1%":
        ["tests/test_flows.py::test_density_integrates_to_one"],
    "MAF masking exact invariance":
        ["tests/test_flows.py::test_maf_exact_invariance", "tests/test_flows.py::test_maf_masks_are_autoregressive"],
    "schedule endpoints / monotonicity / SNR on 1e4 grids":
        ["tests/test_schedules.py::test_sigmoid_endpoints_exact", "tests/test_schedules.py::test_linear_values",
         "tests/test_schedules.py::test_cosine_end_is_tiny_but_not_zero",
         "tests/test_schedules.py::test_monotone_on_dense_grid",
         "tests/test_schedules.py::test_snr_monotone_on_dense_grid"],
    "Gaussian mollification moments (1% at N=1e6)":
        ["tests/test_mollify.py::test_moments_at_half_variance",
         "tests/test_mollify.py::test_conditional_moments_along_schedule"],
    "blurring: DCT roundtrip, semigroup, DC, attenuation":
        ["tests/test_mollify.py::test_dct_roundtrip", "tests/test_mollify.py::test_semigroup",
         "tests/test_mollify.py::test_dc_preserved_exactly",
         "tests/test_mollify.py::test_attenuation_factor_per_coefficient"],
    "MMD^2: self-zero, symmetry, variance linearity":
        ["tests/test_evalmetrics.py::test_same_set_is_exactly_zero",
         "tests/test_evalmetrics.py::test_symmetric_nonnegative_linear"],
    "vanilla equivalence of mollify_fraction=0 (bitwise logs)":
        ["tests/test_trainer.py::test_vanilla_equivalence_bitwise"],
    "checkpoint bitwise roundtrip":
        ["tests/test_config_checkpoint.py::test_bitwise_roundtrip"],
}


@pytest.mark.parametrize("item", list(PROPERTY_TESTS))
def test_c4_property_suite(item):
    res = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                          *PROPERTY_TESTS[item]], cwd=ROOT, capture_output=True, text=True)
    summary = (res.stdout.strip().splitlines() or ["no output"])[-1]
    ok = res.returncode == 0
    report(f"C4 property: {item}", ok, summary)
    assert ok, res.stdout[-3000:]


@pytest.mark.slow
def test_c5_learning_curve_start():
    wins, pairs = 0, []
    for s in SEEDS:
        paired_run("toy-gmm", s)
        base = CACHE / "toy-gmm" / f"seed{s}"
        at = {}
        for variant in ("vanilla", "mollified"):
            rec = [r for r in read_jsonl(base / variant / "metrics.jsonl") if r.iteration == 100]
            at[variant] = rec[0].train_loss
        pairs.append((round(at["vanilla"], 3), round(at["mollified"], 3)))
        wins += at["mollified"] < at["vanilla"]
    ok = wins >= 3
    detail = f"mollified loss lower at iteration 100 on {wins}/4 seeds (need >= 3); (vanilla, mollified) {pairs}"
    report("C5 learning curve", ok, detail)
    assert ok, detail


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s", *sys.argv[1:]]))
