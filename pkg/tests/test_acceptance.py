"""Acceptance criteria: operating characteristics over 100 replicates per scenario.

Replicates are expensive (minutes per scenario), so records are cached under
``.cache/acceptance`` keyed by the run configuration and a digest of the
package source; any code change forces fresh simulations. Set
``BASKET_THREADS`` to fan replicates out over several processes.

Each criterion prints one PASS/FAIL line, collected in the terminal summary.
"""

import hashlib
import json
import os
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path

import pytest

import basket_ppmx
from basket_ppmx.allocation import DesignConfig
from basket_ppmx.cli import read_records, records_text
from basket_ppmx.scenarios import preset_scenario
from basket_ppmx.simulator import AnalysisConfig, mean_te_error, operating_characteristics, simulate

ROOT = Path(__file__).resolve().parent.parent
CACHE = Path(os.environ.get("BASKET_ACCEPTANCE_CACHE", ROOT / ".cache" / "acceptance"))
SEED = 2024
REPS = 100
TOL = 1e-9  # float slack on interval ends

ANALYSIS = AnalysisConfig(no_censoring=True)
DESIGN = DesignConfig()

pytestmark = pytest.mark.acceptance

RESULTS: list[str] = []


def _source_digest() -> str:
    h = hashlib.sha256()
    pkg = Path(basket_ppmx.__file__).parent
    for p in sorted(pkg.glob("*.py")):
        if p.name in ("cli.py", "config.py"):
            continue
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def run(number: int, adaptive: bool = True):
    scenario = preset_scenario(number)
    design = replace(DESIGN, adaptive=adaptive)
    key = hashlib.sha256(repr((scenario, design, ANALYSIS, SEED, REPS, _source_digest())).encode()).hexdigest()[:16]
    path = CACHE / f"scenario{number}{'' if adaptive else '_noar'}_{key}.jsonl"
    if path.exists():
        return read_records(path)
    workers = int(os.environ.get("BASKET_THREADS", "1"))
    results = simulate(scenario, REPS, design, ANALYSIS, SEED, workers=workers)
    CACHE.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(records_text(results))
    tmp.rename(path)
    return results


def within(x, target, tol):
    return x is not None and abs(x - target) <= tol + TOL


def record(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def fmt(x):
    return "NA" if x is None else f"{x:.3f}"


def test_criterion_1_null_type_i_error():
    oc = operating_characteristics(run(1))
    record(1, within(oc.TIE, 0.05, 0.05), f"scenario 1 TIE={fmt(oc.TIE)} (target 0.05 +- 0.05)")


def test_criterion_2_overall_power():
    oc = operating_characteristics(run(2))
    record(2, within(oc.TPR, 0.90, 0.07), f"scenario 2 TPR={fmt(oc.TPR)} (target 0.90 +- 0.07)")


def test_criterion_3_subgroup_selection():
    oc = operating_characteristics(run(3))
    checks = {
        "TSR": within(oc.TSR, 0.87, 0.10),
        "FSR": oc.FSR is not None and oc.FSR <= 0.10 + TOL,
        "FNR": within(oc.FNR, 0.10, 0.08),
        "FPR": oc.FPR is not None and oc.FPR <= 0.02 + TOL,
    }
    record(3, all(checks.values()),
           f"scenario 3 TSR={fmt(oc.TSR)} (0.87 +- 0.10) FSR={fmt(oc.FSR)} (<= 0.10) "
           f"FNR={fmt(oc.FNR)} (0.10 +- 0.08) FPR={fmt(oc.FPR)} (<= 0.02)")


def test_criterion_4_without_adaptive_randomization():
    ar = operating_characteristics(run(3))
    eq = operating_characteristics(run(3, adaptive=False))
    ok = abs(eq.TSR - ar.TSR) <= 0.05 + TOL and eq.FNR >= ar.FNR - 0.05 - TOL
    record(4, ok, f"scenario 3 TSR {fmt(eq.TSR)} vs adaptive {fmt(ar.TSR)} (within 0.05); "
                  f"FNR {fmt(eq.FNR)} vs adaptive {fmt(ar.FNR)} (>= adaptive - 0.05)")


def test_criterion_5_scenario3_allocation():
    results = run(3)
    frac = operating_characteristics(results).tt_fraction
    sizes = dict(zip(results[0].pairs, results[0].sizes))
    big_null = [a for a, n in sizes.items() if n >= 50 and a != "BRAF:Lung"]
    ok = within(frac["BRAF:Lung"], 0.68, 0.08) and all(within(frac[a], 0.5, 0.10) for a in big_null)
    others = " ".join(f"{a}={frac[a]:.3f}" for a in big_null)
    record(5, ok, f"BRAF:Lung={frac['BRAF:Lung']:.3f} (0.68 +- 0.08); no-effect n>=50: {others} (0.5 +- 0.10)")


def test_criterion_6_scenario4_allocation():
    frac = operating_characteristics(run(4)).tt_fraction
    targets = {"PIK3CA:BRCA": (0.70, 0.08), "BRAF:Lung": (0.60, 0.08), "PTEN:Lung": (0.51, 0.10)}
    ok = all(within(frac[a], t, tol) for a, (t, tol) in targets.items())
    record(6, ok, " ".join(f"{a}={frac[a]:.3f} ({t} +- {tol})" for a, (t, tol) in targets.items()))


def test_criterion_7_comparator_ordering():
    parts, ok = [], True
    for number in (3, 4, 5):
        te = mean_te_error(run(number))
        ok &= te["OURS"] <= te["NAIVE"]
        parts.append(f"s{number} OURS={te['OURS']:.4f} <= NAIVE={te['NAIVE']:.4f}")
    te = mean_te_error(run(6))
    ok &= te["SEPARATE"] <= te["OURS"]
    parts.append(f"s6 SEPARATE={te['SEPARATE']:.4f} <= OURS={te['OURS']:.4f}")
    record(7, ok, "; ".join(parts))


PROPERTY_SUITES = {
    "a": ["tests/test_similarity.py"],
    "b": ["tests/test_ppmx.py"],
    "c": ["tests/test_decision.py"],
    "d": ["tests/test_predictive.py"],
    "e": ["tests/test_allocation.py"],
    "f": ["tests/test_simulator.py", "tests/test_cli.py"],
}


def test_criterion_8_property_suites():
    files = [f for fs in PROPERTY_SUITES.values() for f in fs]
    t0 = time.time()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *files],
                          cwd=ROOT, capture_output=True, text=True, timeout=1800)
    elapsed = time.time() - t0
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    ok = proc.returncode == 0 and elapsed <= 600
    record(8, ok, f"suites a-f: {tail} in {elapsed:.0f}s (<= 600s)")
