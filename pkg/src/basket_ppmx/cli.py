"""Command-line driver: simulate, analyze, calibrate, compare, print-config."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, digest, dump_config, load_config
from .decision import DecisionSummary, decide
from .domain import O, TT, Catalog, InputError, Patient, eligible_pairs, read_roster
from .predictive import PosteriorPredictive, SubgroupHazards, compute_horizon, query_row
from .scenarios import preset_scenario
from .simulator import (MCMC, SUPERIORITY, RepResult, calibrate, fit, mean_te_error,
                        operating_characteristics, pair_sizes, report_to_str, simulate, stream)

log = logging.getLogger("basket_ppmx")


# -- output helpers ----------------------------------------------------------

def _num(x) -> str:
    if x is None:
        return "NA"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _csv(rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow([_num(v) if not isinstance(v, str) else v for v in r])
    return buf.getvalue()


class Writer:
    """Single writer for every output file; records what it wrote for the manifest."""

    def __init__(self, out: Path):
        self.out = out
        self.files: dict[str, str] = {}
        out.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, text: str) -> None:
        (self.out / name).write_text(text)
        self.files[name] = digest(text)

    def manifest(self, command: str, config_text: str, seed: int, started: float,
                 extra: Optional[dict] = None) -> None:
        man = {
            "command": command,
            "config_digest": digest(config_text),
            "seed": seed,
            "code_version": __version__,
            "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(started)),
            "finished": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
            "outputs": dict(sorted(self.files.items())),
            **(extra or {}),
        }
        (self.out / "manifest.json").write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")


def records_text(results: Sequence[RepResult]) -> str:
    return "".join(json.dumps(r.to_record(), sort_keys=True) + "\n" for r in results)


def read_records(path: Path) -> list[RepResult]:
    out = []
    for line in path.read_text().splitlines():
        if line.strip():
            out.append(RepResult.from_record(json.loads(line)))
    return out


def summary_text(results: Sequence[RepResult], min_size: int) -> str:
    row = operating_characteristics(results, min_size=min_size).row()
    keys = list(row)
    return _csv([keys, [row[k] for k in keys]])


def pr_a_text(results: Sequence[RepResult], catalog: Catalog, min_size: int) -> str:
    """Mutation-by-tumor matrix of reporting frequencies (blank = pair absent)."""
    pr = operating_characteristics(results, min_size=min_size).pr_a
    rows = [["mutation", *catalog.tumors]]
    for m in catalog.aberrations:
        rows.append([m, *[_num(pr[f"{m}:{t}"]) if f"{m}:{t}" in pr else "" for t in catalog.tumors]])
    return _csv(rows)


def allocation_text(results: Sequence[RepResult], min_size: int) -> str:
    oc = operating_characteristics(results, min_size=min_size)
    sizes = {a: float(np.mean([r.sizes[i] for r in results])) for i, a in enumerate(results[0].pairs)}
    return _csv([["pair", "mean_n", "tt_fraction"]] +
                [[a, sizes[a], f] for a, f in oc.tt_fraction.items()])


def te_text(results: Sequence[RepResult]) -> str:
    """One row per (pair, method): mean |TE_hat - TE| over replicates with an estimate."""
    rows = [["pair", "method", "mean_abs_error", "n_reps"]]
    for i, a in enumerate(results[0].pairs):
        for method in ("OURS", "NAIVE", "SEPARATE"):
            vals = [r.te_error[method][i] for r in results if r.te_error[method][i] is not None]
            rows.append([a, method, float(np.mean(vals)) if vals else None, len(vals)])
    return _csv(rows)


def te_summary_text(results: Sequence[RepResult]) -> str:
    """Mean over replicates and pairs, per method."""
    overall = mean_te_error(results)
    return _csv([["method", "mean_abs_error"]] + [[m, overall[m]] for m in ("OURS", "NAIVE", "SEPARATE")])


# -- commands -------------------------------------------------------------------

def _load(args) -> tuple[RunConfig, str]:
    text = Path(args.config).read_text() if args.config else ""
    cfg = load_config(text, args.config or "<defaults>")
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "reps", None) is not None:
        if args.reps < 1:
            raise InputError("--reps must be at least 1")
        cfg = replace(cfg, reps=args.reps)
    if getattr(args, "no_adaptive", False):
        cfg = replace(cfg, design=replace(cfg.design, adaptive=False))
    if getattr(args, "no_censoring", False):
        cfg = replace(cfg, analysis=replace(cfg.analysis, no_censoring=True))
    return cfg, text


def _progress(done: int, total: int) -> None:
    log.info("replicate %d/%d", done, total)


def _run(cfg: RunConfig, threads: int) -> list[RepResult]:
    return simulate(cfg.scenario, cfg.reps, cfg.design, cfg.analysis, cfg.seed,
                    workers=threads, progress=_progress)


def cmd_simulate(args) -> int:
    started = time.time()
    cfg, text = _load(args)
    results = _run(cfg, args.threads)
    w = Writer(Path(args.out))
    ms = cfg.analysis.utility.min_size
    w.write("records.jsonl", records_text(results))
    w.write("summary.csv", summary_text(results, ms))
    w.write("pr_a.csv", pr_a_text(results, cfg.scenario.catalog, ms))
    w.write("allocation.csv", allocation_text(results, ms))
    w.write("te.csv", te_text(results))
    w.write("te_summary.csv", te_summary_text(results))
    w.write("config.yaml", dump_config(cfg))
    w.manifest("simulate", text, cfg.seed, started)
    return 0


def cmd_compare(args) -> int:
    started = time.time()
    cfg, text = _load(args)
    results = _run(cfg, args.threads)
    w = Writer(Path(args.out))
    w.write("records.jsonl", records_text(results))
    w.write("te.csv", te_text(results))
    w.write("te_summary.csv", te_summary_text(results))
    w.write("config.yaml", dump_config(cfg))
    w.manifest("compare", text, cfg.seed, started)
    return 0


def cmd_calibrate(args) -> int:
    started = time.time()
    cfg, text = _load(args)
    cal = cfg.calibration
    cat = cfg.scenario.catalog

    def reps_for(number: int, path: Optional[str]) -> list[RepResult]:
        if path:
            return read_records(Path(path))
        scenario = replace(preset_scenario(number, cat), population=cfg.scenario.population)
        return simulate(scenario, cfg.reps, cfg.design, cfg.analysis, cfg.seed,
                        workers=args.threads, progress=_progress)

    null = reps_for(cal.null_scenario, args.null_records)
    alt = reps_for(cal.alt_scenario, args.alt_records)
    util = cfg.analysis.utility
    res = calibrate(null, alt, cat, util, cal.u0_grid, cal.u1_grid, cal.tie_target, cal.tpr_target)
    w = Writer(Path(args.out))
    w.write("calibration.csv", _csv([["u0", "u1", "TIE", "TPR", "ok"]] +
                                    [[r["u0"], r["u1"], r["TIE"], r["TPR"], str(r["ok"]).lower()]
                                     for r in res.table]))
    chosen = res.utility(util)
    w.write("selected_utility.json", json.dumps(
        {"u0": chosen.u0, "u1": chosen.u1, "alpha": chosen.alpha, "beta": chosen.beta,
         "targets_met": res.met}, indent=2, sort_keys=True) + "\n")
    grid = json.dumps({"u0_grid": list(cal.u0_grid), "u1_grid": list(cal.u1_grid)}, sort_keys=True)
    w.manifest("calibrate", text, cfg.seed, started, {"grid_digest": digest(grid)})
    if not res.met:
        log.warning("no grid point meets both targets; selected the closest one")
    return 0


def cmd_analyze(args) -> int:
    started = time.time()
    cfg, text = _load(args)
    cat = cfg.scenario.catalog
    roster_text = Path(args.roster).read_text()
    patients = read_roster(roster_text, cat)
    observed = [p for p in patients if p.arm is not None and p.outcome is not None]
    if not observed:
        raise InputError("roster has no patient with both an arm and an outcome")
    fitted = [p for p in patients if p.arm is not None]
    an = cfg.analysis
    draws = fit(fitted, cat, an, an.final_mcmc, stream(cfg.seed, 0, MCMC, len(fitted)))
    horizon = compute_horizon([p.outcome.time for p in observed])
    sizes = pair_sizes(fitted, cat)
    pairs = [a for a in cat.all_pairs() if sizes[a] > 0]
    n_a = [sizes[a] for a in pairs]
    lhr = SubgroupHazards(draws, fitted, pairs, cat, horizon).log_hazard_ratios()
    util = an.utility
    summary = DecisionSummary.from_log_hr(lhr, pairs, n_a, util)
    result = decide(summary, util.u0, util.u1)

    rows = []
    for p in patients:
        rows += [query_row(p, TT, cat), query_row(p, O, cat)]
    pp = PosteriorPredictive(draws, np.array(rows))
    rng = stream(cfg.seed, 0, SUPERIORITY)
    pis = [pp.superiority(2 * i, 2 * i + 1, an.n_mc, rng) for i in range(len(patients))]

    w = Writer(Path(args.out))
    q = np.quantile(lhr, [0.025, 0.975], axis=0)
    post = {
        "n_patients": len(patients), "n_observed": len(observed), "horizon": horizon.T,
        "n_draws": int(lhr.shape[0]), "p_h0": summary.p_h0, "p_h1": summary.p_h1,
        "mean_clusters": float(np.mean(draws.J)),
        "pairs": [{"pair": cat.pair_name(a), "n": int(n), "mean_log_hr": float(m),
                   "log_hr_2.5%": float(lo), "log_hr_97.5%": float(hi), "contribution": float(c)}
                  for a, n, m, lo, hi, c in zip(pairs, n_a, summary.mean_log_hr, q[0], q[1],
                                                summary.contributions)],
    }
    w.write("posterior_summary.json", json.dumps(post, indent=2, sort_keys=True) + "\n")
    w.write("ranked_reports.csv", _csv([["rank", "report", "expected_utility"]] +
                                       [[i + 1, report_to_str(r, cat), eu]
                                        for i, (r, eu) in enumerate(result.table)]))
    w.write("report.json", json.dumps({
        "report": report_to_str(result.report, cat), "expected_utility": result.expected_utility,
        "eligible_pairs": [cat.pair_name(a) for a in eligible_pairs(fitted, util.min_size, cat)],
    }, indent=2, sort_keys=True) + "\n")
    w.write("pi.csv", _csv([["id", "pi"]] + [[p.id, x] for p, x in zip(patients, pis)]))
    w.manifest("analyze", text, cfg.seed, started, {"roster_digest": digest(roster_text)})
    return 0


def cmd_print_config(args) -> int:
    cfg, _ = _load(args)
    sys.stdout.write(dump_config(cfg))
    return 0


# -- entry point ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration (defaults when omitted)")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker processes for replicates")
    common.add_argument("--no-adaptive", action="store_true", help="equal randomization throughout")
    common.add_argument("--no-censoring", action="store_true", help="observe every outcome in full")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="basket-ppmx", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, helptext in (("simulate", cmd_simulate, "repeated trial simulation"),
                               ("compare", cmd_compare, "treatment-effect errors of OURS, NAIVE and SEPARATE"),
                               ("calibrate", cmd_calibrate, "grid search of the report payoffs")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--reps", type=int, help="replicates (overrides the config)")
        s.set_defaults(func=fn)
        if name == "calibrate":
            s.add_argument("--null-records", help="reuse simulate records for the null scenario")
            s.add_argument("--alt-records", help="reuse simulate records for the alternative scenario")
    s = sub.add_parser("analyze", parents=[common], help="final analysis of a roster file")
    s.add_argument("roster", help="CSV roster: id, aberrations..., tumor, arm, time, censored")
    s.set_defaults(func=cmd_analyze)
    s = sub.add_parser("print-config", parents=[common], help="print the effective configuration")
    s.set_defaults(func=cmd_print_config)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print("error: " + str(exc), file=sys.stderr)
        return 2
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
