"""Repeated-trial simulation: allocation, final report, error rates and comparators."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .allocation import ADAPTIVE, RUN_IN, AllocationRecord, DesignConfig, assign_arm, trial_schedule
from .comparators import ComparatorPrior, naive_fit, optimal_arm, separate_fit
from .decision import (DecisionSummary, UtilityConfig, decide, describe_report,
                       true_log_hazard_ratios)
from .domain import (A0, A1, O, TT, Catalog, InputError, MutationProfile, MutationTumorPair,
                     NullReport, OverallReport, PairSet, Outcome, Patient, SubpopulationReport,
                     pair_membership)
from .ppmx import (MCMCConfig, ModelData, PartitionState, PosteriorDraws, default_model,
                   extend_state, mcmc_run)
from .predictive import HorizonConfig, PosteriorPredictive, SubgroupHazards, compute_horizon, query_row
from .scenarios import Scenario

log = logging.getLogger(__name__)

# stream purposes for seed derivation
POPULATION, OUTCOME, ALLOCATION, MCMC, SUPERIORITY, COMPARATOR, TE = range(7)


def stream(seed: int, rep: int, purpose: int, *extra: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, rep, purpose, *extra]))


@dataclass(frozen=True)
class AnalysisConfig:
    interim_mcmc: MCMCConfig = MCMCConfig(iterations=1000, burn_in=200, thin=2)
    final_mcmc: MCMCConfig = MCMCConfig(iterations=4000, burn_in=2000, thin=5)
    M: float = 1.0
    dirichlet_weight: float = 0.25
    arm_weight: Optional[float] = 0.01
    k: float = 0.1
    nu: float = 2.0
    n_mc: int = 4000
    utility: UtilityConfig = UtilityConfig()
    comparator_prior: ComparatorPrior = ComparatorPrior()
    te_draws: int = 400
    no_censoring: bool = False


# -- population and outcomes -----------------------------------------------

def sample_population(scenario: Scenario, rng: np.random.Generator,
                      n_max: Optional[int] = None) -> list[Patient]:
    """Exactly the configured per-pair counts, one targeted aberration each, in random order."""
    if n_max is not None and scenario.n_total != n_max:
        raise InputError(f"population sums to {scenario.n_total}, design expects {n_max}")
    cat = scenario.catalog
    cells = []
    for j in range(cat.q):
        for c in range(cat.n_tumors):
            cells += [(j, c)] * int(scenario.population[j][c])
    order = rng.permutation(len(cells))
    return [Patient(k, MutationProfile.single(cat.q, cells[o][0]), cells[o][1])
            for k, o in enumerate(order)]


def true_outcome(patient: Patient, arm: str, scenario: Scenario, rng: np.random.Generator) -> float:
    return outcome_from_noise(patient, arm, scenario, float(rng.standard_normal()))


def outcome_from_noise(patient: Patient, arm: str, scenario: Scenario, noise: float) -> float:
    return math.exp(scenario.log_mean(patient, arm) + scenario.sigma * noise)


def observe(patients: Sequence[Patient], times: np.ndarray, enroll: np.ndarray, now: float,
            no_censoring: bool) -> list[Patient]:
    """Roster as seen at calendar time ``now``: events, censored times or nothing yet."""
    out = []
    for p, y, t0 in zip(patients, times, enroll):
        if no_censoring:
            out.append(p.with_outcome(Outcome(float(y))))
            continue
        tos = now - t0
        if y <= tos:
            out.append(p.with_outcome(Outcome(float(y))))
        elif tos > 0:
            out.append(p.with_outcome(Outcome(float(tos), censored=True)))
        else:
            out.append(p.with_outcome(None))
    return out


def fit(patients: Sequence[Patient], catalog: Catalog, analysis: AnalysisConfig,
        mcmc: MCMCConfig, rng: np.random.Generator,
        warm: Optional[PartitionState] = None) -> PosteriorDraws:
    """Fit the roster, optionally continuing from a state on its leading patients."""
    data = ModelData.from_patients(patients, catalog)
    model = default_model(data, analysis.M, analysis.dirichlet_weight, analysis.k, analysis.nu,
                          arm_weight=analysis.arm_weight)
    init = extend_state(warm, data) if warm is not None else None
    return mcmc_run(data, mcmc, model, rng, init)


def pair_sizes(patients: Sequence[Patient], catalog: Catalog) -> dict[MutationTumorPair, int]:
    return {a: sum(1 for p in patients if pair_membership(p, a)) for a in catalog.all_pairs()}


# -- reports as plain data ------------------------------------------------

def report_to_str(report: SubpopulationReport, catalog: Catalog) -> str:
    if isinstance(report, NullReport):
        return "A0"
    if isinstance(report, OverallReport):
        return "A1"
    return ";".join(f"{catalog.aberrations[j]}:{catalog.tumors[c]}" for j, c in report.sorted_pairs())


def report_from_str(text: str, catalog: Catalog) -> SubpopulationReport:
    if text == "A0":
        return A0
    if text == "A1":
        return A1
    return PairSet({catalog.pair(*item.split(":")) for item in text.split(";")})


@dataclass
class RepResult:
    scenario: str
    rep: int
    seed: int
    report: str
    true_report: str
    horizon: float
    pairs: list[str]
    sizes: list[int]
    tt_fraction: list[float]
    p_h0: float
    p_h1: float
    contributions: list[float]
    mean_log_hr: list[float]
    true_log_hr: list[float]
    te_error: dict[str, list[Optional[float]]] = field(default_factory=dict)
    allocation: list[dict] = field(default_factory=list)
    log_hr_draws: list[list[float]] = field(default_factory=list)

    def to_record(self) -> dict:
        return asdict(self)

    @classmethod
    def from_record(cls, rec: dict) -> "RepResult":
        return cls(**rec)

    def decision_summary(self, catalog: Catalog, utility: UtilityConfig) -> DecisionSummary:
        """Summary under ``utility``; exact for any tolerances when draws were kept."""
        pairs = [catalog.pair(*s.split(":")) for s in self.pairs]
        if self.log_hr_draws:
            return DecisionSummary.from_log_hr(np.array(self.log_hr_draws), pairs, self.sizes, utility)
        return DecisionSummary(pairs, np.array(self.sizes), self.p_h0, self.p_h1,
                               np.array(self.contributions), np.array(self.mean_log_hr), 0,
                               utility.beta, utility.alpha, utility.min_size)


# -- one trial -------------------------------------------------------------

def run_trial(scenario: Scenario, design: DesignConfig, analysis: AnalysisConfig, seed: int,
              rep: int = 0, keep_audit: bool = False) -> RepResult:
    """Simulate one trial end to end; fully determined by (seed, rep)."""
    cat = scenario.catalog
    patients = sample_population(scenario, stream(seed, rep, POPULATION), design.n_max)
    noise = stream(seed, rep, OUTCOME).standard_normal(len(patients))
    enroll = design.accrual_period * np.arange(len(patients)) / len(patients)
    alloc_rng = stream(seed, rep, ALLOCATION)
    pi_rng = stream(seed, rep, SUPERIORITY)

    refits = set(trial_schedule(design)) if design.adaptive else set()
    assigned: list[Patient] = []
    times = np.empty(len(patients))
    audit: list[AllocationRecord] = []
    pis: dict[int, float] = {}
    warm: Optional[PartitionState] = None
    for k, p in enumerate(patients):
        if k in refits:
            seen = observe(assigned, times[:k], enroll[:k], enroll[k - 1], analysis.no_censoring)
            draws = fit(seen, cat, analysis, analysis.interim_mcmc, stream(seed, rep, MCMC, k), warm)
            warm = draws.final_state
            pis = cohort_superiority(draws, patients[k:k + design.cohort], cat, analysis.n_mc, pi_rng)
        if k < design.n0 or not design.adaptive:
            rec = assign_arm(p.id, RUN_IN, design, alloc_rng, counter=k)
        else:
            rec = assign_arm(p.id, ADAPTIVE, design, alloc_rng, pis[p.id], counter=k)
        audit.append(rec)
        assigned.append(p.with_arm(rec.arm))
        times[k] = outcome_from_noise(p, rec.arm, scenario, noise[k])

    final_time = design.accrual_period + design.follow_up
    final = observe(assigned, times, enroll, final_time, analysis.no_censoring)
    draws = fit(final, cat, analysis, analysis.final_mcmc,
                stream(seed, rep, MCMC, len(patients)), warm)
    horizon = compute_horizon([p.outcome.time for p in final if p.outcome])

    sizes = pair_sizes(final, cat)
    pairs = [a for a in cat.all_pairs() if sizes[a] > 0]
    n_a = [sizes[a] for a in pairs]
    sh = SubgroupHazards(draws, final, pairs, cat, horizon)
    lhr = sh.log_hazard_ratios()
    util = analysis.utility
    summary = DecisionSummary.from_log_hr(lhr, pairs, n_a, util)
    chosen = decide(summary, util.u0, util.u1).report

    true_lhr = true_log_hazard_ratios(scenario, final, pairs, horizon)
    truth = decide(DecisionSummary.from_log_hr(true_lhr, pairs, n_a, util), util.u0, util.u1).report

    tt_frac = [float(np.mean([p.arm == TT for p in final if pair_membership(p, a)])) for a in pairs]
    te = te_metrics(chosen, draws, scenario, pairs, analysis, seed, rep, patients, noise)

    return RepResult(
        scenario=scenario.name, rep=rep, seed=seed,
        report=report_to_str(chosen, cat), true_report=report_to_str(truth, cat),
        horizon=horizon.T,
        pairs=[f"{cat.aberrations[j]}:{cat.tumors[c]}" for j, c in pairs], sizes=n_a,
        tt_fraction=tt_frac, p_h0=summary.p_h0, p_h1=summary.p_h1,
        contributions=[float(x) for x in summary.contributions],
        mean_log_hr=[float(x) for x in summary.mean_log_hr],
        true_log_hr=[float(x) for x in true_lhr[0]], te_error=te,
        allocation=[asdict(r) for r in audit] if keep_audit else [],
        log_hr_draws=lhr.tolist())


def cohort_superiority(draws: PosteriorDraws, cohort: Sequence[Patient], catalog: Catalog,
                       n_mc: int, rng: np.random.Generator) -> dict[int, float]:
    rows = []
    for p in cohort:
        rows += [query_row(p, TT, catalog), query_row(p, O, catalog)]
    pp = PosteriorPredictive(draws, np.array(rows))
    return {p.id: pp.superiority(2 * i, 2 * i + 1, n_mc, rng) for i, p in enumerate(cohort)}


# -- treatment-effect errors ----------------------------------------------

def canonical_patient(pair: MutationTumorPair, catalog: Catalog) -> Patient:
    return Patient(-1, MutationProfile.single(catalog.q, pair.mutation), pair.tumor)


def te_metrics(chosen: SubpopulationReport, draws: PosteriorDraws, scenario: Scenario,
               pairs: Sequence[MutationTumorPair], analysis: AnalysisConfig, seed: int, rep: int,
               patients: Sequence[Patient], noise: np.ndarray) -> dict[str, list[Optional[float]]]:
    """|estimated - true| expected PFS under each design's chosen arm, per pair.

    Estimates are posterior medians of the conditional mean PFS, the Bayes
    point estimate under the absolute-error loss being reported.

    OURS treats reported pairs with TT and everyone else with O. NAIVE and
    SEPARATE analyse an equally randomized trial on the same patients and
    outcome noise, choosing the arm with larger predictive mean.
    """
    cat = scenario.catalog
    chosen_pairs = chosen.pairs if isinstance(chosen, PairSet) else frozenset()
    overall = isinstance(chosen, OverallReport)
    rows, arms = [], []
    for a in pairs:
        arm = TT if (overall or a in chosen_pairs) else O
        arms.append(arm)
        rows.append(query_row(canonical_patient(a, cat), arm, cat))
    # posterior median over draws: the mean of exp(mu + s2/2) does not exist
    est = np.median(PosteriorPredictive(draws, np.array(rows)).mean_time(), axis=0)
    ours = [abs(float(e) - scenario.mean_time(canonical_patient(a, cat), arm))
            for a, arm, e in zip(pairs, arms, est)]

    rng = stream(seed, rep, COMPARATOR)
    equal = []
    for k, p in enumerate(patients):
        arm = TT if rng.random() < 0.5 else O
        equal.append(p.with_arm(arm).with_outcome(Outcome(outcome_from_noise(p, arm, scenario, noise[k]))))
    te_rng = stream(seed, rep, TE)
    prior = analysis.comparator_prior
    arm_n, mean_n = optimal_arm(naive_fit(equal, prior), te_rng, analysis.te_draws)
    naive = [abs(mean_n - scenario.mean_time(canonical_patient(a, cat), arm_n)) for a in pairs]

    sep_fit = separate_fit(equal, cat.q, prior)
    by_mut = {}
    for j, f in sep_fit.items():
        by_mut[j] = optimal_arm(f, te_rng, analysis.te_draws) if f is not None else None
    separate = []
    for a in pairs:
        res = by_mut[a.mutation]
        if res is None:
            separate.append(None)
        else:
            separate.append(abs(res[1] - scenario.mean_time(canonical_patient(a, cat), res[0])))
    return {"OURS": ours, "NAIVE": naive, "SEPARATE": separate}


# -- many trials -----------------------------------------------------------

def _run_one(args):
    scenario, design, analysis, seed, rep = args
    return run_trial(scenario, design, analysis, seed, rep)


def simulate(scenario: Scenario, n_reps: int, design: DesignConfig, analysis: AnalysisConfig,
             seed: int, workers: int = 1, progress=None) -> list[RepResult]:
    """Replicates keyed by (seed, rep); output order is replicate order for any worker count."""
    if n_reps < 1:
        raise InputError("n_reps must be at least 1")
    jobs = [(scenario, design, analysis, seed, r) for r in range(n_reps)]
    if workers <= 1:
        out = []
        for j in jobs:
            out.append(_run_one(j))
            if progress:
                progress(len(out), n_reps)
        return out
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_run_one, jobs))


NA = None


@dataclass
class OperatingChars:
    scenario: str
    n_reps: int
    TIE: Optional[float]
    TSR: Optional[float]
    TPR: Optional[float]
    FSR: Optional[float]
    FNR: Optional[float]
    FPR: Optional[float]
    pr_a: dict[str, float]
    tt_fraction: dict[str, float]

    RATES = ("TIE", "TSR", "TPR", "FSR", "FNR", "FPR")

    def row(self) -> dict:
        return {"scenario": self.scenario, "n_reps": self.n_reps,
                **{r: getattr(self, r) for r in self.RATES}}


def operating_characteristics(results: Sequence[RepResult], reports: Optional[Sequence[str]] = None,
                              min_size: int = 5) -> OperatingChars:
    """Error rates over replicates.

    ``reports`` overrides the stored reports (used when re-deciding under a
    different utility). TIE applies when the true report is A0, TPR when it
    is A1, and TSR/FSR/FNR/FPR when it is a pair set.
    """
    if not results:
        raise InputError("no replicates")
    reports = list(reports) if reports is not None else [r.report for r in results]
    n = len(results)
    all_pairs = results[0].pairs
    counts = {a: 0 for a in all_pairs}
    for rep in reports:
        if rep not in ("A0", "A1"):
            for a in rep.split(";"):
                counts[a] += 1
    pr_a = {a: counts[a] / n for a in all_pairs}
    frac = {a: float(np.mean([r.tt_fraction[i] for r in results])) for i, a in enumerate(all_pairs)}

    tie = tsr = tpr = fsr = fnr = fpr = NA
    kinds = {r.true_report for r in results}
    if kinds == {"A0"}:
        tie = sum(rep != "A0" for rep in reports) / n
    elif kinds == {"A1"}:
        tpr = sum(rep == "A1" for rep in reports) / n
    elif not kinds & {"A0", "A1"}:
        hit = tot = fhit = ftot = 0
        for r, rep in zip(results, reports):
            truth = set(r.true_report.split(";"))
            chosen = set() if rep in ("A0", "A1") else set(rep.split(";"))
            eligible = {a for a, s in zip(r.pairs, r.sizes) if s >= min_size}
            hit += len(truth & chosen)
            tot += len(truth)
            others = eligible - truth
            fhit += len(others & chosen)
            ftot += len(others)
        tsr = hit / tot
        fsr = fhit / ftot if ftot else NA
        fnr = sum(rep == "A0" for rep in reports) / n
        fpr = sum(rep == "A1" for rep in reports) / n
    else:
        log.warning("true report varies in kind across replicates; rates left not-applicable")
    return OperatingChars(results[0].scenario, n, tie, tsr, tpr, fsr, fnr, fpr, pr_a, frac)


def redecide(results: Sequence[RepResult], catalog: Catalog, utility: UtilityConfig,
             u0: float, u1: float) -> list[str]:
    """Reports each replicate would make under payoffs (u0, u1), everything else fixed."""
    return [report_to_str(decide(r.decision_summary(catalog, utility), u0, u1).report, catalog)
            for r in results]


def mean_te_error(results: Sequence[RepResult]) -> dict[str, float]:
    """Mean over replicates and pairs of |TE_hat - TE| per design (inestimable cells skipped)."""
    out = {}
    for method in ("OURS", "NAIVE", "SEPARATE"):
        vals = [v for r in results for v in r.te_error.get(method, []) if v is not None]
        out[method] = float(np.mean(vals)) if vals else float("nan")
    return out


@dataclass
class CalibrationResult:
    u0: float
    u1: float
    met: bool
    table: list[dict]

    def utility(self, base: UtilityConfig) -> UtilityConfig:
        return replace(base, u0=self.u0, u1=self.u1)


def calibrate(null_results: Sequence[RepResult], alt_results: Sequence[RepResult], catalog: Catalog,
              utility: UtilityConfig, u0_grid: Iterable[float], u1_grid: Iterable[float],
              tie_target: float = 0.05, tpr_target: float = 0.90) -> CalibrationResult:
    """Grid search over (u0, u1) at fixed alpha, beta.

    Takes the smallest u0 meeting the TIE target (for some u1), then the
    smallest u1 meeting the TPR target at that u0. Replicates are simulated
    once; only the final decision is recomputed per grid point.
    """
    u0_grid = sorted(set(float(u) for u in u0_grid))
    u1_grid = sorted(set(float(u) for u in u1_grid))
    if not u0_grid or not u1_grid:
        raise InputError("calibration grids must be nonempty")
    table = []
    for u0 in u0_grid:
        for u1 in u1_grid:
            tie = operating_characteristics(null_results, redecide(null_results, catalog, utility, u0, u1),
                                            utility.min_size).TIE
            tpr = operating_characteristics(alt_results, redecide(alt_results, catalog, utility, u0, u1),
                                            utility.min_size).TPR
            table.append({"u0": u0, "u1": u1, "TIE": tie, "TPR": tpr,
                          "ok": tie is not None and tpr is not None and tie <= tie_target and tpr >= tpr_target})
    feasible = [r for r in table if r["ok"]]
    if feasible:
        u0 = min(r["u0"] for r in feasible)
        u1 = min(r["u1"] for r in feasible if r["u0"] == u0)
        return CalibrationResult(u0, u1, True, table)
    def shortfall(r):
        return max(0.0, (r["TIE"] or 0.0) - tie_target) + max(0.0, tpr_target - (r["TPR"] or 0.0))
    best = min(table, key=lambda r: (shortfall(r), r["u0"], r["u1"]))
    log.warning("no grid point meets both targets; returning the closest one")
    return CalibrationResult(best["u0"], best["u1"], False, table)
