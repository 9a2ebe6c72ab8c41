"""Patients, mutation-tumor subgroups and subpopulation reports.

Aberrations and tumor types are referred to by 0-based index into a
:class:`Catalog`; names only matter for I/O and display.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

TT = "TT"
O = "O"
ARMS = (O, TT)

IMPACT_ABERRATIONS = ("FGFR", "BRAF", "PIK3CA", "PTEN", "MET")
IMPACT_TUMORS = ("BRCA", "Ovary", "Lung")


class InputError(ValueError):
    """Raised on malformed inputs (rosters, covariates, configuration)."""


@dataclass(frozen=True)
class Catalog:
    aberrations: tuple[str, ...] = IMPACT_ABERRATIONS
    tumors: tuple[str, ...] = IMPACT_TUMORS

    def __post_init__(self):
        if not self.aberrations or not self.tumors:
            raise InputError("catalog needs at least one aberration and one tumor type")
        if len(set(self.aberrations)) != len(self.aberrations):
            raise InputError("duplicate aberration names")
        if len(set(self.tumors)) != len(self.tumors):
            raise InputError("duplicate tumor names")

    @property
    def q(self) -> int:
        return len(self.aberrations)

    @property
    def n_tumors(self) -> int:
        return len(self.tumors)

    def all_pairs(self) -> list["MutationTumorPair"]:
        return [MutationTumorPair(j, c) for j in range(self.q) for c in range(self.n_tumors)]

    def pair(self, mutation: str, tumor: str) -> "MutationTumorPair":
        try:
            return MutationTumorPair(self.aberrations.index(mutation), self.tumors.index(tumor))
        except ValueError:
            raise InputError(f"unknown pair ({mutation}, {tumor})") from None

    def pair_name(self, pair: "MutationTumorPair") -> str:
        return f"({self.aberrations[pair.mutation]}, {self.tumors[pair.tumor]})"


@dataclass(frozen=True)
class MutationProfile:
    """Tri-state aberration indicators; ``None`` marks a not-recorded entry."""

    entries: tuple[Optional[int], ...]

    def __post_init__(self):
        for e in self.entries:
            if e not in (0, 1, None):
                raise InputError(f"mutation entry must be 0, 1 or NA, got {e!r}")

    @property
    def recorded(self) -> frozenset[int]:
        return frozenset(l for l, e in enumerate(self.entries) if e is not None)

    def __getitem__(self, j: int) -> Optional[int]:
        return self.entries[j]

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def single(cls, q: int, j: int) -> "MutationProfile":
        return cls(tuple(1 if l == j else 0 for l in range(q)))


@dataclass(frozen=True)
class Outcome:
    time: float
    censored: bool = False

    def __post_init__(self):
        if not self.time > 0:
            raise InputError(f"outcome time must be positive, got {self.time}")


@dataclass(frozen=True)
class Patient:
    id: int
    mutations: MutationProfile
    tumor: int
    arm: Optional[str] = None
    outcome: Optional[Outcome] = None

    def __post_init__(self):
        if self.arm not in (None, O, TT):
            raise InputError(f"arm must be O or TT, got {self.arm!r}")
        if self.tumor < 0:
            raise InputError("tumor index must be nonnegative")

    def with_arm(self, arm: str) -> "Patient":
        if self.arm is not None:
            raise ValueError(f"patient {self.id} already assigned to {self.arm}")
        return Patient(self.id, self.mutations, self.tumor, arm, self.outcome)

    def with_outcome(self, outcome: Optional[Outcome]) -> "Patient":
        return Patient(self.id, self.mutations, self.tumor, self.arm, outcome)


class MutationTumorPair(NamedTuple):
    mutation: int
    tumor: int


@dataclass(frozen=True)
class NullReport:
    """A0: no subpopulation and no overall effect."""

    def __str__(self):
        return "A0"


@dataclass(frozen=True)
class OverallReport:
    """A1: an overall treatment effect, no subpopulation."""

    def __str__(self):
        return "A1"


@dataclass(frozen=True)
class PairSet:
    pairs: frozenset[MutationTumorPair] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "pairs", frozenset(MutationTumorPair(*p) for p in self.pairs))
        if not self.pairs:
            raise InputError("a pair-set report must contain at least one pair")

    def sorted_pairs(self) -> list[MutationTumorPair]:
        return sorted(self.pairs)

    def __contains__(self, pair) -> bool:
        return pair in self.pairs

    def __len__(self) -> int:
        return len(self.pairs)

    def __str__(self):
        return "{" + ", ".join(f"({j},{c})" for j, c in self.sorted_pairs()) + "}"


SubpopulationReport = NullReport | OverallReport | PairSet
A0 = NullReport()
A1 = OverallReport()


def report_pairs(report: SubpopulationReport) -> frozenset[MutationTumorPair]:
    return report.pairs if isinstance(report, PairSet) else frozenset()


def pair_membership(patient: Patient, pair: MutationTumorPair) -> bool:
    # NA counts as non-member
    j, c = pair
    return patient.tumor == c and patient.mutations[j] == 1


def subgroup_size(patients: Iterable[Patient], pair: MutationTumorPair) -> int:
    return sum(1 for p in patients if pair_membership(p, pair))


def eligible_pairs(patients: Sequence[Patient], min_size: int,
                   catalog: Optional[Catalog] = None) -> set[MutationTumorPair]:
    if min_size < 1:
        raise InputError("min_size must be at least 1")
    if not patients:
        return set()
    if catalog is None:
        q = max(len(p.mutations) for p in patients)
        n_c = max(p.tumor for p in patients) + 1
        candidates = [MutationTumorPair(j, c) for j in range(q) for c in range(n_c)]
    else:
        candidates = catalog.all_pairs()
    return {a for a in candidates if subgroup_size(patients, a) >= min_size}


# -- roster I/O ------------------------------------------------------------

def _fmt_float(x: float) -> str:
    return repr(float(x))


def write_roster(patients: Sequence[Patient], catalog: Catalog) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", *catalog.aberrations, "tumor", "arm", "time", "censored"])
    for p in patients:
        muts = ["NA" if e is None else str(e) for e in p.mutations.entries]
        arm = p.arm or "NA"
        if p.outcome is None:
            time, cens = "NA", "NA"
        else:
            time, cens = _fmt_float(p.outcome.time), str(int(p.outcome.censored))
        w.writerow([p.id, *muts, catalog.tumors[p.tumor], arm, time, cens])
    return buf.getvalue()


def read_roster(text: str, catalog: Catalog) -> list[Patient]:
    """Parse a delimited roster; all offending rows are reported together."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise InputError("empty roster")
    header = [h.strip() for h in rows[0]]
    expected = ["id", *catalog.aberrations, "tumor", "arm", "time", "censored"]
    if header != expected:
        raise InputError(f"roster header {header} does not match {expected}")
    patients, problems, seen = [], [], set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            patients.append(_parse_row(row, catalog, seen))
        except (InputError, ValueError) as exc:
            problems.append(f"line {lineno}: {exc}")
    if problems:
        raise InputError("invalid roster rows:\n  " + "\n  ".join(problems))
    if not patients:
        raise InputError("roster contains no patients")
    return patients


def _parse_row(row: list[str], catalog: Catalog, seen: set) -> Patient:
    row = [c.strip() for c in row]
    if len(row) != catalog.q + 5:
        raise InputError(f"expected {catalog.q + 5} fields, got {len(row)}")
    pid = int(row[0])
    if pid in seen:
        raise InputError(f"duplicate id {pid}")
    seen.add(pid)
    entries = []
    for v in row[1:1 + catalog.q]:
        if v.upper() == "NA" or v == "":
            entries.append(None)
        elif v in ("0", "1"):
            entries.append(int(v))
        else:
            raise InputError(f"mutation entry {v!r} not in {{0, 1, NA}}")
    tumor_name, arm, time, cens = row[1 + catalog.q:]
    if tumor_name not in catalog.tumors:
        raise InputError(f"unknown tumor {tumor_name!r}")
    arm = None if arm.upper() in ("NA", "") else arm
    if time.upper() in ("NA", ""):
        outcome = None
    else:
        if cens not in ("0", "1"):
            raise InputError(f"censored flag {cens!r} not in {{0, 1}}")
        outcome = Outcome(float(time), cens == "1")
    return Patient(pid, MutationProfile(tuple(entries)), catalog.tumors.index(tumor_name), arm, outcome)
