import pytest
from hypothesis import given, strategies as st

from basket_ppmx.domain import (A0, A1, O, TT, Catalog, InputError, MutationProfile, MutationTumorPair,
                                Outcome, PairSet, Patient, eligible_pairs, pair_membership,
                                read_roster, subgroup_size, write_roster)
from basket_ppmx.scenarios import IMPACT_POPULATION
from basket_ppmx.simulator import sample_population
from basket_ppmx.scenarios import preset_scenario

import numpy as np

CAT = Catalog()
BRAF_LUNG = CAT.pair("BRAF", "Lung")


def patient(braf, tumor="Lung", pid=0):
    entries = [0] * CAT.q
    entries[CAT.aberrations.index("BRAF")] = braf
    return Patient(pid, MutationProfile(tuple(entries)), CAT.tumors.index(tumor))


def table1_population():
    return sample_population(preset_scenario(1), np.random.default_rng(0), 400)


def test_membership_examples():
    assert pair_membership(patient(1), BRAF_LUNG)
    assert not pair_membership(patient(0), BRAF_LUNG)
    assert not pair_membership(patient(None), BRAF_LUNG)
    assert not pair_membership(patient(1, "BRCA"), BRAF_LUNG)


def test_subgroup_sizes_table1():
    pop = table1_population()
    assert subgroup_size([], BRAF_LUNG) == 0
    assert subgroup_size(pop, CAT.pair("PIK3CA", "BRCA")) == 50
    assert subgroup_size(pop, CAT.pair("PTEN", "Lung")) == 5
    assert subgroup_size(pop, CAT.pair("BRAF", "Ovary")) == 100


def test_eligible_pairs_table1():
    pop = table1_population()
    assert eligible_pairs(pop, 5, CAT) == set(CAT.all_pairs())
    expected6 = {MutationTumorPair(j, c) for j in range(5) for c in range(3) if IMPACT_POPULATION[j][c] >= 6}
    got6 = eligible_pairs(pop, 6, CAT)
    assert got6 == expected6 and len(got6) == 12
    assert eligible_pairs([], 5) == set()
    with pytest.raises(InputError):
        eligible_pairs(pop, 0)


def test_eligible_with_six_matches_direct_scan():
    # The three size-5 cells are FGFR-Lung, PIK3CA-Lung and PTEN-Lung.
    pop = table1_population()
    missing = set(CAT.all_pairs()) - eligible_pairs(pop, 6, CAT)
    assert missing == {CAT.pair("FGFR", "Lung"), CAT.pair("PIK3CA", "Lung"), CAT.pair("PTEN", "Lung")}


def test_profile_and_patient_invariants():
    with pytest.raises(InputError):
        MutationProfile((0, 2))
    assert MutationProfile((1, None, 0)).recorded == frozenset({0, 2})
    with pytest.raises(InputError):
        Outcome(0.0)
    p = patient(1).with_arm(TT)
    with pytest.raises(ValueError):
        p.with_arm(O)


def test_reports():
    with pytest.raises(InputError):
        PairSet(frozenset())
    s = PairSet({BRAF_LUNG, BRAF_LUNG})
    assert len(s) == 1 and BRAF_LUNG in s
    assert str(A0) != str(A1)


profiles = st.lists(st.sampled_from([0, 1, None]), min_size=CAT.q, max_size=CAT.q)
rosters = st.lists(st.tuples(profiles, st.integers(0, CAT.n_tumors - 1)), max_size=40)


@given(rosters)
def test_tumor_sum_equals_mutation_count(rows):
    pats = [Patient(i, MutationProfile(tuple(m)), c) for i, (m, c) in enumerate(rows)]
    for j in range(CAT.q):
        total = sum(subgroup_size(pats, MutationTumorPair(j, c)) for c in range(CAT.n_tumors))
        assert total == sum(1 for p in pats if p.mutations[j] == 1)


@given(rosters, st.integers(1, 10), st.integers(1, 10))
def test_eligible_monotone(rows, a, b):
    pats = [Patient(i, MutationProfile(tuple(m)), c) for i, (m, c) in enumerate(rows)]
    lo, hi = min(a, b), max(a, b)
    assert eligible_pairs(pats, hi, CAT) <= eligible_pairs(pats, lo, CAT)


@given(rosters, st.data())
def test_roster_roundtrip(rows, data):
    pats = []
    for i, (m, c) in enumerate(rows):
        arm = data.draw(st.sampled_from([None, O, TT]))
        out = data.draw(st.one_of(st.none(), st.builds(Outcome, st.floats(1e-3, 1e3), st.booleans())))
        pats.append(Patient(i, MutationProfile(tuple(m)), c, arm, out))
    if not pats:
        return
    assert read_roster(write_roster(pats, CAT), CAT) == pats


def test_roster_errors_list_all_rows():
    text = write_roster([patient(1, pid=0), patient(0, pid=1)], CAT)
    lines = text.splitlines()
    lines[1] = lines[1].replace("Lung", "Colon")
    lines[2] = lines[2].replace(",0,", ",7,", 1)
    with pytest.raises(InputError) as err:
        read_roster("\n".join(lines), CAT)
    assert "line 2" in str(err.value) and "line 3" in str(err.value)
    with pytest.raises(InputError):
        read_roster("", CAT)
