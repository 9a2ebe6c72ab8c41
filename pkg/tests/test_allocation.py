import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from basket_ppmx.allocation import ADAPTIVE, RUN_IN, DesignConfig, allocation_prob, assign_arm, trial_schedule
from basket_ppmx.domain import InputError, TT

D = DesignConfig()


def test_clamp_examples():
    assert allocation_prob(0.05, D) == 0.10
    assert allocation_prob(0.50, D) == 0.50
    assert allocation_prob(0.95, D) == 0.90
    assert allocation_prob(0.1, D) == 0.1 and allocation_prob(0.9, D) == 0.9
    for bad in (-0.1, 1.1):
        with pytest.raises(InputError):
            allocation_prob(bad, D)


@given(st.floats(0, 1), st.floats(0, 1))
def test_clamp_properties(a, b):
    pa, pb = allocation_prob(a, D), allocation_prob(b, D)
    assert D.p0 <= pa <= D.p1
    if D.p0 <= a <= D.p1:
        assert pa == a
    if a <= b:
        assert pa <= pb


def _share(phase, pi, n=100_000, seed=0):
    rng = np.random.default_rng(seed)
    return np.mean([assign_arm(i, phase, D, rng, pi).arm == TT for i in range(n)])


def test_fair_coin_run_in():
    n = 100_000
    assert abs(_share(RUN_IN, None, n) - 0.5) < 3 * math.sqrt(0.25 / n)


def test_adaptive_upper_clamp():
    assert abs(_share(ADAPTIVE, 1.0) - 0.9) < 0.005


def test_assignment_deterministic_and_audited():
    a = [assign_arm(i, RUN_IN, D, np.random.default_rng(3), counter=i) for i in range(5)]
    b = [assign_arm(i, RUN_IN, D, np.random.default_rng(3), counter=i) for i in range(5)]
    assert a == b
    rec = assign_arm(7, ADAPTIVE, D, np.random.default_rng(1), 0.95, counter=7)
    assert rec.prob_tt == 0.9 and rec.pi == 0.95 and rec.counter == 7 and rec.patient_id == 7
    with pytest.raises(InputError):
        assign_arm(0, ADAPTIVE, D, np.random.default_rng(1))
    with pytest.raises(InputError):
        assign_arm(0, RUN_IN, D, np.random.default_rng(1), 0.5)


def test_run_in_independent_of_covariates():
    # the run-in draw sequence depends only on the stream, never on who is enrolled
    rng_a, rng_b = np.random.default_rng(9), np.random.default_rng(9)
    arms_a = [assign_arm(pid, RUN_IN, D, rng_a).arm for pid in range(200)]
    arms_b = [assign_arm(pid, RUN_IN, D, rng_b).arm for pid in np.random.default_rng(1).permutation(200)]
    assert arms_a == arms_b


def test_schedule():
    assert trial_schedule(D) == [100, 150, 200, 250, 300, 350]
    assert trial_schedule(DesignConfig(cohort=300)) == [100]
    assert trial_schedule(DesignConfig(n1=0)) == []


def test_design_invariants():
    with pytest.raises(InputError):
        DesignConfig(p0=0.6, p1=0.5)
    with pytest.raises(InputError):
        DesignConfig(cohort=70)
