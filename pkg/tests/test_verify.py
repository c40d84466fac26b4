import json

import numpy as np
import pytest

from droopsat.verify import (DEFAULT_SIZES, counterexample_check, flat_run_inputs,
                             random_params, run_verification_suite)
from droopsat.dispatch import augmented_total_power, solve_rho

SMALL = {k: 20 for k in DEFAULT_SIZES}


@pytest.fixture(scope="module")
def small_report():
    return run_verification_suite(seed=3, sizes=SMALL)


def test_small_run_passes(small_report):
    assert small_report["all_passed"]
    for name, suite in small_report["suites"].items():
        assert suite["instances"] == 20 and suite["failed"] == 0, name


def test_report_is_json(small_report):
    text = json.dumps(small_report, sort_keys=True)
    assert json.loads(text)["seed"] == 3


def test_seeded_report_reproducible(small_report):
    assert run_verification_suite(seed=3, sizes=SMALL) == small_report


def test_mutation_is_detected():
    report = run_verification_suite(seed=3, mutation="flip-load-sign",
                                    sizes=dict(SMALL, rho_monotone=200))
    lemma1 = report["suites"]["lemma1_monotone_rho"] if "lemma1_monotone_rho" in report[
        "suites"] else next(v for k, v in report["suites"].items() if k.startswith("rho_monotone"))
    assert lemma1["failed"] > 0 and lemma1["failures"]
    assert not report["all_passed"]


def test_unknown_mutation():
    with pytest.raises(ValueError):
        run_verification_suite(mutation="drop-storage", sizes=SMALL)


def test_flat_run_generator_hits_zero_interval():
    rng = np.random.default_rng(0)
    hits = 0
    for _ in range(50):
        P = random_params(rng)
        u, delta, x, w = flat_run_inputs(rng, P)
        rho = solve_rho(u, delta, x, w, P)[0]
        left = augmented_total_power(u, delta, x, w, rho - 1e-3, P)
        hits += abs(left) <= 1e-9
    assert hits >= 25


def test_counterexample_separates():
    out = counterexample_check()
    assert out["separates"]
