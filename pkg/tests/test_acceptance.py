"""Acceptance criteria 1-7, one test each; every test prints a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` (the lines are shown without -s too).
"""
import time

import numpy as np
import pytest

import properties
from cheshire.cli import cmd_montecarlo
from cheshire.circuit import backward_evolve, forward_evolve
from cheshire.linalg import ANCILLA, FULL, SYSTEM, identity, kron, observable, phase_aligned_distance, tensor
from cheshire.pointer import CouplingConfig, gaussian_pointer, pointer_readout, sample_clicks, \
    weak_limit_extrapolate
from cheshire.scenario import build_entangled_tsv, build_tsv, load_scenario
from cheshire.states import (
    COMPLETE_CAT_TABLE,
    PARTIAL_CAT_TABLE,
    TABLE_COLUMNS,
    H,
    L,
    V,
    complete_cat,
    partial_cat,
    postselected,
    postselected_flipped,
    preselected,
    table_observable,
)
from cheshire.tsvf import contract_ancilla, weak_value
from conftest import random_bra, random_ket, random_operator

SWEEP = (1e-3, 2e-3, 4e-3)
MC_N, MC_G, MC_SEED = 10**6, 0.01, 42


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number} ({title}): {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return emit


def table_entries(table):
    for arm, row in table.items():
        for col, expected in zip(TABLE_COLUMNS, row):
            yield table_observable(col, arm), expected


def table_error(tsv, table):
    return max(abs(weak_value(tsv, observable(name)).value - expected)
               for name, expected in table_entries(table))


def test_criterion_1_partial_cat_table(verdict):
    t0 = time.perf_counter()
    err = max(table_error(partial_cat(), PARTIAL_CAT_TABLE),
              table_error(build_tsv(load_scenario("partial_cat")), PARTIAL_CAT_TABLE))
    dt = time.perf_counter() - t0
    verdict(1, "partial-cat table", err <= 1e-12 and dt < 1, f"max |delta|={err:.2e}, {dt:.3f}s")


def test_criterion_2_complete_cat_table(verdict):
    t0 = time.perf_counter()
    err_hand = table_error(complete_cat(), COMPLETE_CAT_TABLE)
    err_circuit = table_error(build_entangled_tsv(load_scenario("complete_cat")), COMPLETE_CAT_TABLE)
    dt = time.perf_counter() - t0
    ok = max(err_hand, err_circuit) <= 1e-12 and dt < 1
    verdict(2, "complete-cat table", ok,
            f"hand-built |delta|={err_hand:.2e}, circuit |delta|={err_circuit:.2e}, {dt:.3f}s")


def test_criterion_3_circuit_states(verdict):
    c = load_scenario("partial_cat").circuit
    d = [
        phase_aligned_distance(forward_evolve(c, tensor(L, H), "arms"), preselected("H")),
        phase_aligned_distance(forward_evolve(c, tensor(L, V), "arms"), preselected("V")),
        phase_aligned_distance(backward_evolve(c, "D1", "arms"), postselected()),
        phase_aligned_distance(backward_evolve(c, "D2", "arms"), postselected_flipped()),
    ]
    verdict(3, "circuit-state derivation", max(d) <= 1e-12, "distances " + ", ".join(f"{x:.1e}" for x in d))


def test_criterion_4_contraction_equivalence(verdict):
    rng = np.random.default_rng(4)
    worst, pairs = 0.0, 0
    while pairs < 200:
        pre, post = random_ket(rng, FULL), random_bra(rng, FULL)
        if abs(post.amplitudes @ pre.amplitudes) < 0.3 * pre.norm() * post.norm():
            continue
        a = random_operator(rng, SYSTEM)
        full = kron(identity(ANCILLA), a)
        direct = (post.amplitudes @ full.matrix @ pre.amplitudes) / (post.amplitudes @ pre.amplitudes)
        worst = max(worst, abs(weak_value(contract_ancilla(pre, post), a).value - direct))
        pairs += 1
    verdict(4, "contraction equivalence", worst <= 1e-10, f"{pairs} pairs, max |delta|={worst:.2e}")


def test_criterion_5_weak_limit(verdict):
    p0 = gaussian_pointer(1.0)
    t0 = time.perf_counter()
    worst, where = 0.0, ""
    for scn_name, table in (("partial_cat", PARTIAL_CAT_TABLE), ("complete_cat", COMPLETE_CAT_TABLE)):
        scn = load_scenario(scn_name)
        for name, expected in table_entries(table):
            runs = [(g, pointer_readout(scn, scn.probe_operator(name), CouplingConfig(g), p0)) for g in SWEEP]
            err = abs(weak_limit_extrapolate(runs) - expected)
            if err >= worst:
                worst, where = err, f"{scn_name}/{name}"
    dt = time.perf_counter() - t0
    verdict(5, "weak-limit convergence", worst <= 1e-4 and dt < 30,
            f"16 entries, max |delta|={worst:.2e} at {where}, {dt:.2f}s")


def test_criterion_6_monte_carlo(verdict):
    scn = load_scenario("complete_cat")
    p0 = gaussian_pointer(1.0)
    t0 = time.perf_counter()
    worst = 0.0
    for name, expected in table_entries(COMPLETE_CAT_TABLE):
        r = sample_clicks(scn, scn.probe_operator(name), CouplingConfig(MC_G), MC_N, MC_SEED, p0)
        z_re = abs(r.position_estimate - np.real(expected)) / (r.stderr / MC_G)
        z_im = abs(r.momentum_estimate - np.imag(expected)) / (r.stderr_momentum / (2 * MC_G * r.momentum_var0))
        worst = max(worst, z_re, z_im)
    reports = [cmd_montecarlo("complete_cat", "SxR", MC_N, MC_SEED, MC_G).to_json() for _ in range(2)]
    identical = reports[0].encode() == reports[1].encode()
    dt = time.perf_counter() - t0
    verdict(6, "Monte Carlo consistency", worst <= 3 and identical and dt < 60,
            f"max deviation {worst:.2f} stderr, reports identical={identical}, {dt:.2f}s")


def test_criterion_7_property_suites(verdict):
    rng = np.random.default_rng(7)
    results = {name: check(rng, properties.CASES) for name, check in properties.ALL.items()}
    worst = max(results.values())
    detail = f"{len(results)} suites x {properties.CASES} cases, worst {worst:.1e}"
    failing = [n for n, v in results.items() if v > 1e-12]
    verdict(7, "property suites", not failing and properties.CASES >= 1000,
            detail + (f", failing: {failing}" if failing else ""))
