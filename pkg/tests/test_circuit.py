import math

import numpy as np
import pytest

import oracles
from cheshire.circuit import (
    Circuit,
    CircuitElement,
    CircuitError,
    ElementKind,
    UnknownDetectorError,
    UnknownMarkerError,
    backward_evolve,
    element_unitary,
    forward_evolve,
    postselection_probability,
    transition_amplitude,
)
from cheshire.linalg import FULL, SYSTEM, BasisLabel, apply, basis_ket, identity, observable, \
    phase_aligned_distance, tensor
from cheshire.scenario import Scenario, build_entangled_tsv, build_tsv, parse_scenario
from cheshire.states import (
    COMPLETE_CAT_TABLE,
    PARTIAL_CAT_TABLE,
    TABLE_COLUMNS,
    H,
    L,
    V,
    complete_cat,
    postselected,
    postselected_flipped,
    preselected,
)
from cheshire.tsvf import SingularWeakValueError, weak_value
from conftest import random_ket
from properties import random_element

BS = CircuitElement(ElementKind.BeamSplitter, ("L", "R"))
HWP_R = CircuitElement(ElementKind.HalfWavePlate, ("R",))

# frozen from oracles.fig1_total / fig2_total (direct Kronecker products)
P_D1_FIG1 = 0.25
P_COINCIDENCE_FIG2 = 0.25


def assert_table(tsv, table):
    for arm, row in table.items():
        for col, expected in zip(TABLE_COLUMNS, row):
            assert abs(weak_value(tsv, observable(f"{col}{arm}")).value - expected) <= 1e-12, (arm, col)


def test_half_wave_plate_flips_in_its_arm():
    u = element_unitary(HWP_R, SYSTEM)
    assert apply(u, tensor(basis_ket(path="R"), H)) == tensor(basis_ket(path="R"), V)
    assert apply(u, tensor(basis_ket(path="R"), V)) == tensor(basis_ket(path="R"), H)
    assert apply(u, tensor(L, H)) == tensor(L, H)
    assert apply(u, tensor(L, V)) == tensor(L, V)


def test_half_wave_plate_is_sigma_x_on_arm():
    u = element_unitary(HWP_R, SYSTEM)
    block = u.matrix[2:, 2:]
    np.testing.assert_array_equal(block, [[0, 1], [1, 0]])


def test_beam_splitter_twice_is_identity():
    u = element_unitary(BS, SYSTEM)
    assert (u @ u).allclose(identity(SYSTEM))


def test_balanced_interferometer_routes_left():
    out = apply(element_unitary(BS, SYSTEM), preselected("H"))
    assert out.allclose(tensor(L, H), 1e-15)


def test_mirror_phase():
    m = CircuitElement(ElementKind.Mirror, ("R",), (("phase", math.pi / 2),))
    out = apply(element_unitary(m, SYSTEM), preselected("H"))
    assert out.amplitude(BasisLabel("R", "H")) == pytest.approx(1j / math.sqrt(2))


def test_pbs_routing():
    u = element_unitary(CircuitElement(ElementKind.PolarizingBeamSplitter, ("L", "R")), SYSTEM)
    assert apply(u, tensor(L, H)) == tensor(L, H)
    assert apply(u, tensor(L, V)) == tensor(basis_ket(path="R"), V)


def test_detector_has_no_unitary():
    with pytest.raises(CircuitError):
        element_unitary(CircuitElement(ElementKind.Detector, ("L",)), SYSTEM)


def test_every_element_unitary(rng):
    for _ in range(300):
        for space in (SYSTEM, FULL):
            assert element_unitary(random_element(rng), space).unitarity_defect() <= 1e-12


def test_total_unitaries_match_oracle(partial_scn, complete_scn):
    np.testing.assert_allclose(partial_scn.circuit.total_unitary().matrix, oracles.fig1_total(), atol=1e-15)
    np.testing.assert_allclose(complete_scn.circuit.total_unitary().matrix, oracles.fig2_total(), atol=1e-15)


def test_forward_preselection(partial_scn):
    c = partial_scn.circuit
    assert phase_aligned_distance(forward_evolve(c, tensor(L, H), "arms"), preselected("H")) <= 1e-12
    assert phase_aligned_distance(forward_evolve(c, tensor(L, V), "arms"), preselected("V")) <= 1e-12


def test_forward_empty_circuit(rng):
    s = random_ket(rng)
    assert forward_evolve(Circuit(SYSTEM), s) == s


def test_backward_postselection(partial_scn):
    c = partial_scn.circuit
    assert phase_aligned_distance(backward_evolve(c, "D1", "arms"), postselected()) <= 1e-12
    assert phase_aligned_distance(backward_evolve(c, "D2", "arms"), postselected_flipped()) <= 1e-12


def test_backward_without_later_stages():
    d = tensor(L, H).dual()
    c = Circuit(SYSTEM, (BS,), (("end", 1),), (("D", d),))
    assert backward_evolve(c, "D", "end") == d


def test_unknown_names(partial_scn):
    c = partial_scn.circuit
    with pytest.raises(UnknownMarkerError):
        forward_evolve(c, tensor(L, H), "nowhere")
    with pytest.raises(UnknownDetectorError):
        backward_evolve(c, "D9", "arms")


def test_postselection_probability_fig1(partial_scn):
    c, inp = partial_scn.circuit, partial_scn.input_state
    assert postselection_probability(c, inp, "D1") == pytest.approx(P_D1_FIG1, abs=1e-12)
    total = sum(postselection_probability(c, inp, d) for d in ("D1", "D2", "D3", "D4"))
    assert total == pytest.approx(1, abs=1e-12)


def test_postselection_consistent_with_overlap(partial_scn):
    assert abs(build_tsv(partial_scn).denominator) ** 2 == pytest.approx(P_D1_FIG1, abs=1e-12)


def test_postselection_probability_fig2(complete_scn):
    p = postselection_probability(complete_scn.circuit, complete_scn.input_state, ("D1", "D2"))
    assert 0 < p < 1
    assert p == pytest.approx(P_COINCIDENCE_FIG2, abs=1e-12)
    ref = oracles.fig2_coincidence_bra() @ oracles.fig2_total() @ oracles.fig2_input()
    assert p == pytest.approx(abs(ref) ** 2, abs=1e-12)


def test_postselection_requires_normalized(partial_scn):
    with pytest.raises(CircuitError):
        postselection_probability(partial_scn.circuit, tensor(L, H) * 2, "D1")


def random_circuit(rng, space):
    n = int(rng.integers(0, 6))
    stages = tuple(random_element(rng) for _ in range(n))
    detectors = tuple((f"D{k}", random_ket(rng, space).normalized().dual()) for k in range(2))
    markers = (("m", int(rng.integers(0, n + 1))),)
    return Circuit(space, stages, markers, detectors)


def test_forward_backward_consistency(rng):
    for _ in range(300):
        space = FULL if rng.random() < 0.5 else SYSTEM
        c = random_circuit(rng, space)
        inp = random_ket(rng, space)
        split = np.dot(backward_evolve(c, "D1", "m").amplitudes, forward_evolve(c, inp, "m").amplitudes)
        assert abs(split - transition_amplitude(c, inp, "D1")) <= 1e-12


def test_gauge_robustness(partial_scn, complete_scn):
    for scn in (partial_scn, complete_scn):
        c = scn.circuit
        name, bra = c.detectors[0]
        rephased = Circuit(c.space, c.stages, c.markers, ((name, bra * np.exp(0.83j)),) + c.detectors[1:])
        other = Scenario(scn.name, rephased, scn.input_state * np.exp(-2.1j), scn.postselect, scn.probes)
        for p in scn.probes:
            a = weak_value(build_tsv(scn), scn.probe_operator(p.observable)).value
            b = weak_value(build_tsv(other), other.probe_operator(p.observable)).value
            assert abs(a - b) <= 1e-12


def test_build_entangled_tsv_table2(complete_scn):
    tsv = build_entangled_tsv(complete_scn)
    assert_table(tsv, COMPLETE_CAT_TABLE)
    assert weak_value(tsv, identity(SYSTEM)).value == pytest.approx(1, abs=1e-12)


def test_build_entangled_tsv_matches_hand_states_termwise(complete_scn):
    built, ref = build_entangled_tsv(complete_scn), complete_cat()
    # order terms by which polarization the ket carries
    def key(t):
        return int(abs(t.ket.amplitude(BasisLabel("L", "V"))) > 0)
    built_terms = sorted(built.terms, key=key)
    ref_terms = sorted(ref.terms, key=key)
    outer = [np.outer(t.ket.amplitudes, t.bra.amplitudes) * t.weight for t in built_terms]
    outer_ref = [np.outer(t.ket.amplitudes, t.bra.amplitudes) * t.weight for t in ref_terms]
    factor = outer[0][0, 0] / outer_ref[0][0, 0]
    for a, b in zip(outer, outer_ref):
        np.testing.assert_allclose(a, factor * b, atol=1e-12)


def test_product_source_gives_partial_cat(complete_scn):
    text = """
space path=L,R pol=H,V ancilla=H,V
input L (x) H (x) V_A
element BeamSplitter L,R
marker arms
element HalfWavePlate R
element BeamSplitter L,R
detector D1&D2 L (x) H (x) V_A
postselect D1 & D2
"""
    tsv = build_entangled_tsv(parse_scenario(text))
    assert len(tsv.terms) == 1
    assert_table(tsv, PARTIAL_CAT_TABLE)


def test_build_entangled_needs_ancilla(partial_scn):
    with pytest.raises(ValueError):
        build_entangled_tsv(partial_scn)


def test_dark_port_is_singular():
    text = """
space path=L,R pol=H,V
input L (x) H
element BeamSplitter L,R
marker arms
element BeamSplitter L,R
detector dark R (x) H
postselect dark
"""
    scn = parse_scenario(text)
    with pytest.raises(SingularWeakValueError):
        weak_value(build_tsv(scn), observable("PiL"))
