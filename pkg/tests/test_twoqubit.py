import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm
from scipy.stats import unitary_group

from stpulse.design import solve_identity, solve_z_rotation
from stpulse.su2 import SIGMA_I, SIGMA_X, PulseSequence, compose, distance_up_to_phase, rotation
from stpulse.twoqubit import (
    CNOT,
    BASIS_LABELS,
    ChainConfig,
    DomainError,
    FourDotOperator,
    Gate,
    Layer,
    ScheduleOverlap,
    bb1_angles,
    chain_propagator,
    fidelity_two_qubit,
    fidelity_two_qubit_literal,
    first_order_generator,
    gate_error_norm,
    gate_json,
    ideal_ising,
    schedule_parallel,
)

PI = math.pi
ALPHA = 8 * PI + PI / 2


# ---------------------------------------------------------------- propagator


def test_equal_fields_no_exchange_is_diagonal():
    U = chain_propagator([Layer({"12": PulseSequence.from_pairs([(0.0, 3.0)])})], ChainConfig(b=(0.4,) * 4))
    # a uniform field is a multiple of total S_z, which vanishes here
    assert np.allclose(U.matrix, np.eye(6), atol=1e-12)


def test_intra_pair_pulse_acts_as_single_qubit_gate():
    seq = PulseSequence.from_pairs([(1.0, PI / 2), (0.4, 1.3)])
    U = chain_propagator([Layer({"12": seq})])
    t = seq.total_duration
    expected = np.kron(compose(seq), expm(-0.5j * t * SIGMA_X))
    assert distance_up_to_phase(U.computational, expected) < 1e-12
    assert np.max(np.abs(U.matrix[4:, :4])) < 1e-14


@pytest.mark.parametrize("j", [0.3, 2.0, 7.5])
def test_full_turn_link_pulse_does_not_leak(j):
    U = chain_propagator([Layer({"23": PulseSequence.from_pairs([(j, 2 * PI)])})])
    assert U.leakage_population() < 1e-20
    assert U.unitarity_error() < 1e-12


def test_partial_turn_link_pulse_leaks():
    U = chain_propagator([Layer({"23": PulseSequence.from_pairs([(1.0, PI)])})])
    assert U.leakage_population() > 1e-3


def test_adjacent_links_cannot_overlap():
    s = PulseSequence.from_pairs([(1.0, 1.0)])
    with pytest.raises(ScheduleOverlap):
        Layer({"12": s, "23": s})
    with pytest.raises(ScheduleOverlap):
        Layer({"23": s, "34": s})
    Layer({"12": s, "34": s})


def test_noise_batches_and_per_link_modes():
    layer = Layer({"23": PulseSequence.from_pairs([(1.0, 2 * PI)])})
    dh = np.array([0.0, 0.01])
    U = chain_propagator([layer], None, dh, 0.02)
    assert U.matrix.shape == (2, 6, 6)
    assert np.allclose(U.matrix[1], chain_propagator([layer], None, 0.01, 0.02).matrix)
    # per-link detuning errors: only link 23 is active, so only its entry matters
    a = chain_propagator([layer], None, 0.0, np.array([0.5, 0.02, -0.3])).matrix
    b = chain_propagator([layer], None, 0.0, 0.02).matrix
    assert np.allclose(a, b)
    # per-gradient errors equal to a uniform relative error on the linear chain
    c = chain_propagator([layer], None, np.array([0.01, 0.01, 0.01]), 0.0).matrix
    assert np.allclose(c, chain_propagator([layer], None, 0.01, 0.0).matrix)


def test_config_gradients():
    cfg = ChainConfig(b=(1.0, 0.0, -2.0, -2.5))
    assert cfg.gradients == (1.0, 2.0, 0.5) and not cfg.linear
    assert ChainConfig().linear


def test_four_dot_operator_shape():
    with pytest.raises(ValueError):
        FourDotOperator(np.eye(4))
    d = FourDotOperator(np.eye(6)).to_dict()
    assert d["basis"] == list(BASIS_LABELS)


# ---------------------------------------------------------------- fidelity


def test_fidelity_identity_and_full_leakage():
    assert fidelity_two_qubit(np.eye(6), np.eye(4)) == pytest.approx(1.0)
    P = np.zeros((6, 6))
    P[4, 0] = P[5, 1] = P[0, 4] = P[1, 5] = 1
    P[2, 2] = P[3, 3] = 1  # half the computational states leave
    F = fidelity_two_qubit(P, np.eye(4))
    assert F == pytest.approx(fidelity_two_qubit_literal(P, np.eye(4)))
    swap_out = np.zeros((6, 6))
    swap_out[4:, :2] = np.eye(2)
    swap_out[:2, 4:] = np.eye(2)
    swap_out[2:4, 2:4] = 0
    # no population left in the computational block: both terms vanish
    assert fidelity_two_qubit(swap_out, np.eye(4)) == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_fidelity_closed_form_matches_literal(seed):
    U = unitary_group.rvs(6, random_state=seed)
    V = unitary_group.rvs(4, random_state=seed + 1)
    assert fidelity_two_qubit(U, V) == pytest.approx(fidelity_two_qubit_literal(U, V), abs=1e-12)


def test_fidelity_phase_invariant():
    V = unitary_group.rvs(4, random_state=3)
    U = np.eye(6, dtype=complex)
    U[:4, :4] = V
    assert fidelity_two_qubit(np.exp(0.7j) * U, V) == pytest.approx(1.0)


# ---------------------------------------------------------------- link pulse and Ising gates


@pytest.fixture(scope="module")
def link_gate(gate_builder):
    layer, _ = gate_builder.link_block(9 * PI, "C23")
    return Gate([layer], ideal_ising(9 * PI), "C23")


def test_c23_no_leakage_and_ising_phase(link_gate):
    U = link_gate.propagator()
    assert U.leakage_population() < 1e-10
    assert np.max(np.abs(U.matrix[4:, :4])) < 1e-10


def test_c23_first_order_errors(link_gate):
    X = np.kron(SIGMA_X, SIGMA_I)
    Y = np.kron(SIGMA_I, SIGMA_X)
    XX = np.kron(SIGMA_X, SIGMA_X)

    def residue(G, basis):
        comp = G[:4, :4]
        for B in basis:
            comp = comp - np.real(np.trace(B @ comp)) / 4 * B
        return max(np.max(np.abs(comp)), np.max(np.abs(G[4:, :4])))

    # gradient error: only local x terms (echoed out by the Rz(pi) blocks), no leakage coupling
    assert residue(first_order_generator(link_gate, axis="h"), (X, Y)) < 1e-7
    # detuning error: a pure sigma_x sigma_x amplitude error (what BB1 removes)
    assert residue(first_order_generator(link_gate, axis="eps"), (XX,)) < 1e-7


def test_area_18pi_is_two_chained_identities(gate_builder):
    seq = gate_builder.link(18 * PI)
    half = solve_identity(area=9 * PI).sequence
    assert seq.segments == (half + half).segments


@pytest.fixture(scope="module")
def ising(gate_builder):
    return gate_builder.ising(ALPHA)


def test_ising_zero_noise(ising):
    U = ising.propagator()
    assert distance_up_to_phase(U.computational, ideal_ising(ALPHA)) < 1e-8
    assert U.leakage_population() < 1e-10


def test_ising_cancels_gradient_errors(ising):
    assert gate_error_norm(ising, axis="h") < 1e-7


def test_ising_sign_convention(ising):
    U = ising.propagator()
    assert distance_up_to_phase(U.computational, ideal_ising(-ALPHA)) > 0.1


def test_ising_trivial_angle(gate_builder):
    U = gate_builder.ising(12 * PI).propagator()
    assert distance_up_to_phase(U.computational, np.eye(4)) < 1e-8


def test_ising_local_equivalence(gate_builder, ising):
    a = ising.propagator().computational
    b = gate_builder.ising(ALPHA + 4 * PI).propagator().computational
    assert distance_up_to_phase(a, b) < 1e-8


def test_unequal_idle_times_spoil_cancellation(ising):
    # stretch qubit A's half of one Rz(pi) block; qubit B then sits uncorrected for the difference
    layers = list(ising.layers)
    blk = layers[1]
    # 10 pi of free precession is -1 at zero noise but not robust
    pad = solve_identity(duration=10 * PI).sequence
    layers[1] = Layer({"12": blk.ops["12"] + pad, "34": blk.ops["34"]}, "unequal")
    bad = Gate(layers, ising.ideal, "unequal")
    assert distance_up_to_phase(bad.propagator().computational, ising.ideal) < 1e-8
    assert gate_error_norm(bad, axis="h") > 1.0


def test_tilted_zero_angle_equals_ising(gate_builder, ising):
    t = gate_builder.tilted_ising(ALPHA, 0.0)
    assert len(t.layers) == len(ising.layers)
    assert distance_up_to_phase(t.propagator().computational, ising.propagator().computational) < 1e-12


def test_tilted_matches_analytic_product(gate_builder):
    phi = 0.7
    g = gate_builder.tilted_ising(ALPHA, phi)
    RzA = lambda a: np.kron(rotation((0, 0, 1), a), SIGMA_I)  # noqa: E731
    expected = RzA(-phi) @ ideal_ising(ALPHA) @ RzA(phi)
    U = g.propagator()
    assert distance_up_to_phase(U.computational, expected) < 1e-8
    # qubit B idles through corrected identities
    idle_b = g.layers[0].ops["34"]
    assert distance_up_to_phase(compose(idle_b), np.eye(2)) < 1e-8
    assert g.layers[0].ops["12"].total_duration == pytest.approx(idle_b.total_duration, abs=1e-9)


# ---------------------------------------------------------------- BB1


def test_bb1_angles():
    theta1, phi1 = bb1_angles(ALPHA)
    assert theta1 == 9 * PI
    assert phi1 == pytest.approx(math.acos(-17 / 72), abs=1e-12)
    assert phi1 == pytest.approx(1.8092, abs=1e-4)
    with pytest.raises(DomainError):
        bb1_angles(37 * PI)


@pytest.mark.parametrize("first", [False, True])
def test_bb1_cancels_amplitude_error(gate_builder, first):
    g = gate_builder.bb1_ising(ALPHA, correction_first=first)
    U = g.propagator()
    assert distance_up_to_phase(U.computational, ideal_ising(ALPHA)) < 1e-8
    assert U.leakage_population() < 1e-10
    assert gate_error_norm(g, axis="eps") < 1e-7
    assert gate_error_norm(g, axis="h") < 1e-7
    assert g.budget()["composite_pulses"] == 20


# ---------------------------------------------------------------- CNOT


def test_cnot_zero_noise(corrected_cnot):
    U = corrected_cnot.propagator()
    assert distance_up_to_phase(U.computational, CNOT) < 1e-8
    assert U.leakage_population() < 1e-10
    assert U.unitarity_error() < 1e-10


def test_cnot_first_order_flat(corrected_cnot):
    assert gate_error_norm(corrected_cnot, axis="h") < 1e-7
    assert gate_error_norm(corrected_cnot, axis="eps") < 1e-7


def test_cnot_fidelity_oracle(corrected_cnot):
    U = corrected_cnot.propagator(None, 0.01, 0.01)
    assert fidelity_two_qubit(U, CNOT) == pytest.approx(fidelity_two_qubit_literal(U.matrix, CNOT), abs=1e-12)


def test_cnot_block_count(corrected_cnot):
    b = corrected_cnot.budget()
    assert b["composite_pulses"] == 20 and b["link_pulses"] == 8


def test_uncorrected_cnot(naive_builder):
    g = naive_builder.cnot()
    U = g.propagator()
    assert distance_up_to_phase(U.computational, CNOT) < 1e-10
    assert gate_error_norm(g, axis="h") > 1e-2


def test_gate_json(corrected_cnot):
    d = json.loads(gate_json(corrected_cnot))
    assert d["gate"]["basis"] == list(BASIS_LABELS)
    assert np.array(d["gate"]["matrix"]).shape == (6, 6, 2)
    assert len(d["blocks"]) == 20


def test_builder_rejects_nonunit_gradients():
    from stpulse.twoqubit import GateBuilder

    with pytest.raises(ValueError):
        GateBuilder(chain=ChainConfig(b=(0.0, -2.0, -4.0, -6.0)))


# ---------------------------------------------------------------- padding


def hold(t):
    return PulseSequence.from_pairs([(0.0, t)])


def test_parallel_equal_durations_untouched():
    a, b = schedule_parallel(hold(50.0), hold(50.0))
    assert len(a) == len(b) == 1


def test_parallel_pads_shorter_side():
    a, b = schedule_parallel(hold(80.0), hold(110.0))
    assert len(b) == 1 and len(a) > 1
    assert a.total_duration == pytest.approx(110.0, abs=1e-6)
    assert distance_up_to_phase(compose(PulseSequence(a.segments[1:])), np.eye(2)) < 1e-10


def test_parallel_small_gap_raises_common_time():
    from stpulse.design import identity_range

    tmin = identity_range().span("duration")[0]
    a, b = schedule_parallel(hold(80.0), hold(90.0))
    assert a.total_duration == pytest.approx(b.total_duration, abs=1e-6)
    assert b.total_duration - 90.0 >= tmin - 1e-6
    assert a.total_duration - 80.0 >= tmin - 1e-6
