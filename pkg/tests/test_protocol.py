import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import random_density, random_pure
from qgt import protocol
from qgt.budget import ErrorBudget, budget_fidelity
from qgt.protocol import (
    DriftProfile,
    NoiseConfig,
    build_schedule,
    coherence_error,
    crosses_cut,
    induced_channel_outputs,
    induced_choi,
    run_branching,
    sample_run,
    sample_runs,
)
from qgt.qlinalg import CNOT, X, Z, check_choi, entanglement_fidelity, ket, projector
from qgt.tomography import design_standard

seeds = st.integers(0, 2**32 - 1)
probs = st.floats(0.0, 1.0)


def _op(single, qubit, n=4):
    mats = [np.eye(2)] * n
    mats[qubit] = single
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def _cnot(control, target, n=4):
    p0, p1 = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
    return _op(p0, control, n) + _op(p1, control, n) @ _op(X, target, n)


def _oracle_channel(rho_in, depol_bell):
    """Ideal-gate teleported CNOT on a 4-qubit register (B1, M1, M2, B2), written out by hand."""
    phi = (ket(0, 0) + ket(1, 1)) / math.sqrt(2)
    pair = (1 - depol_bell) * projector(phi) + depol_bell * np.eye(4) / 4
    full = np.einsum("adeh,bcfg->abcdefgh", rho_in.reshape(2, 2, 2, 2), pair.reshape(2, 2, 2, 2)).reshape(16, 16)
    h_like = np.array([[1, 1], [-1, 1]]) / math.sqrt(2)  # R(pi/2, -pi/2)
    c1, c2 = _cnot(0, 1), _cnot(2, 3)
    full = c1 @ full @ c1.T
    out = np.zeros((4, 4), dtype=complex)
    for m1 in (0, 1):
        p = _op(np.diag([1.0 - m1, m1]), 1)
        s1 = p @ full @ p
        if m1:
            s1 = _op(X, 2) @ s1 @ _op(X, 2)
        s1 = c2 @ s1 @ c2.T
        s1 = _op(h_like, 2) @ s1 @ _op(h_like, 2).T
        for m2 in (0, 1):
            q = _op(np.diag([1.0 - m2, m2]), 2)
            s2 = q @ s1 @ q
            if m2:
                s2 = _op(Z, 0) @ s2 @ _op(Z, 0)
            t = s2.reshape((2,) * 8)
            out += np.einsum("abcdebch->adeh", t).reshape(4, 4)
    return out


# ---------------------------------------------------------------- noiseless correctness
def test_noiseless_branches_on_ground_state():
    branches = run_branching(projector(ket(0, 0)))
    assert len(branches) == 4
    for p, trace in branches:
        assert abs(p - 0.25) < 1e-10
        assert np.abs(trace.final_state - projector(ket(0, 0))).max() < 1e-10


def test_noiseless_matches_cnot_on_tomography_inputs():
    for rho in design_standard().input_states():
        avg = sum(p * tr.final_state for p, tr in run_branching(rho))
        assert np.abs(avg - CNOT @ rho @ CNOT.T).max() < 1e-10


@given(seeds, st.booleans())
def test_noiseless_matches_cnot_on_random_inputs(seed, product):
    rng = np.random.default_rng(seed)
    psi = np.kron(random_pure(2, rng), random_pure(2, rng)) if product else random_pure(4, rng)
    rho = projector(psi)
    branches = run_branching(rho)
    assert max(abs(p - 0.25) for p, _ in branches) < 1e-10
    avg = sum(p * tr.final_state for p, tr in branches)
    assert np.abs(avg - CNOT @ rho @ CNOT.T).max() < 1e-9


@pytest.mark.parametrize("eps", [0.0, 0.3, 1.0])
def test_depolarized_resource_matches_hand_oracle(eps):
    noise = NoiseConfig(depol_bell=eps)
    for rho in design_standard().input_states()[::3]:
        avg = sum(p * tr.final_state for p, tr in run_branching(rho, noise))
        assert np.abs(avg - _oracle_channel(rho, eps)).max() < 1e-10
    basis = np.eye(16).reshape(16, 4, 4)
    oracle_outs = np.array([_oracle_channel(e, eps) for e in basis])
    chi_oracle = sum(np.kron(e, o) for e, o in zip(basis, oracle_outs)) / 4
    assert abs(entanglement_fidelity(induced_choi(noise), CNOT) - entanglement_fidelity(chi_oracle, CNOT)) < 1e-10


def test_induced_choi_noiseless():
    assert abs(entanglement_fidelity(induced_choi(), CNOT) - 1) < 1e-9


def test_depol_bell_sweep_is_monotone():
    f = [entanglement_fidelity(induced_choi(NoiseConfig(depol_bell=e)), CNOT) for e in (0, 0.05, 0.1, 0.2)]
    assert all(a > b for a, b in zip(f, f[1:]))


def test_table1_noise_agrees_with_budget_model():
    f_protocol = entanglement_fidelity(induced_choi(NoiseConfig.table1()), CNOT)
    assert abs(f_protocol - budget_fidelity(ErrorBudget.table1())) < 0.01
    check_choi(induced_choi(NoiseConfig.table1()))


# ---------------------------------------------------------------- structure
def test_locc_after_resource_distribution():
    steps = build_schedule(NoiseConfig.table1())
    first_local = next(i for i, s in enumerate(steps) if s.node != "shared")
    assert all(s.node == "shared" for s in steps[:first_local])
    assert all(s.qubits == (protocol.M1, protocol.M2) for s in steps[:first_local])
    for s in steps[first_local:]:
        assert s.node in protocol.NODES
        assert not crosses_cut(s), s.label
        owned = protocol.NODES[s.node]
        assert all(q in owned for q in s.qubits), s.label


def test_exactly_two_messages_in_opposite_directions():
    _, trace = run_branching(projector(ket(0, 1)))[3]
    assert trace.messages == (("Alice", "Bob", 1), ("Bob", "Alice", 1))
    sends = [s for s in build_schedule() if s.kind == "send"]
    assert [(s.node, s.receiver, s.bit) for s in sends] == [("Alice", "Bob", "m1"), ("Bob", "Alice", "m2")]


def test_corrections_follow_outcomes():
    for _, tr in run_branching(projector(ket(1, 0)), NoiseConfig.table1()):
        assert ("R(pi,0) on M2" in tr.corrections_applied) == (tr.m1_outcome == 1)
        assert ("R_Z(pi) on B1" in tr.corrections_applied) == (tr.m2_outcome == 1)


@given(seeds)
def test_sampled_traces_satisfy_contract(seed):
    rho = random_density(4, np.random.default_rng(seed))
    for tr in sample_runs(rho, NoiseConfig.table1(), shots=20, seed=seed):
        assert ("R(pi,0) on M2" in tr.corrections_applied) == (tr.m1_outcome == 1)
        assert ("R_Z(pi) on B1" in tr.corrections_applied) == (tr.m2_outcome == 1)
        assert len(tr.messages) == 2


# ---------------------------------------------------------------- noise channels
noise_configs = st.builds(
    NoiseConfig,
    depol_bell=probs,
    depol_cnot1=probs,
    depol_cnot2=probs,
    coherence_time_ms=st.floats(1.0, 1000.0),
    stray_m2=probs,
    stray_b1=probs,
    readout_p=st.fixed_dictionaries({"M1": st.floats(0, 0.5), "M2": st.floats(0, 0.5)}),
    spam_b=probs,
    spam_m=probs,
    coherence_depol=probs,
)


@given(noise_configs, seeds)
def test_noise_preserves_trace(noise, seed):
    rho = random_density(4, np.random.default_rng(seed))
    branches = run_branching(rho, noise)
    assert abs(sum(p for p, _ in branches) - 1) < 1e-10
    g = np.random.default_rng(seed).normal(size=(4, 4))
    out = induced_channel_outputs(g[None], noise)[0]
    assert abs(np.trace(out) - np.trace(g)) < 1e-10


def test_noise_config_validation_and_json():
    with pytest.raises(ValueError):
        NoiseConfig(depol_bell=1.5)
    with pytest.raises(ValueError):
        NoiseConfig(coherence_time_ms=0)
    with pytest.raises(ValueError):
        NoiseConfig(readout_p={"X9": 0.1})
    cfg = NoiseConfig.table1(drift=DriftProfile.scaled(0.04))
    assert NoiseConfig.from_json(cfg.to_json()) == cfg
    assert NoiseConfig.from_json(NoiseConfig().to_json()) == NoiseConfig()


def test_drift_profile_bounds():
    with pytest.raises(ValueError):
        DriftProfile(max_fraction=0.01, pattern=((0, 0), (1, 0.02)))
    prof = DriftProfile.scaled(0.04)
    ds = [prof.delta(t, 1001) for t in range(1001)]
    assert max(ds) == pytest.approx(0.04) and min(ds) == pytest.approx(-0.04)
    assert abs(ds[0]) < 1e-15 and abs(ds[-1]) < 1e-15


# ---------------------------------------------------------------- sampling
def test_sample_run_deterministic():
    rho = projector(ket(0, 1))
    a, b = sample_run(rho, NoiseConfig.table1(), seed=7), sample_run(rho, NoiseConfig.table1(), seed=7)
    assert (a.m1_outcome, a.m2_outcome, a.corrections_applied) == (b.m1_outcome, b.m2_outcome, b.corrections_applied)
    assert np.array_equal(a.final_state, b.final_state)


def test_sampled_branch_frequencies():
    traces = sample_runs(projector(ket(0, 0)), shots=100_000, seed=2024)
    counts = {}
    for tr in traces:
        counts[(tr.m1_outcome, tr.m2_outcome)] = counts.get((tr.m1_outcome, tr.m2_outcome), 0) + 1
    assert sorted(counts) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    for c in counts.values():
        assert abs(c / 100_000 - 0.25) < 0.005


# ---------------------------------------------------------------- coherence
def test_coherence_error_values():
    assert coherence_error(0, 140) == 0
    assert coherence_error(12, 140) == pytest.approx(1 - math.exp(-((12 / 140) ** 2)), abs=1e-15)
    assert 0.006 <= coherence_error(12, 140) <= 0.009
    assert coherence_error(140, 140) == pytest.approx(1 - math.exp(-1), abs=1e-15)
    with pytest.raises(ValueError):
        coherence_error(1, 0)


def test_wait_dephasing_matches_ramsey_contrast():
    # a single M2 wait reduces its coherence by exactly the Ramsey factor
    noise = NoiseConfig(coherence_time_ms=140.0, wait_schedule_ms={"bell": 0.0, "m2": 12.0})
    f = entanglement_fidelity(induced_choi(noise), CNOT)
    assert f < 1
    assert 1 - f <= coherence_error(12, 140) + 1e-12
