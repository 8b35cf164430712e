import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import random_density
from qgt.budget import (
    BUDGET_KEYS,
    MG_GAMMA_PER_S,
    MG_WAVELENGTH_M,
    ErrorBudget,
    SpamRecord,
    TimingTable,
    budget_fidelity,
    budget_sum,
    budget_uncertainty,
    depolarize,
    spam_arithmetic,
    spam_table,
    stray_light_probability,
    subtract_spam,
    timing_report,
)
from qgt.qlinalg import choi_from_channel, ket, projector

seeds = st.integers(0, 2**32 - 1)
paulis = [np.eye(2), np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1.0, -1.0])]


def _twirl_oracle(rho, eps, qubit):
    """Single-qubit depolarizing as a Pauli twirl: Tr_q(rho) (x) I/2 = (1/4) sum_P P rho P."""
    twirl = sum(
        (np.kron(p, np.eye(2)) if qubit == 0 else np.kron(np.eye(2), p)) @ rho
        @ (np.kron(p, np.eye(2)) if qubit == 0 else np.kron(np.eye(2), p)).conj().T
        for p in paulis
    ) / 4
    return (1 - eps) * rho + eps * twirl


# ---------------------------------------------------------------- depolarize
def test_depolarize_endpoints():
    rho = random_density(4, np.random.default_rng(0))
    assert np.abs(depolarize(rho, 0.0) - rho).max() == 0
    assert np.abs(depolarize(rho, 1.0) - np.eye(4) / 4).max() < 1e-15


def test_depolarize_half_on_bell_state():
    phi = (ket(0, 0) + ket(1, 1)) / math.sqrt(2)
    out = depolarize(projector(phi), 0.5, [1])
    assert abs((phi.conj() @ out @ phi).real - 0.625) < 1e-12


@given(seeds, st.floats(0, 1), st.sampled_from([0, 1]))
def test_depolarize_matches_twirl(seed, eps, qubit):
    rho = random_density(4, np.random.default_rng(seed))
    assert np.abs(depolarize(rho, eps, [qubit]) - _twirl_oracle(rho, eps, qubit)).max() < 1e-12


@given(seeds, st.floats(0, 1))
def test_depolarize_linear_and_trace_preserving(seed, eps):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(2, 8, 8)) + 1j * rng.normal(size=(2, 8, 8))
    sub = [0, 2]
    lhs = depolarize(0.3 * a + 0.7 * b, eps, sub)
    assert np.abs(lhs - (0.3 * depolarize(a, eps, sub) + 0.7 * depolarize(b, eps, sub))).max() < 1e-12
    assert abs(np.trace(depolarize(a, eps, sub)) - np.trace(a)) < 1e-12


@pytest.mark.parametrize("eps", np.linspace(0, 1, 6))
def test_depolarize_is_cptp(eps):
    chi = choi_from_channel(lambda m: depolarize(m, eps, [0]), 4)
    assert np.linalg.eigvalsh(chi).min() >= -1e-12


def test_depolarize_rejects_bad_input():
    with pytest.raises(ValueError):
        depolarize(np.eye(4) / 4, 0.1, [2])
    with pytest.raises(ValueError):
        depolarize(np.eye(4) / 4, 1.5)


# ---------------------------------------------------------------- budget model
def test_budget_table_values():
    b = ErrorBudget.table1()
    assert set(b.entries) == set(BUDGET_KEYS)
    assert b.value("bell_mm") == 0.040
    assert all(s >= 0 for _, s in b.entries.values())


def test_zero_budget_is_perfect():
    b = ErrorBudget({k: (0.0, 0.0) for k in BUDGET_KEYS})
    assert abs(budget_fidelity(b) - 1) < 1e-9


def test_budget_fidelity_table1():
    f = budget_fidelity(ErrorBudget.table1())
    total, _ = budget_sum(ErrorBudget.table1())
    assert 0.86 <= f <= 0.90
    assert 1 - total < f


def test_budget_doubling_decreases_fidelity():
    b = ErrorBudget.table1()
    assert budget_fidelity(b.scaled(2.0)) < budget_fidelity(b)


@pytest.mark.parametrize("key", BUDGET_KEYS)
def test_budget_monotone_in_each_entry(key):
    b = ErrorBudget.table1()
    base = b.value(key)
    fids = []
    for factor in (0.0, 0.5, 1.0, 2.0, 3.0):
        vals = {k: v for k, (v, _) in b.entries.items()}
        vals[key] = base * factor
        fids.append(budget_fidelity(b.with_values(vals)))
    assert all(x >= y - 1e-12 for x, y in zip(fids, fids[1:]))
    assert fids[0] > fids[-1]


def test_budget_sum():
    total, sigma = budget_sum(ErrorBudget.table1())
    assert total == pytest.approx(0.156, abs=1e-12)
    assert round(total, 2) == 0.16
    assert round(sigma, 2) == 0.02
    assert budget_sum(ErrorBudget({})) == (0.0, 0.0)
    assert budget_sum(ErrorBudget({"bell_mm": (0.03, 0.004)})) == (0.03, 0.004)


def test_budget_uncertainty():
    b = ErrorBudget.table1()
    assert budget_uncertainty(b.scaled(1.0, 0.0), n_mc=100) == 0.0
    s1 = budget_uncertainty(b, n_mc=400, seed=1)
    s2 = budget_uncertainty(b.scaled(1.0, 2.0), n_mc=400, seed=1)
    assert 0.005 < s1 < 0.02
    assert 2 * 0.7 <= s2 / s1 <= 2 * 1.3
    assert budget_uncertainty(b, n_mc=100, seed=3) == budget_uncertainty(b, n_mc=100, seed=3)
    with pytest.raises(ValueError):
        budget_uncertainty(b, n_mc=10)


def test_budget_validation_and_json():
    with pytest.raises(ValueError):
        ErrorBudget({"bell_mm": (-0.1, 0.0)})
    with pytest.raises(ValueError):
        ErrorBudget({"unknown": (0.1, 0.0)})
    b = ErrorBudget.table1()
    assert ErrorBudget.from_json(json.dumps(b.to_json())) == b


# ---------------------------------------------------------------- SPAM
def test_spam_arithmetic_examples():
    r = spam_arithmetic(0.005, 0.004)
    assert r.eps_bar == pytest.approx(0.0045, abs=1e-15)
    assert round(r.eps_bell, 3) == 0.007
    assert spam_arithmetic(0.002, 0.014).eps_bell == pytest.approx(0.012, abs=1e-15)
    z = spam_arithmetic(0.0, 0.0)
    assert (z.eps_up, z.eps_down, z.eps_bar, z.eps_bell) == (0, 0, 0, 0)


@given(st.floats(0, 1), st.floats(0, 1))
def test_spam_identities_exact(up, down):
    r = spam_arithmetic(up, down)
    assert r.eps_bar == (up + down) / 2
    assert r.eps_bell == 1.5 * r.eps_bar


def test_spam_validation():
    with pytest.raises(ValueError):
        spam_arithmetic(1.2, 0.0)
    with pytest.raises(ValueError):
        SpamRecord(0.01, 0.02, 0.02, 0.03)


def test_spam_table_matches_listed_rows():
    for ion, rec, listed_bar, listed_bell in spam_table():
        assert abs(rec.eps_bell - listed_bell) <= 0.05e-2 + 1e-12, ion
        assert abs(rec.eps_bar - listed_bar) <= 0.05e-2 + 1e-12, ion


def test_subtract_spam():
    rows = {ion: rec for ion, rec, _, _ in spam_table()}
    m_spam = [rows["M1"], rows["M2"]]
    measured = 0.040 + sum(r.eps_bell for r in m_spam)
    assert subtract_spam(measured, m_spam) == pytest.approx(0.040, abs=1e-15)
    assert subtract_spam(0.05, []) == 0.05
    with pytest.warns(UserWarning):
        assert subtract_spam(0.01, m_spam) == 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        subtract_spam(0.5, m_spam)


# ---------------------------------------------------------------- stray light
def test_stray_light_reference_parameters():
    p = stray_light_probability(MG_GAMMA_PER_S, MG_WAVELENGTH_M, 340e-6, 200e-6)
    assert 4e-4 <= p <= 8e-4
    sigma = 3 * MG_WAVELENGTH_M**2 / (2 * math.pi)
    assert p == pytest.approx(MG_GAMMA_PER_S / 2 * sigma / (4 * math.pi * (340e-6) ** 2) * 200e-6, rel=1e-14)


def test_stray_light_scaling():
    args = (MG_GAMMA_PER_S, MG_WAVELENGTH_M)
    p1 = stray_light_probability(*args, 340e-6, 200e-6)
    assert stray_light_probability(*args, 680e-6, 200e-6) == pytest.approx(p1 / 4, rel=1e-14)
    assert stray_light_probability(*args, 340e-6, 0.0) == 0.0
    with pytest.raises(ValueError):
        stray_light_probability(*args, 0.0, 1.0)


# ---------------------------------------------------------------- timing
def test_reference_timing_report():
    rep = timing_report(TimingTable.reference())
    assert rep["total_us"] == pytest.approx(21000, rel=0.05)
    assert rep["cooling_shuttling_fraction"] > 0.5
    assert sum(rep["category_fraction"].values()) == pytest.approx(1.0, abs=1e-12)


def test_single_step_report():
    rep = timing_report(TimingTable((("detect", "detection", 250.0),)))
    assert rep["category_fraction"]["detection"] == 1.0
    assert rep["total_us"] == 250.0


@given(st.permutations(list(range(26))))
def test_timing_permutation_invariance(perm):
    table = TimingTable.reference()
    shuffled = TimingTable(tuple(table.steps[i] for i in perm))
    a, b = timing_report(table), timing_report(shuffled)
    assert a["total_us"] == pytest.approx(b["total_us"], abs=1e-9)
    for c in a["category_us"]:
        assert a["category_us"][c] == pytest.approx(b["category_us"][c], abs=1e-9)


def test_timing_validation():
    with pytest.raises(ValueError):
        TimingTable((("x", "cooling", 0.0),))
    with pytest.raises(ValueError):
        TimingTable((("x", "coffee", 1.0),))
    assert len(TimingTable.reference().steps) == 26
