"""Depolarizing error budget, SPAM bookkeeping, stray light and timing."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .channels import depolarize
from .protocol import NoiseConfig, induced_choi
from .qlinalg import CNOT, entanglement_fidelity

__all__ = [
    "depolarize",
    "ErrorBudget",
    "budget_fidelity",
    "budget_sum",
    "budget_uncertainty",
    "SpamRecord",
    "spam_arithmetic",
    "subtract_spam",
    "stray_light_probability",
    "TimingTable",
    "timing_report",
]

BUDGET_KEYS = ("spam_b", "spam_m", "bell_mm", "cnot_bm1", "cnot_mb2", "coherence_m", "stray_m2", "stray_b1")

# Mg+ 3s-3p(3/2) line
MG_WAVELENGTH_M = 279.6e-9
MG_GAMMA_PER_S = 2 * math.pi * 41.8e6


def _data(name):
    return json.loads(resources.files("qgt").joinpath("data").joinpath(name).read_text())


@dataclass(frozen=True)
class ErrorBudget:
    """Named error probabilities with 1-sigma uncertainties: ``{name: (value, sigma)}``."""

    entries: dict

    def __post_init__(self):
        clean = {}
        for k, (v, s) in dict(self.entries).items():
            v, s = float(v), float(s)
            if v < 0 or s < 0:
                raise ValueError(f"budget entry {k} has a negative value or uncertainty")
            clean[k] = (v, s)
        unknown = set(clean) - set(BUDGET_KEYS)
        if unknown:
            raise ValueError(f"unknown budget entries {sorted(unknown)}")
        object.__setattr__(self, "entries", clean)

    @classmethod
    def table1(cls):
        return cls.from_json(_data("error_budget.json"))

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls({e["name"]: (e["value"], e.get("sigma", 0.0)) for e in obj["entries"]})

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def to_json(self):
        return {"entries": [{"name": k, "value": v, "sigma": s} for k, (v, s) in self.entries.items()]}

    def value(self, key):
        return self.entries.get(key, (0.0, 0.0))[0]

    def scaled(self, factor=1.0, sigma_factor=1.0):
        return ErrorBudget({k: (v * factor, s * sigma_factor) for k, (v, s) in self.entries.items()})

    def with_values(self, values):
        return ErrorBudget({k: (values[k], s) for k, (_, s) in self.entries.items()})

    def noise_config(self):
        """Every entry as a depolarizing channel at its place in the protocol."""
        return NoiseConfig(
            depol_bell=self.value("bell_mm"),
            depol_cnot1=self.value("cnot_bm1"),
            depol_cnot2=self.value("cnot_mb2"),
            coherence_depol=self.value("coherence_m"),
            stray_m2=self.value("stray_m2"),
            stray_b1=self.value("stray_b1"),
            spam_b=self.value("spam_b"),
            spam_m=self.value("spam_m"),
            coherence_time_ms=math.inf,
        )


def budget_fidelity(budget):
    """Entanglement fidelity with CNOT of the protocol with every entry depolarizing."""
    return entanglement_fidelity(induced_choi(budget.noise_config()), CNOT)


def budget_sum(budget):
    """Independent-error total and its quadrature uncertainty."""
    if not budget.entries:
        return 0.0, 0.0
    vals = np.array(list(budget.entries.values()))
    return float(vals[:, 0].sum()), float(np.sqrt(np.sum(vals[:, 1] ** 2)))


def budget_uncertainty(budget, n_mc=400, seed=0):
    """Monte-Carlo spread of :func:`budget_fidelity` under normal entry uncertainties."""
    if n_mc < 100:
        raise ValueError("n_mc must be >= 100")
    keys = list(budget.entries)
    mean = np.array([budget.entries[k][0] for k in keys])
    sd = np.array([budget.entries[k][1] for k in keys])
    if not np.any(sd > 0):
        return 0.0
    rng = np.random.default_rng(seed)
    draws = np.clip(rng.normal(mean, sd, size=(n_mc, len(keys))), 0.0, 1.0)
    fids = [budget_fidelity(budget.with_values(dict(zip(keys, row)))) for row in draws]
    return float(np.std(fids, ddof=1))


@dataclass(frozen=True)
class SpamRecord:
    eps_up: float
    eps_down: float
    eps_bar: float
    eps_bell: float

    def __post_init__(self):
        if self.eps_bar != (self.eps_up + self.eps_down) / 2 or self.eps_bell != 1.5 * self.eps_bar:
            raise ValueError("inconsistent SPAM record")


def spam_arithmetic(eps_up, eps_down):
    """Mean SPAM error of one qubit and its contribution to a Bell-state infidelity."""
    if not (0 <= eps_up <= 1 and 0 <= eps_down <= 1):
        raise ValueError("SPAM errors must be probabilities")
    bar = (eps_up + eps_down) / 2
    return SpamRecord(eps_up, eps_down, bar, 1.5 * bar)


def subtract_spam(measured_bell_infidelity, records):
    """Gate error left after removing the SPAM share of each participating qubit."""
    err = measured_bell_infidelity - sum(r.eps_bell for r in records)
    if err < 0:
        warnings.warn(f"SPAM exceeds the measured infidelity by {-err:.3g}; clamping to 0", stacklevel=2)
        return 0.0
    return err


def spam_table():
    """Reference SPAM measurements (units of 1e-2) as ``(ion, record, listed_bar, listed_bell)``."""
    rows = []
    for r in _data("spam_records.json")["rows"]:
        rec = spam_arithmetic(r["eps_up"] / 100, r["eps_down"] / 100)
        rows.append((r["ion"], rec, r["eps_bar"] / 100, r["eps_bell"] / 100))
    return rows


def stray_light_probability(gamma, wavelength, distance, duration):
    """Scattering probability of a neighbor at ``distance`` from a saturated emitter.

    Rate ``R2 = (gamma/2) sigma / (4 pi l^2)`` with resonant cross section
    ``sigma = 3 lambda^2 / (2 pi)``; SI units.
    """
    if gamma <= 0 or wavelength <= 0 or distance <= 0 or duration < 0:
        raise ValueError("need positive rate, wavelength, distance and non-negative duration")
    sigma = 3 * wavelength**2 / (2 * math.pi)
    rate = (gamma / 2) * sigma / (4 * math.pi * distance**2)
    return rate * duration


CATEGORIES = ("cooling", "shuttling", "gate", "detection", "preparation", "other")


@dataclass(frozen=True)
class TimingTable:
    """Ordered ``(label, category, duration_us)`` steps."""

    steps: tuple

    def __post_init__(self):
        steps = tuple((str(a), str(c), float(t)) for a, c, t in self.steps)
        for label, cat, t in steps:
            if cat not in CATEGORIES:
                raise ValueError(f"unknown category {cat!r} for {label!r}")
            if t <= 0:
                raise ValueError(f"step {label!r} has non-positive duration")
        object.__setattr__(self, "steps", steps)

    @classmethod
    def reference(cls):
        return cls.from_json(_data("timing.json"))

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(tuple((s["label"], s["category"], s["duration_us"]) for s in obj["steps"]))

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def timing_report(table):
    total = sum(t for _, _, t in table.steps)
    per = {c: 0.0 for c in CATEGORIES}
    for _, c, t in table.steps:
        per[c] += t
    frac = {c: (v / total if total else 0.0) for c, v in per.items()}
    return {
        "total_us": total,
        "category_us": per,
        "category_fraction": frac,
        "cooling_shuttling_fraction": frac["cooling"] + frac["shuttling"],
    }
