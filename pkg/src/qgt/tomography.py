"""Process tomography of a two-qubit map: design, readout, data, estimators.

Conventions: every ion reads *bright* in ``|up> = |0>``. Outcome index within a
basis is ``2*o1 + o2`` with ``o = 0`` for bright, and the 36 POVM elements are
ordered basis-major (``l = 4*b + o``).
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _rrr
from .gates import rotation
from .qlinalg import (
    CNOT,
    DimensionError,
    choi_dim,
    cptp_diagnostics,
    dual_basis,
    entanglement_fidelity,
    kron,
)

INPUT_LETTERS = "ud+r"
BASIS_LETTERS = "XYZ"
# preparation pulses (theta, phi) acting on |up>
PREP_PULSES = {"u": None, "d": (math.pi, 0.0), "+": (math.pi / 2, math.pi / 2), "r": (math.pi / 2, math.pi)}
# pulses mapping the +1 eigenstate of each axis to |up> (bright)
PRE_ROTATIONS = {"X": (math.pi / 2, -math.pi / 2), "Y": (math.pi / 2, 0.0), "Z": None}

UP = np.array([1.0, 0.0], dtype=complex)


class ReadoutUnidentifiableError(ValueError):
    """Reference histograms do not separate bright from dark."""


class EmptyDatasetError(ValueError):
    pass


def _pulse(spec, over_rotation=0.0):
    if spec is None:
        return np.eye(2, dtype=complex)
    theta, phi = spec
    return rotation(theta * (1.0 + over_rotation), phi)


# ------------------------------------------------------------------ design
@dataclass(frozen=True)
class ExperimentDesign:
    inputs: tuple = tuple(a + b for a, b in itertools.product(INPUT_LETTERS, repeat=2))
    bases: tuple = tuple(a + b for a, b in itertools.product(BASIS_LETTERS, repeat=2))

    def __post_init__(self):
        for lab in self.inputs:
            if len(lab) != 2 or any(c not in PREP_PULSES for c in lab):
                raise ValueError(f"unknown input label {lab!r}")
        for lab in self.bases:
            if len(lab) != 2 or any(c not in PRE_ROTATIONS for c in lab):
                raise ValueError(f"unknown basis label {lab!r}")

    @property
    def n_experiments(self):
        return len(self.inputs) * len(self.bases)

    @property
    def basis_prerotations(self):
        return {a: PRE_ROTATIONS[a] for a in BASIS_LETTERS}

    def input_state(self, label, over_rotation=(0.0, 0.0)):
        kets = [_pulse(PREP_PULSES[c], dl) @ UP for c, dl in zip(label, over_rotation)]
        psi = np.kron(*kets)
        return np.outer(psi, psi.conj())

    def input_states(self, over_rotation=(0.0, 0.0)):
        return np.array([self.input_state(lab, over_rotation) for lab in self.inputs])

    def prerotation(self, basis, over_rotation=(0.0, 0.0)):
        return kron(*(_pulse(PRE_ROTATIONS[c], dl) for c, dl in zip(basis, over_rotation)))

    def to_json(self):
        return {
            "inputs": list(self.inputs),
            "bases": list(self.bases),
            "prep_pulses": {k: (None if v is None else list(v)) for k, v in PREP_PULSES.items()},
            "basis_prerotations": {k: (None if v is None else list(v)) for k, v in PRE_ROTATIONS.items()},
        }


def design_standard():
    """All 16 products of ``{up, down, +, r}`` and all 9 Pauli-product axes."""
    return ExperimentDesign()


# ------------------------------------------------------------------ readout
@dataclass(frozen=True)
class ReadoutModel:
    """Per-ion misclassification weight ``p`` and photon-count threshold.

    An ion is called bright when its count is ``>= threshold`` (``bright_above``)
    or ``< threshold`` otherwise.
    """

    p: tuple = (0.0, 0.0)
    thresholds: tuple = (1, 1)
    bright_above: tuple = (True, True)

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(float(x) for x in self.p))
        object.__setattr__(self, "thresholds", tuple(int(x) for x in self.thresholds))
        object.__setattr__(self, "bright_above", tuple(bool(x) for x in self.bright_above))
        if not len(self.p) == len(self.thresholds) == len(self.bright_above):
            raise ValueError("per-ion fields must have equal length")
        if any(not 0.0 <= x < 0.5 for x in self.p):
            raise ValueError(f"readout weights {self.p} outside [0, 0.5)")
        if any(t < 1 for t in self.thresholds):
            raise ValueError("thresholds must be >= 1")

    @classmethod
    def ideal(cls):
        return cls()

    @classmethod
    def reference(cls):
        """Values fitted to the experiment's reference histograms."""
        return cls(p=(0.0090, 0.0134), thresholds=(8, 9))

    def to_json(self):
        return {"p": list(self.p), "thresholds": list(self.thresholds), "bright_above": list(self.bright_above)}

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(
            p=tuple(obj["p"]),
            thresholds=tuple(obj.get("thresholds", [1] * len(obj["p"]))),
            bright_above=tuple(obj.get("bright_above", [True] * len(obj["p"]))),
        )


@dataclass(frozen=True)
class ReferenceHistograms:
    """Per-ion ``(bright, dark)`` photon-count histograms as ``{count: frequency}``."""

    ions: tuple

    def __post_init__(self):
        norm = []
        for pair in self.ions:
            if len(pair) != 2:
                raise ValueError("each ion needs a bright and a dark histogram")
            clean = []
            for h in pair:
                h = {int(k): float(v) for k, v in dict(h).items()}
                if any(v < 0 for v in h.values()) or any(k < 0 for k in h):
                    raise ValueError("histogram counts and frequencies must be non-negative")
                if not any(v > 0 for v in h.values()):
                    raise ValueError("histogram has no nonzero bin")
                clean.append(h)
            norm.append(tuple(clean))
        object.__setattr__(self, "ions", tuple(norm))

    def to_json(self):
        return {
            "ions": [
                {"bright": {str(k): v for k, v in sorted(b.items())},
                 "dark": {str(k): v for k, v in sorted(dk.items())}}
                for b, dk in self.ions
            ]
        }

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(tuple((ion["bright"], ion["dark"]) for ion in obj["ions"]))


def poisson_histograms(mean_bright, mean_dark, n_samples, seed):
    """Synthetic reference histograms for one ion from Poisson count models."""
    rng = np.random.default_rng(seed)
    out = []
    for mean in (mean_bright, mean_dark):
        vals, cnts = np.unique(rng.poisson(mean, n_samples), return_counts=True)
        out.append({int(v): float(c) for v, c in zip(vals, cnts)})
    return tuple(out)


def _fit_one(bright, dark):
    top = max(max(bright), max(dark)) + 2
    hb = np.zeros(top)
    hd = np.zeros(top)
    for k, v in bright.items():
        hb[k] += v
    for k, v in dark.items():
        hd[k] += v
    total = hb.sum() + hd.sum()
    below_b = np.concatenate([[0.0], np.cumsum(hb)])  # counts < t
    below_d = np.concatenate([[0.0], np.cumsum(hd)])
    best = None
    for t in range(1, top + 1):
        for above in (True, False):
            if above:
                errors = below_b[t] + (hd.sum() - below_d[t])
            else:
                errors = (hb.sum() - below_b[t]) + below_d[t]
            p = errors / total
            if p >= 0.5 - 1e-12:
                continue  # the model needs p < 1/2; the binomial likelihood is symmetric
            ll = 0.0 if p <= 0 else errors * math.log(p) + (total - errors) * math.log1p(-p)
            if best is None or ll > best[0]:
                best = (ll, t, above, p)
    if best is None:
        raise ReadoutUnidentifiableError("bright and dark histograms are not separable")
    _, t, above, p = best
    return p, t, above


def fit_readout(hists):
    """Maximum-likelihood threshold and convex weight per ion.

    For a threshold ``t`` the reference shots split into correctly and wrongly
    classified; a single misclassification weight ``p`` shared by both
    histograms has binomial likelihood, maximized at the error fraction. The
    threshold (and orientation) with the largest maximized likelihood wins.
    """
    fits = [_fit_one(b, d) for b, d in hists.ions]
    return ReadoutModel(
        p=tuple(f[0] for f in fits),
        thresholds=tuple(f[1] for f in fits),
        bright_above=tuple(f[2] for f in fits),
    )


def _ion_elements(p, unitary):
    eb = unitary.conj().T @ np.diag([1.0 - p, p]).astype(complex) @ unitary
    return eb, np.eye(2) - eb


def povm_elements(design, readout, over_rotation=(0.0, 0.0)):
    """36 elements ``(len(bases)*4, 4, 4)``; each basis's four sum to the identity."""
    if len(readout.p) != 2:
        raise DimensionError("readout model must describe two ions")
    out = []
    for basis in design.bases:
        ions = []
        for ion, axis in enumerate(basis):
            u = _pulse(PRE_ROTATIONS[axis], over_rotation[ion])
            ions.append(_ion_elements(readout.p[ion], u))
        for o1, o2 in itertools.product((0, 1), repeat=2):
            out.append(np.kron(ions[0][o1], ions[1][o2]))
    return np.array(out)


# ------------------------------------------------------------------ data
@dataclass(frozen=True)
class CountsDataset:
    """Outcome counts ``counts[k, 4*b + o]`` and trial numbers ``trials[k, b]``."""

    design: ExperimentDesign
    counts: np.ndarray
    trials: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        trials = np.asarray(self.trials)
        nk, nb = len(self.design.inputs), len(self.design.bases)
        if counts.shape != (nk, 4 * nb) or trials.shape != (nk, nb):
            raise DimensionError(f"counts {counts.shape} / trials {trials.shape} do not match the design")
        if np.any(counts < 0) or np.any(trials < 0):
            raise ValueError("counts must be non-negative")
        if np.any(counts != np.round(counts)) or np.any(trials != np.round(trials)):
            raise ValueError("counts must be integers")
        sums = counts.reshape(nk, nb, 4).sum(axis=2)
        if not np.array_equal(sums, trials):
            raise ValueError("outcome counts do not sum to the recorded trials")
        counts = counts.astype(np.int64)
        trials = trials.astype(np.int64)
        counts.setflags(write=False)
        trials.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "trials", trials)

    @classmethod
    def from_counts(cls, design, counts):
        counts = np.asarray(counts)
        nk, nb = len(design.inputs), len(design.bases)
        return cls(design, counts, counts.reshape(nk, nb, 4).sum(axis=2))

    @property
    def total(self):
        return int(self.counts.sum())

    def frequencies(self):
        """Conditional frequencies ``f_kl = n_kl / N_(k, basis of l)``."""
        if np.any(self.trials == 0):
            raise EmptyDatasetError("some (input, basis) experiments have no trials")
        return self.counts / np.repeat(self.trials, 4, axis=1)

    def to_json(self):
        return {
            "trials": self.trials.tolist(),
            "counts": self.counts.tolist(),
            "inputs": list(self.design.inputs),
            "bases": list(self.design.bases),
        }

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            obj = json.loads(obj)
        design = ExperimentDesign(tuple(obj["inputs"]), tuple(obj["bases"]))
        return cls(design, np.array(obj["counts"]), np.array(obj["trials"]))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def outcome_probabilities(chi, design, povms):
    """Model table ``p_kl = d Tr[chi (rho_k^T (x) E_l)]`` of shape ``(16, 36)``."""
    return _rrr.probabilities(np.asarray(chi, dtype=complex), design.input_states(), np.asarray(povms))


def _trials_table(trials, design):
    nk, nb = len(design.inputs), len(design.bases)
    t = np.broadcast_to(np.asarray(trials), (nk, nb)).astype(np.int64)
    if np.any(t < 1):
        raise ValueError("trials must be >= 1")
    return t


def _multinomial_counts(probs, trials, rng):
    nk, nb = trials.shape
    p = np.clip(probs.reshape(nk, nb, 4), 0.0, None)
    p = p / p.sum(axis=2, keepdims=True)
    counts = rng.multinomial(trials, p)
    return counts.reshape(nk, 4 * nb)


def simulate_dataset(source, design, readout, trials, seed, order="random"):
    """Multinomial counts for all experiments.

    ``source`` is a Choi matrix or a :class:`~qgt.protocol.NoiseConfig`. A
    NoiseConfig carrying a drift profile runs trial by trial on the drift clock,
    with experiments in ``order`` (``"random"`` or ``"sequential"``).
    """
    from .protocol import NoiseConfig, induced_choi

    trials = _trials_table(trials, design)
    rng = np.random.default_rng(seed)
    if isinstance(source, NoiseConfig):
        if source.drift is not None:
            return _simulate_drifted(source, design, readout, trials, rng, order)
        source = induced_choi(source)
    chi = np.asarray(source, dtype=complex)
    if choi_dim(chi) != 4:
        raise DimensionError("source must be a two-qubit process")
    probs = outcome_probabilities(chi, design, povm_elements(design, readout))
    return CountsDataset(design, _multinomial_counts(probs, trials, rng), trials)


def experiment_schedule(design, trials, rng, order="random"):
    """Experiment execution order and the starting trial-clock value of each."""
    nk, nb = trials.shape
    cells = [(k, b) for k in range(nk) for b in range(nb)]
    if order == "random":
        cells = [cells[i] for i in rng.permutation(len(cells))]
    elif order != "sequential":
        raise ValueError(f"unknown experiment order {order!r}")
    starts = np.cumsum([0] + [trials[k, b] for k, b in cells[:-1]])
    return cells, starts


def _simulate_drifted(noise, design, readout, trials, rng, order):
    from .protocol import induced_choi

    profile = noise.drift
    static = noise.without_drift()
    total = int(trials.sum())
    cells, starts = experiment_schedule(design, trials, rng, order)
    counts = np.zeros((len(design.inputs), 4 * len(design.bases)), dtype=np.int64)

    if profile.correlated:
        cache = {}

        def table(delta):
            key = round(delta, 4)
            if key not in cache:
                dl = (key, key)
                chi = induced_choi(static, over_rotation=key)
                cache[key] = _rrr.probabilities(
                    chi, design.input_states(dl), povm_elements(design, readout, dl)
                )
            return cache[key]

        for (k, b), t0 in zip(cells, starts):
            n = trials[k, b]
            deltas = np.array([profile.delta(t, total) for t in range(t0, t0 + n)])
            keys, mult = np.unique(np.round(deltas, 4), return_counts=True)
            for key, m in zip(keys, mult):
                p = np.clip(table(float(key))[k, 4 * b:4 * b + 4], 0, None)
                counts[k, 4 * b:4 * b + 4] += rng.multinomial(m, p / p.sum())
        return CountsDataset(design, counts, trials)

    chi = induced_choi(static)
    d = 4
    c4 = chi.reshape(d, d, d, d)
    for (k, b), t0 in zip(cells, starts):
        n = trials[k, b]
        amp = np.abs([profile.delta(t, total) for t in range(t0, t0 + n)])
        dl = rng.uniform(-1.0, 1.0, size=(n, 4)) * amp[:, None]
        label, basis = design.inputs[k], design.bases[b]
        probs = np.empty((n, 4))
        for i in range(n):
            rho = design.input_state(label, (dl[i, 0], dl[i, 1]))
            out = d * np.einsum("iajb,ij->ab", c4, rho)
            u = design.prerotation(basis, (dl[i, 2], dl[i, 3]))
            rot = u @ out @ u.conj().T
            pz = np.clip(np.diag(rot).real, 0, None)
            # per-ion bit-flip readout in the rotated frame
            flip = [np.array([[1 - q, q], [q, 1 - q]]) for q in readout.p]
            probs[i] = np.kron(flip[0], flip[1]) @ pz
        u01 = rng.random(n)
        cum = np.cumsum(probs / probs.sum(axis=1, keepdims=True), axis=1)
        outcome = np.minimum((u01[:, None] > cum).sum(axis=1), 3)
        counts[k, 4 * b:4 * b + 4] += np.bincount(outcome, minlength=4)
    return CountsDataset(design, counts, trials)


# ------------------------------------------------------------------ estimators
def log_likelihood(chi, data, povms):
    """``sum n_kl ln p_kl``; ``-inf`` if an observed outcome has zero model probability."""
    p = outcome_probabilities(chi, data.design, povms)
    if p.shape != data.counts.shape:
        raise DimensionError("POVM family does not match the dataset")
    return _rrr.loglik_np(data.counts.astype(float), p)


@dataclass(frozen=True)
class MLOptions:
    max_iterations: int = 20000
    tol: float = 1e-10
    # 0 disables dilution; a positive value mixes every step with the identity
    dilution: float = 0.0
    record_trace: bool = False
    use_numba: bool | None = None

    def __post_init__(self):
        if self.max_iterations < 1 or self.tol <= 0 or self.dilution < 0:
            raise ValueError("invalid ML options")


@dataclass(frozen=True)
class MLResult:
    choi: np.ndarray
    converged: bool
    iterations: int
    log_likelihood: float
    fallback_steps: int = 0
    trace: np.ndarray | None = field(default=None, repr=False)

    def fidelity(self, target=CNOT):
        return entanglement_fidelity(self.choi, target)


def ml_estimate(data, povms, options=MLOptions(), start=None):
    """Maximum-likelihood CPTP process by the RρR iteration with trace-preservation."""
    if data.total == 0:
        raise EmptyDatasetError("dataset has no counts")
    povms = np.asarray(povms, dtype=complex)
    rho = data.design.input_states()
    if povms.shape[0] != data.counts.shape[1]:
        raise DimensionError("POVM family does not match the dataset")
    chi0 = np.eye(16, dtype=complex) / 16 if start is None else np.asarray(start, dtype=complex)
    trace = np.full(options.max_iterations + 1, np.nan)
    chi, it, ll, conv, fb = _rrr.rrr_loop(
        rho, povms, data.counts.astype(float), chi0,
        options.max_iterations, options.tol, options.dilution, trace, options.use_numba,
    )
    tr = trace[: it + 1].copy() if options.record_trace else None
    return MLResult(chi, bool(conv), int(it), float(ll), int(fb), tr)


def fixed_point_residual(chi, data, povms):
    """``max |Lambda R chi R Lambda - chi|`` for the undiluted update."""
    rho = data.design.input_states()
    n = data.counts.astype(float)
    p = _rrr.probabilities_np(chi, rho, povms)
    w = np.divide(n, p, out=np.zeros_like(n), where=n > 0)
    r = _rrr.r_operator_np(w, rho, povms)
    return float(np.max(np.abs(_rrr.tp_step_np(chi, r) - chi)))


def linear_coefficients(design, povms, target=CNOT):
    """``a_kl = Tr(U rho~_k U^dag E~_l) / d^2`` from the canonical dual frames."""
    rho_dual = dual_basis(design.input_states()).duals
    e_dual = dual_basis(povms).duals
    u = np.asarray(target, dtype=complex)
    d = u.shape[0]
    rot = np.einsum("ab,kbc,dc->kad", u, rho_dual, u.conj())
    return np.einsum("kab,lba->kl", rot, e_dual).real / d**2


def linear_fidelity(data, povms, target=CNOT, coefficients=None):
    """Linear (unbiased) entanglement-fidelity estimate; may fall outside ``[0, 1]``."""
    a = linear_coefficients(data.design, povms, target) if coefficients is None else coefficients
    return float(np.sum(a * data.frequencies()))


def fidelity_report(chi, target=CNOT):
    diag = cptp_diagnostics(chi)
    return {
        "fidelity": entanglement_fidelity(chi, target),
        "min_eigenvalue": diag.min_eigenvalue,
        "tp_deviation": diag.tp_deviation,
    }
