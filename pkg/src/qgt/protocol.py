"""Branch-exact simulation of the teleported CNOT between two nodes.

Register order is ``(B1, M1, M2, B2)``. Alice holds ``B1, M1`` and Bob holds
``M2, B2``; the ``M1-M2`` Bell pair is the only resource shared across the cut.
Logical ``|0> = up`` and ``|1> = down`` on every ion, so an ancilla reported in
``down`` is the classical bit 1.

The circuit is kept as an explicit list of :class:`Step` objects so that the
LOCC structure can be inspected, and is executed on stacks of operators so that
the induced process on ``(B1, B2)`` is obtained in one pass over a full operator
basis.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from . import gates
from .channels import bit_flip_measure, dephase_collective, depolarize
from .qlinalg import check_density_matrix, choi_from_channel

B1, M1, M2, B2 = range(4)
QUBIT_NAMES = ("B1", "M1", "M2", "B2")
N_QUBITS = 4
NODES = {"Alice": (B1, M1), "Bob": (M2, B2)}

DEFAULT_WAIT_SCHEDULE_MS = {"bell": 4.2, "m2": 3.6}

# Control points (position along the trial clock, fraction of max drift): a
# slow two-sided sweep about the calibrated pulse area.
DEFAULT_DRIFT_SHAPE = ((0.0, 0.0), (0.25, 1.0), (0.5, 0.0), (0.75, -1.0), (1.0, 0.0))


def coherence_error(wait_ms, tau_ms):
    """Ramsey contrast loss ``1 - exp(-(t/tau)^2)`` for a Gaussian decay envelope."""
    if wait_ms < 0 or tau_ms <= 0:
        raise ValueError("need wait_ms >= 0 and tau_ms > 0")
    return 1.0 - math.exp(-((wait_ms / tau_ms) ** 2))


@dataclass(frozen=True)
class DriftProfile:
    """Piecewise-linear over-rotation ``delta(t) = dtheta/theta`` along the trial clock.

    ``pattern`` holds ``(position, delta)`` control points with position in
    ``[0, 1]`` relative to the full dataset. With ``correlated`` every drifting
    pulse in a trial shares ``delta``; otherwise preparation and measurement
    pulses draw independent over-rotations uniformly in ``[-|delta|, |delta|]``.
    """

    max_fraction: float = 0.04
    pattern: tuple = tuple((x, 0.04 * y) for x, y in DEFAULT_DRIFT_SHAPE)
    correlated: bool = True

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.pattern)
        object.__setattr__(self, "pattern", pts)
        if self.max_fraction < 0:
            raise ValueError("max_fraction must be non-negative")
        if not pts:
            raise ValueError("drift pattern needs at least one control point")
        if any(abs(y) > self.max_fraction + 1e-15 for _, y in pts):
            raise ValueError(f"drift pattern exceeds max_fraction {self.max_fraction}")
        xs = [x for x, _ in pts]
        if xs != sorted(xs):
            raise ValueError("control point positions must be increasing")

    @classmethod
    def scaled(cls, max_fraction, shape=DEFAULT_DRIFT_SHAPE, correlated=True):
        return cls(max_fraction, tuple((x, max_fraction * y) for x, y in shape), correlated)

    def delta(self, trial, n_trials):
        pos = trial / max(n_trials - 1, 1)
        xs, ys = zip(*self.pattern)
        return float(np.interp(pos, xs, ys))


@dataclass(frozen=True)
class NoiseConfig:
    depol_bell: float = 0.0
    depol_cnot1: float = 0.0
    depol_cnot2: float = 0.0
    coherence_time_ms: float = math.inf
    wait_schedule_ms: dict = field(default_factory=lambda: dict(DEFAULT_WAIT_SCHEDULE_MS))
    stray_m2: float = 0.0
    stray_b1: float = 0.0
    readout_p: dict = field(default_factory=dict)
    # lumped depolarizing terms used by the error-budget model
    spam_b: float = 0.0
    spam_m: float = 0.0
    coherence_depol: float = 0.0
    drift: DriftProfile | None = None

    def __post_init__(self):
        for name in ("depol_bell", "depol_cnot1", "depol_cnot2", "stray_m2", "stray_b1",
                     "spam_b", "spam_m", "coherence_depol"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} is not a probability")
        for k, v in self.readout_p.items():
            if k not in QUBIT_NAMES or not 0.0 <= v <= 1.0:
                raise ValueError(f"bad readout probability {k}={v}")
        if not self.coherence_time_ms > 0:
            raise ValueError("coherence time must be positive")
        if any(t < 0 for t in self.wait_schedule_ms.values()):
            raise ValueError("wait durations must be non-negative")
        if set(self.wait_schedule_ms) - set(DEFAULT_WAIT_SCHEDULE_MS):
            raise ValueError(f"unknown wait stages {set(self.wait_schedule_ms)}")

    @classmethod
    def table1(cls, **overrides):
        """Noise at the reference error-budget values."""
        kw = dict(
            depol_bell=0.040,
            depol_cnot1=0.030,
            depol_cnot2=0.030,
            coherence_time_ms=140.0,
            stray_m2=0.011,
            stray_b1=0.012,
            readout_p={"M1": 0.0075, "M2": 0.0075},
            spam_b=0.011,
        )
        kw.update(overrides)
        return cls(**kw)

    def dephasing_strength(self, stage):
        t = self.wait_schedule_ms.get(stage, 0.0)
        return (t / self.coherence_time_ms) ** 2

    def without_drift(self):
        return NoiseConfig(**{**self._fields(), "drift": None})

    def _fields(self):
        return {f: getattr(self, f) for f in self.__dataclass_fields__}

    def to_json(self):
        d = self._fields()
        d["coherence_time_ms"] = None if math.isinf(self.coherence_time_ms) else self.coherence_time_ms
        d["drift"] = None if self.drift is None else asdict(self.drift)
        if d["drift"] is not None:
            d["drift"]["pattern"] = [list(p) for p in self.drift.pattern]
        return d

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            obj = json.loads(obj)
        obj = dict(obj)
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown noise fields {sorted(unknown)}")
        if obj.get("coherence_time_ms", 1.0) is None:
            obj["coherence_time_ms"] = math.inf
        drift = obj.get("drift")
        if drift is not None:
            obj["drift"] = DriftProfile(
                max_fraction=drift.get("max_fraction", 0.04),
                pattern=tuple(tuple(p) for p in drift["pattern"]) if "pattern" in drift
                else tuple((x, drift.get("max_fraction", 0.04) * y) for x, y in DEFAULT_DRIFT_SHAPE),
                correlated=drift.get("correlated", True),
            )
        if "wait_schedule_ms" in obj:
            obj["wait_schedule_ms"] = dict(obj["wait_schedule_ms"])
        if "readout_p" in obj:
            obj["readout_p"] = dict(obj["readout_p"])
        return cls(**obj)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass(frozen=True)
class Step:
    """One operation of the circuit.

    ``kind`` is one of ``gate``, ``depolarize``, ``dephase``, ``measure``,
    ``conditional`` or ``send``. ``node`` is the party that executes it.
    """

    kind: str
    label: str
    qubits: tuple
    node: str
    operator: np.ndarray | None = None
    strength: float = 0.0
    bit: str | None = None
    receiver: str | None = None


def build_schedule(noise=None, over_rotation=0.0):
    """Circuit of the teleported CNOT with noise steps in place."""
    noise = noise or NoiseConfig()
    cnot = gates.cnot_gate().unitary(over_rotation)
    steps = [
        Step("gate", "F", (M1, M2), "shared", gates.bell_gate_f()),
        Step("depolarize", "bell_error", (M1, M2), "shared", strength=noise.depol_bell),
        Step("depolarize", "coherence", (M1, M2), "shared", strength=noise.coherence_depol),
        Step("dephase", "bell_wait", (M1, M2), "shared", strength=noise.dephasing_strength("bell")),
        Step("gate", "CNOT B1->M1", (B1, M1), "Alice", cnot),
        Step("depolarize", "cnot1_error", (B1, M1), "Alice", strength=noise.depol_cnot1),
        Step("depolarize", "spam_M1", (M1,), "Alice", strength=noise.spam_m / 2),
        Step("measure", "detect M1", (M1,), "Alice", strength=noise.readout_p.get("M1", 0.0), bit="m1"),
        Step("depolarize", "stray_M2", (M2,), "Bob", strength=noise.stray_m2),
        Step("send", "m1", (), "Alice", bit="m1", receiver="Bob"),
        Step("depolarize", "stray_B1", (B1,), "Alice", strength=noise.stray_b1),
        Step("dephase", "m2_wait", (M2,), "Bob", strength=noise.dephasing_strength("m2")),
        Step("conditional", "R(pi,0) on M2", (M2,), "Bob", gates.rotation(math.pi, 0.0), bit="m1"),
        Step("gate", "CNOT M2->B2", (M2, B2), "Bob", cnot),
        Step("depolarize", "cnot2_error", (M2, B2), "Bob", strength=noise.depol_cnot2),
        Step("gate", "R(pi/2,-pi/2) on M2", (M2,), "Bob", gates.rotation(math.pi / 2, -math.pi / 2)),
        Step("depolarize", "spam_M2", (M2,), "Bob", strength=noise.spam_m / 2),
        Step("measure", "detect M2", (M2,), "Bob", strength=noise.readout_p.get("M2", 0.0), bit="m2"),
        Step("send", "m2", (), "Bob", bit="m2", receiver="Alice"),
        Step("conditional", "R_Z(pi) on B1", (B1,), "Alice", gates.rz(math.pi), bit="m2"),
        Step("depolarize", "spam_B1", (B1,), "Alice", strength=noise.spam_b / 2),
        Step("depolarize", "spam_B2", (B2,), "Bob", strength=noise.spam_b / 2),
    ]
    return steps


@lru_cache(maxsize=None)
def _ancilla_init():
    m = np.zeros((4, 4), dtype=complex)
    m[3, 3] = 1.0  # |down down> on (M1, M2)
    return m


def _embed_input(ops):
    """Place operators on (B1, B2) into the 4-qubit register with ancillas in |11>."""
    full = np.einsum("xadeh,bcfg->xabcdefgh", ops.reshape(-1, 2, 2, 2, 2), _ancilla_init().reshape(2, 2, 2, 2))
    return full.reshape(-1, 16, 16)


def _reduce_output(states):
    t = states.reshape(states.shape[:-2] + (2,) * 8)
    return np.einsum("...abcdebch->...adeh", t).reshape(states.shape[:-2] + (4, 4))


def _execute(ops, steps):
    """Run the schedule on a stack of (B1,B2) operators.

    Returns ``{(m1, m2): outputs}`` with unnormalized ``(n, 4, 4)`` outputs.
    """
    branches = {(): _embed_input(np.asarray(ops, dtype=complex))}
    bit_names = []
    for st in steps:
        if st.kind == "gate":
            u = gates.embed(st.operator, st.qubits, N_QUBITS)
            branches = {k: u @ v @ u.conj().T for k, v in branches.items()}
        elif st.kind == "depolarize":
            if st.strength:
                branches = {k: depolarize(v, st.strength, st.qubits) for k, v in branches.items()}
        elif st.kind == "dephase":
            if st.strength:
                branches = {k: dephase_collective(v, st.strength, st.qubits) for k, v in branches.items()}
        elif st.kind == "measure":
            bit_names.append(st.bit)
            branches = {
                k + (r,): bit_flip_measure(v, st.qubits[0], r, st.strength)
                for k, v in branches.items()
                for r in (0, 1)
            }
        elif st.kind == "conditional":
            u = gates.embed(st.operator, st.qubits, N_QUBITS)
            pos = bit_names.index(st.bit)
            branches = {k: (u @ v @ u.conj().T if k[pos] else v) for k, v in branches.items()}
        elif st.kind == "send":
            pass
        else:
            raise ValueError(f"unknown step kind {st.kind!r}")
    return {k: _reduce_output(v) for k, v in branches.items()}


@dataclass(frozen=True)
class ProtocolTrace:
    m1_outcome: int
    m2_outcome: int
    messages: tuple
    corrections_applied: tuple
    final_state: np.ndarray

    def to_json(self):
        from .qlinalg import matrix_to_json

        return {
            "m1_outcome": self.m1_outcome,
            "m2_outcome": self.m2_outcome,
            "messages": [list(m) for m in self.messages],
            "corrections_applied": list(self.corrections_applied),
            "final_state": matrix_to_json(self.final_state),
        }


def _trace_for(bits, state, steps):
    outcome = dict(zip(("m1", "m2"), bits))
    messages = tuple(
        (st.node, st.receiver, outcome[st.bit]) for st in steps if st.kind == "send"
    )
    corrections = tuple(
        st.label for st in steps if st.kind == "conditional" and outcome[st.bit] == 1
    )
    return ProtocolTrace(bits[0], bits[1], messages, corrections, state)


def run_branching(rho, noise=None, over_rotation=0.0):
    """All four ancilla-outcome branches as ``[(probability, ProtocolTrace), ...]``."""
    rho = check_density_matrix(np.asarray(rho, dtype=complex))
    if rho.shape != (4, 4):
        raise ValueError(f"input must be a two-qubit density matrix, got {rho.shape}")
    steps = build_schedule(noise, over_rotation)
    outs = _execute(rho[None], steps)
    result = []
    for bits in sorted(outs):
        out = outs[bits][0]
        p = float(np.trace(out).real)
        state = out / p if p > 0 else np.zeros_like(out)
        result.append((p, _trace_for(bits, state, steps)))
    return result


def induced_channel_outputs(ops, noise=None, over_rotation=0.0):
    """Branch-averaged protocol output for a stack of input operators."""
    outs = _execute(np.asarray(ops, dtype=complex), build_schedule(noise, over_rotation))
    return sum(outs.values())


def induced_choi(noise=None, over_rotation=0.0):
    basis = np.zeros((16, 4, 4), dtype=complex)
    for i in range(4):
        for j in range(4):
            basis[4 * i + j, i, j] = 1.0
    outs = induced_channel_outputs(basis, noise, over_rotation)
    return choi_from_channel(lambda e: outs[int(np.argmax(np.abs(e).reshape(-1)))], 4)


def sample_runs(rho, noise=None, shots=1, seed=0):
    """``shots`` independent traces drawn from the branch distribution."""
    branches = run_branching(rho, noise)
    probs = np.array([p for p, _ in branches])
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(branches), size=shots, p=probs / probs.sum())
    return [branches[i][1] for i in idx]


def sample_run(rho, noise=None, seed=0):
    return sample_runs(rho, noise, 1, seed)[0]


def crosses_cut(step):
    """True if a step acts jointly on qubits held by different nodes."""
    owners = {node for node, qs in NODES.items() for q in step.qubits if q in qs}
    return len(owners) > 1
