"""Pulse-level constructions of the composite trapped-ion gates.

Each composite gate is an ordered list of :class:`GatePulse` objects that is
compiled to a unitary on a small register. Pulse kinds:

``carrier_rotation``
    co-propagating rotation ``R(theta, phi)``
``motion_sensitive_rotation``
    rotation driven by the motion-sensitive beams, ``R(theta, phi + phi_int)``
``ms``
    Molmer-Sorensen interaction ``exp(-i theta/2 s(phi_int) (x) s(phi_int))``
    with ``s(phi) = cos(phi) X + sin(phi) Y``; ``theta = pi/2`` is the
    maximally entangling gate, ``theta = 3 pi/2`` the opposite detuning sign
``z_phase``
    software phase shift ``R_Z(theta)``

The wrapper phases in ``WRAPPER_PHASES`` were fixed by requiring the compiled
sequences to equal G+/G-, the Phi+ preparation and CNOT.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .qlinalg import CNOT, X, Y, check_unitary, dagger, kron, ket, max_entangled

TWO_PI = 2 * math.pi

# Phase table for the composite gates, in radians.
WRAPPER_PHASES = {
    # motion-sensitive pi/2 wrappers around the MS pulse (offset from phi_int)
    "phase_gate_pre": math.pi / 2,
    "phase_gate_post": 3 * math.pi / 2,
    # co-propagating pi/2 wrappers around G- for the Bell-state gate F
    "bell_pre": 0.0,
    "bell_post": 0.0,
    # co-propagating pi/2 pulses on the CNOT target around G+
    "cnot_pre": math.pi / 2,
    "cnot_post": 0.0,
}
BELL_Z_QUBIT = 0  # F ends with R_Z(pi/2) on the first qubit of the pair
CNOT_Z_CONTROL = math.pi / 2
CNOT_Z_TARGET = -math.pi / 2

PULSE_KINDS = ("carrier_rotation", "motion_sensitive_rotation", "ms", "z_phase")


def rotation(theta, phi):
    c = math.cos(theta / 2)
    s = math.sin(theta / 2)
    return np.array(
        [[c, -1j * np.exp(-1j * phi) * s], [-1j * np.exp(1j * phi) * s, c]],
        dtype=complex,
    )


def rz(alpha):
    return np.diag([np.exp(-0.5j * alpha), np.exp(0.5j * alpha)])


def sigma_phi(phi):
    return math.cos(phi) * X + math.sin(phi) * Y


def ms_gate(interferometric_phase=0.0, theta=math.pi / 2):
    """MS unitary ``exp(-i theta/2 s_phi (x) s_phi)``; uses ``(s_phi (x) s_phi)^2 = I``."""
    s = sigma_phi(interferometric_phase)
    ss = np.kron(s, s)
    return math.cos(theta / 2) * np.eye(4) - 1j * math.sin(theta / 2) * ss


@dataclass(frozen=True)
class GatePulse:
    kind: str
    theta: float
    phi: float = 0.0
    targets: tuple = (0,)
    interferometric_phase: float = 0.0

    def __post_init__(self):
        if self.kind not in PULSE_KINDS:
            raise ValueError(f"unknown pulse kind {self.kind!r}")
        object.__setattr__(self, "theta", float(self.theta) % TWO_PI)
        object.__setattr__(self, "phi", float(self.phi) % TWO_PI)
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        if len(set(self.targets)) != len(self.targets):
            raise ValueError(f"pulse targets must be distinct, got {self.targets}")
        want = 2 if self.kind == "ms" else 1
        if len(self.targets) != want:
            raise ValueError(f"{self.kind} pulse acts on {want} qubit(s), got {self.targets}")

    def local_unitary(self, over_rotation=0.0):
        """Unitary on the pulse's own qubits.

        ``over_rotation`` scales the pulse area of carrier rotations only.
        """
        if self.kind == "carrier_rotation":
            return rotation(self.theta * (1 + over_rotation), self.phi)
        if self.kind == "motion_sensitive_rotation":
            return rotation(self.theta, self.phi + self.interferometric_phase)
        if self.kind == "ms":
            return ms_gate(self.interferometric_phase, self.theta)
        return rz(self.theta)

    def to_json(self):
        return {
            "kind": self.kind,
            "theta": self.theta,
            "phi": self.phi,
            "targets": list(self.targets),
            "interferometric_phase": self.interferometric_phase,
        }

    @classmethod
    def from_json(cls, obj):
        return cls(
            kind=obj["kind"],
            theta=obj["theta"],
            phi=obj.get("phi", 0.0),
            targets=tuple(obj.get("targets", (0,))),
            interferometric_phase=obj.get("interferometric_phase", 0.0),
        )


def embed(local, targets, n_qubits):
    """Lift an operator on ``targets`` (in the given order) to an ``n_qubits`` register."""
    targets = list(targets)
    k = len(targets)
    if any(t < 0 or t >= n_qubits for t in targets):
        raise ValueError(f"targets {targets} outside register of {n_qubits} qubits")
    rest = [q for q in range(n_qubits) if q not in targets]
    full = np.kron(local, np.eye(2 ** (n_qubits - k)))
    # full acts on order targets + rest; permute axes back to 0..n-1
    order = targets + rest
    perm = np.argsort(order)
    t = full.reshape([2] * (2 * n_qubits))
    t = t.transpose(list(perm) + [n_qubits + p for p in perm])
    return t.reshape(2**n_qubits, 2**n_qubits)


@dataclass(frozen=True)
class CompositeGate:
    label: str
    pulses: tuple = field(default_factory=tuple)
    n_qubits: int = 2

    def unitary(self, over_rotation=0.0):
        u = np.eye(2**self.n_qubits, dtype=complex)
        for p in self.pulses:
            u = embed(p.local_unitary(over_rotation), p.targets, self.n_qubits) @ u
        return u

    def retarget(self, mapping, n_qubits):
        """Same pulses with qubit indices renamed through ``mapping``."""
        pulses = tuple(
            replace(p, targets=tuple(mapping[t] for t in p.targets)) for p in self.pulses
        )
        return CompositeGate(self.label, pulses, n_qubits)

    def to_json(self):
        return [p.to_json() for p in self.pulses]


def _wrapped(phases):
    table = dict(WRAPPER_PHASES)
    if phases:
        table.update(phases)
    return table


def phase_gate_pulses(sign, interferometric_phase=0.0, phases=None):
    """Motion-sensitive pi/2 wrappers on both qubits around one MS pulse."""
    if sign not in ("+", "-"):
        raise ValueError(f"sign must be '+' or '-', got {sign!r}")
    tab = _wrapped(phases)
    ms_theta = math.pi / 2 if sign == "+" else 3 * math.pi / 2
    pre = [
        GatePulse("motion_sensitive_rotation", math.pi / 2, tab["phase_gate_pre"], (q,), interferometric_phase)
        for q in (0, 1)
    ]
    post = [
        GatePulse("motion_sensitive_rotation", math.pi / 2, tab["phase_gate_post"], (q,), interferometric_phase)
        for q in (0, 1)
    ]
    ms = GatePulse("ms", ms_theta, 0.0, (0, 1), interferometric_phase)
    return pre + [ms] + post


def phase_gate(sign, interferometric_phase=0.0, phases=None):
    return CompositeGate(f"G{sign}", tuple(phase_gate_pulses(sign, interferometric_phase, phases))).unitary()


def bell_gate_pulses(interferometric_phase=0.0, phases=None):
    tab = _wrapped(phases)
    pre = [GatePulse("carrier_rotation", math.pi / 2, tab["bell_pre"], (q,)) for q in (0, 1)]
    post = [GatePulse("carrier_rotation", math.pi / 2, tab["bell_post"], (q,)) for q in (0, 1)]
    z = GatePulse("z_phase", math.pi / 2, 0.0, (BELL_Z_QUBIT,))
    return pre + phase_gate_pulses("-", interferometric_phase, phases) + post + [z]


def bell_gate(interferometric_phase=0.0, phases=None):
    return CompositeGate("F", tuple(bell_gate_pulses(interferometric_phase, phases)))


def bell_gate_f(interferometric_phase=0.0, phases=None):
    """Unitary of the Bell-state gate F; maps ``|11>`` to Phi+ up to a global phase."""
    return bell_gate(interferometric_phase, phases).unitary()


def cnot_pulses(interferometric_phase=0.0, phases=None):
    """CNOT with control qubit 0 and target qubit 1."""
    tab = _wrapped(phases)
    return (
        [GatePulse("carrier_rotation", math.pi / 2, tab["cnot_pre"], (1,))]
        + phase_gate_pulses("+", interferometric_phase, phases)
        + [
            GatePulse("carrier_rotation", math.pi / 2, tab["cnot_post"], (1,)),
            GatePulse("z_phase", CNOT_Z_CONTROL, 0.0, (0,)),
            GatePulse("z_phase", CNOT_Z_TARGET, 0.0, (1,)),
        ]
    )


def cnot_gate(interferometric_phase=0.0, phases=None):
    return CompositeGate("CNOT", tuple(cnot_pulses(interferometric_phase, phases)))


def composite_cnot(interferometric_phase=0.0, phases=None):
    return cnot_gate(interferometric_phase, phases).unitary()


@dataclass(frozen=True)
class PhaseComparison:
    equal: bool
    deviation: float
    phase: float


def equal_up_to_global_phase(u, v, tol=1e-10):
    """Align ``u`` to ``v`` by the phase maximizing ``|Tr(u^dag v)|`` and compare entrywise."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape:
        raise ValueError(f"shape mismatch {u.shape} vs {v.shape}")
    alpha = float(np.angle(np.trace(dagger(u) @ v)))
    dev = float(np.max(np.abs(np.exp(1j * alpha) * u - v)))
    return PhaseComparison(dev <= tol, dev, alpha)


def concurrence_pure(psi):
    """Concurrence ``2|ad - bc|`` of a normalized two-qubit pure state."""
    a, b, c, d = np.asarray(psi).reshape(4)
    return float(2 * abs(a * d - b * c))


G_PLUS = np.diag([1, 1j, 1j, 1]).astype(complex)
G_MINUS = np.diag([1, -1j, -1j, 1]).astype(complex)
PHI_PLUS = max_entangled(2)


def verify_gates(n_random=50, seed=0, phases=None, tol=1e-10, phase_tol=1e-9):
    """Run the composite-gate checks; returns a list of ``(name, passed, deviation)``."""
    rng = np.random.default_rng(seed)
    results = []

    for sign, target in (("+", G_PLUS), ("-", G_MINUS)):
        cmp = equal_up_to_global_phase(phase_gate(sign, 0.0, phases), target, tol)
        results.append((f"phase_gate_{sign}", cmp.equal, cmp.deviation))

    worst = 0.0
    for sign in ("+", "-"):
        ref = phase_gate(sign, 0.0, phases)
        for phi in rng.uniform(0, TWO_PI, n_random):
            worst = max(worst, equal_up_to_global_phase(phase_gate(sign, phi, phases), ref).deviation)
    results.append(("interferometric_phase_independence", worst <= phase_tol, worst))

    cmp = equal_up_to_global_phase(composite_cnot(0.0, phases), CNOT, tol)
    results.append(("composite_cnot", cmp.equal, cmp.deviation))

    out = bell_gate_f(0.0, phases) @ ket(1, 1)
    dev = abs(1 - abs(PHI_PLUS.conj() @ out) ** 2)
    results.append(("bell_gate_phi_plus", bool(dev <= tol), float(dev)))

    worst = 0.0
    for g in (bell_gate(0.0, phases), cnot_gate(0.0, phases)):
        u = g.unitary()
        worst = max(worst, float(np.max(np.abs(dagger(u) @ u - np.eye(4)))))
    results.append(("composite_unitarity", worst <= tol, worst))
    return results


__all__ = [
    "GatePulse",
    "CompositeGate",
    "rotation",
    "rz",
    "ms_gate",
    "phase_gate",
    "bell_gate",
    "bell_gate_f",
    "cnot_gate",
    "composite_cnot",
    "equal_up_to_global_phase",
    "concurrence_pure",
    "verify_gates",
    "check_unitary",
    "kron",
]
