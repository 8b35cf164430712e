"""Noise channels on qubit registers.

All functions accept a density matrix or a stack of operators with shape
``(..., D, D)`` and act on the last two axes.
"""
from __future__ import annotations

import numpy as np


def _n_qubits(dim):
    n = int(round(np.log2(dim)))
    if 2**n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


def _subsystem(subsystem, n):
    if subsystem is None or subsystem == "all":
        return list(range(n))
    sub = sorted({int(q) for q in subsystem})
    if len(sub) != len(list(subsystem)) or not sub or sub[0] < 0 or sub[-1] >= n:
        raise ValueError(f"bad subsystem {subsystem!r} for {n} qubits")
    return sub


def depolarize(rho, eps, subsystem=None):
    """``rho -> (1-eps) rho + eps Tr_S(rho) (x) I_S/d_S`` on the qubits in ``subsystem``.

    ``subsystem=None`` (or ``"all"``) depolarizes the whole register.
    """
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"depolarizing strength {eps} outside [0, 1]")
    rho = np.asarray(rho, dtype=complex)
    dim = rho.shape[-1]
    n = _n_qubits(dim)
    sub = _subsystem(subsystem, n)
    if eps == 0.0:
        return rho.copy()
    k = len(sub)
    ds = 2**k
    batch = rho.shape[:-2]
    nb = len(batch)
    t = rho.reshape(batch + (2,) * (2 * n))
    src = [nb + q for q in sub] + [nb + n + q for q in sub]
    dst = list(range(t.ndim - 2 * k, t.ndim))
    moved = np.moveaxis(t, src, dst)
    rest = moved.shape[: t.ndim - 2 * k]
    reduced = np.trace(moved.reshape(rest + (ds, ds)), axis1=-2, axis2=-1)
    rep = reduced[..., None, None] * (np.eye(ds) / ds)
    rep = np.moveaxis(rep.reshape(rest + (2,) * (2 * k)), dst, src)
    return (1 - eps) * rho + eps * rep.reshape(rho.shape)


def excitation_count(n_qubits, subsystem):
    """Number of qubits in ``|1>`` among ``subsystem`` for every basis index."""
    idx = np.arange(2**n_qubits)
    return sum((idx >> (n_qubits - 1 - q)) & 1 for q in subsystem)


def dephase_collective(rho, strength, subsystem):
    """Collective z-dephasing with a Gaussian-distributed common phase.

    ``strength = (t/tau)^2`` gives single-qubit Ramsey contrast ``exp(-(t/tau)^2)``;
    coherences between states differing by ``m`` excitations decay as
    ``exp(-strength m^2)``.
    """
    rho = np.asarray(rho, dtype=complex)
    n = _n_qubits(rho.shape[-1])
    sub = _subsystem(subsystem, n)
    if strength == 0:
        return rho.copy()
    q = excitation_count(n, sub)
    weights = np.exp(-strength * (q[:, None] - q[None, :]) ** 2)
    return rho * weights


def bit_flip_measure(rho, qubit, outcome, flip_prob=0.0):
    """Unnormalized post-measurement state for a reported z outcome with misclassification."""
    rho = np.asarray(rho, dtype=complex)
    n = _n_qubits(rho.shape[-1])
    bits = (np.arange(2**n) >> (n - 1 - qubit)) & 1
    keep = (bits == outcome).astype(float)
    other = 1.0 - keep
    out = (1 - flip_prob) * rho * np.outer(keep, keep)
    if flip_prob:
        out = out + flip_prob * rho * np.outer(other, other)
    return out
