"""Dense linear algebra for small quantum systems.

Matrices are plain complex ``numpy`` arrays. Tensor products put the first
factor on the most significant index, and Choi matrices carry the reference
copy first::

    chi = (I (x) E)(|Phi+><Phi+|),   Tr(chi) = 1,   Tr_2(chi) = I/d

so a process acts as ``E(rho) = d Tr_1[chi (rho^T (x) I)]``.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import reduce

import numpy as np

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = 1e-10
TP_TOL = 1e-8

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS_1Q = {"I": I2, "X": X, "Y": Y, "Z": Z}

CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)


class DimensionError(ValueError):
    """Operands have incompatible shapes."""


class InvalidStateError(ValueError):
    """A matrix fails the density-matrix or Choi-matrix checks."""


class RankDeficientError(ValueError):
    """An operator set does not span the full operator space."""

    def __init__(self, msg, rank):
        super().__init__(msg)
        self.rank = rank


def kron(*ops):
    """Kronecker product of any number of matrices, first factor most significant."""
    if not ops:
        raise ValueError("kron needs at least one operand")
    return reduce(np.kron, [np.asarray(o, dtype=complex) for o in ops])


def allclose(a, b, atol):
    """Entrywise comparison with an explicit absolute tolerance."""
    a = np.asarray(a)
    b = np.asarray(b)
    return a.shape == b.shape and bool(np.max(np.abs(a - b), initial=0.0) <= atol)


def dagger(m):
    return np.conjugate(np.transpose(m))


def ket(*bits):
    """Computational basis ket ``|b0 b1 ...>`` with b0 most significant."""
    v = np.zeros(2 ** len(bits), dtype=complex)
    v[int("".join(str(b) for b in bits), 2)] = 1.0
    return v


def projector(psi):
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    return np.outer(psi, psi.conj())


def partial_trace(m, dims, which):
    """Trace out one factor of a bipartite operator.

    :param m: ``(d1*d2) x (d1*d2)`` matrix
    :param dims: ``(d1, d2)``
    :param which: ``"first"`` (returns d2 x d2) or ``"second"`` (returns d1 x d1)
    """
    d1, d2 = dims
    m = np.asarray(m)
    if m.shape != (d1 * d2, d1 * d2):
        raise DimensionError(f"matrix of shape {m.shape} is not {d1 * d2}x{d1 * d2}")
    t = m.reshape(d1, d2, d1, d2)
    if which == "first":
        return np.einsum("ijik->jk", t)
    if which == "second":
        return np.einsum("ijkj->ik", t)
    raise ValueError(f"which must be 'first' or 'second', got {which!r}")


def check_density_matrix(rho, tol=HERMITIAN_TOL):
    """Raise :class:`InvalidStateError` unless ``rho`` is a valid density matrix."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidStateError(f"density matrix must be square, got {rho.shape}")
    herm = np.max(np.abs(rho - dagger(rho)), initial=0.0)
    if herm > tol:
        raise InvalidStateError(f"not Hermitian (deviation {herm:.3g})")
    tr = np.trace(rho)
    if abs(tr - 1) > TRACE_TOL:
        raise InvalidStateError(f"trace {tr.real:.12g} != 1")
    lmin = np.linalg.eigvalsh((rho + dagger(rho)) / 2).min()
    if lmin < -PSD_TOL:
        raise InvalidStateError(f"negative eigenvalue {lmin:.3g}")
    return rho


def is_density_matrix(rho, tol=HERMITIAN_TOL):
    try:
        check_density_matrix(rho, tol)
    except InvalidStateError:
        return False
    return True


def check_unitary(u, tol=1e-10):
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise DimensionError(f"unitary must be square, got {u.shape}")
    dev = np.max(np.abs(dagger(u) @ u - np.eye(u.shape[0])))
    if dev > tol:
        raise ValueError(f"matrix is not unitary (deviation {dev:.3g})")
    return u


def choi_dim(chi):
    n = np.asarray(chi).shape[0]
    d = int(round(np.sqrt(n)))
    if d * d != n or np.asarray(chi).shape != (n, n):
        raise DimensionError(f"Choi matrix shape {np.asarray(chi).shape} is not d^2 x d^2")
    return d


def check_choi(chi, tol=TP_TOL):
    """Raise unless ``chi`` is a normalized, positive, trace-preserving Choi matrix."""
    d = choi_dim(chi)
    check_density_matrix(chi)
    dev = np.max(np.abs(partial_trace(chi, (d, d), "second") - np.eye(d) / d))
    if dev > tol:
        raise InvalidStateError(f"not trace preserving (deviation {dev:.3g})")
    return chi


def max_entangled(d):
    return np.eye(d, dtype=complex).reshape(-1) / np.sqrt(d)


def choi_from_unitary(u):
    u = check_unitary(u)
    d = u.shape[0]
    psi = kron(np.eye(d), u) @ max_entangled(d)
    return projector(psi)


def choi_from_channel(channel, d):
    """Choi matrix of a linear map given as a callable on ``d x d`` matrices."""
    chi = np.zeros((d * d, d * d), dtype=complex)
    for i, j in itertools.product(range(d), repeat=2):
        eij = np.zeros((d, d), dtype=complex)
        eij[i, j] = 1.0
        chi += np.kron(eij, channel(eij))
    return chi / d


def apply_choi(chi, rho):
    d = choi_dim(chi)
    rho = np.asarray(rho)
    if rho.shape != (d, d):
        raise DimensionError(f"state of shape {rho.shape} does not match process dimension {d}")
    return d * partial_trace(chi @ np.kron(rho.T, np.eye(d)), (d, d), "first")


def entanglement_fidelity(chi, u):
    """``<Phi+|(I (x) U^dag) chi (I (x) U)|Phi+>``."""
    d = choi_dim(chi)
    u = np.asarray(u)
    if u.shape != (d, d):
        raise DimensionError(f"target of shape {u.shape} does not match process dimension {d}")
    psi = kron(np.eye(d), u) @ max_entangled(d)
    f = psi.conj() @ chi @ psi
    return float(f.real)


def pauli_labels(n_qubits=2):
    return ["".join(p) for p in itertools.product("IXYZ", repeat=n_qubits)]


def pauli_basis(n_qubits=2):
    """Pauli products in lexicographic order over ``I, X, Y, Z`` (``P_0 = I...I``)."""
    return [kron(*(PAULIS_1Q[c] for c in label)) for label in pauli_labels(n_qubits)]


def pauli_transfer_matrix(chi):
    """Real PTM with ``T_ij = Tr[chi (P_j^T (x) P_i)] = Tr[P_i E(P_j)] / d``."""
    d = choi_dim(chi)
    paulis = pauli_basis(int(round(np.log2(d))))
    ptm = np.empty((d * d, d * d))
    for j, pj in enumerate(paulis):
        out = apply_choi(chi, pj)
        for i, pi in enumerate(paulis):
            ptm[i, j] = np.trace(pi @ out).real / d
    return ptm


def choi_from_ptm(ptm):
    ptm = np.asarray(ptm)
    d = int(round(np.sqrt(ptm.shape[0])))
    paulis = pauli_basis(int(round(np.log2(d))))
    chi = np.zeros((d * d, d * d), dtype=complex)
    for i, pi in enumerate(paulis):
        for j, pj in enumerate(paulis):
            if ptm[i, j] != 0:
                chi += ptm[i, j] * np.kron(pj.T, pi)
    return chi / d**2


def vec(m):
    """Row-major vectorization; ``<<A|B>> = vec(A)^dag vec(B) = Tr(A^dag B)``."""
    return np.asarray(m, dtype=complex).reshape(-1)


@dataclass(frozen=True)
class OperatorBasisDuals:
    """An operator family, its duals under ``S = sum_k |A_k>><<A_k|``, and ``S``."""

    originals: np.ndarray
    duals: np.ndarray
    gram: np.ndarray
    condition_number: float

    def coefficients(self, a):
        """Expansion coefficients ``c_k = <<dual_k|A>>`` with ``A = sum_k c_k A_k``."""
        return self.duals.reshape(len(self.duals), -1).conj() @ vec(a)

    def reconstruction(self):
        """``sum_k |A_k>><<dual_k|``; the identity superoperator for a spanning set."""
        orig = self.originals.reshape(len(self.originals), -1)
        dual = self.duals.reshape(len(self.duals), -1)
        return orig.T @ dual.conj()


def dual_basis(operators, rank_tol=1e-10):
    ops = np.asarray(operators, dtype=complex)
    n, d, d2 = ops.shape
    if d != d2:
        raise DimensionError("operators must be square")
    vecs = ops.reshape(n, d * d)
    gram = vecs.T @ vecs.conj()
    sv = np.linalg.svd(gram, compute_uv=False)
    rank = int(np.sum(sv > rank_tol * sv[0]))
    if rank < d * d:
        raise RankDeficientError(
            f"operators span a space of rank {rank}, need {d * d}", rank
        )
    duals = np.linalg.solve(gram, vecs.T).T.reshape(n, d, d)
    return OperatorBasisDuals(ops, duals, gram, float(sv[0] / sv[-1]))


@dataclass(frozen=True)
class CptpReport:
    min_eigenvalue: float
    tp_deviation: float

    def ok(self, psd_tol=PSD_TOL, tp_tol=TP_TOL):
        return self.min_eigenvalue >= -psd_tol and self.tp_deviation <= tp_tol


def cptp_diagnostics(chi):
    """Minimum eigenvalue of ``chi`` and max deviation of ``Tr_2 chi`` from ``I/d``."""
    d = choi_dim(chi)
    herm = (chi + dagger(chi)) / 2
    lmin = float(np.linalg.eigvalsh(herm).min())
    tp = float(np.max(np.abs(partial_trace(chi, (d, d), "second") - np.eye(d) / d)))
    return CptpReport(lmin, tp)


def matrix_to_json(m):
    m = np.asarray(m, dtype=complex)
    r, c = m.shape
    return {
        "rows": r,
        "cols": c,
        "re": [float(x) for x in m.real.reshape(-1)],
        "im": [float(x) for x in m.imag.reshape(-1)],
    }


def matrix_from_json(obj):
    if isinstance(obj, str):
        obj = json.loads(obj)
    r, c = int(obj["rows"]), int(obj["cols"])
    re = np.asarray(obj["re"], dtype=float)
    im = np.asarray(obj.get("im", np.zeros(r * c)), dtype=float)
    if re.size != r * c or im.size != r * c:
        raise DimensionError(f"expected {r * c} entries, got {re.size}/{im.size}")
    return (re + 1j * im).reshape(r, c)


def ptm_to_csv(ptm, fh):
    """Write a PTM as CSV; rows are output Paulis, columns input Paulis."""
    ptm = np.asarray(ptm)
    labels = pauli_labels(int(round(np.log2(np.sqrt(ptm.shape[0])))))
    fh.write("out\\in," + ",".join(labels) + "\n")
    for label, row in zip(labels, ptm):
        fh.write(label + "," + ",".join(f"{x:.17g}" for x in row) + "\n")
