"""RρR iteration kernels.

The numba path loops over the factorized structure of the data operators
(``rho_k^T (x) E_l``) and is used whenever numba imports. The numpy path does the
same arithmetic with ``einsum`` and is used otherwise, or when
``QGT_DISABLE_NUMBA=1`` is set.
"""
from __future__ import annotations

import os

import numpy as np

try:
    if os.environ.get("QGT_DISABLE_NUMBA", "") not in ("", "0"):
        raise ImportError("numba disabled by environment")
    import numba

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

# accept a step if it lowers L by no more than this relative amount (round-off)
MONOTONE_SLACK = 1e-13
# dilution factors below this are treated as a stationary point
MIN_DILUTION = 1e-10


# ---------------------------------------------------------------- numpy path
def probabilities_np(chi, rho, povm):
    """``p_kl = d Tr[chi (rho_k^T (x) E_l)]`` for stacks ``rho (K,d,d)`` and ``povm (L,d,d)``."""
    d = rho.shape[1]
    c = chi.reshape(d, d, d, d)
    sig = np.einsum("iajb,kij->kab", c, rho)
    return d * np.einsum("kab,lba->kl", sig, povm).real


def r_operator_np(w, rho, povm):
    """``R = sum_kl w_kl rho_k^T (x) E_l``."""
    d = rho.shape[1]
    f = np.einsum("kl,lab->kab", w, povm)
    return np.einsum("kji,kab->iajb", rho, f).reshape(d * d, d * d)


def loglik_np(n, p):
    m = n > 0
    if np.any(p[m] <= 0):
        return -np.inf
    return float(np.sum(n[m] * np.log(p[m])))


def tp_step_np(chi, r):
    """``Lambda R chi R Lambda`` renormalized, with ``Lambda = (d Tr_2 RchiR)^(-1/2) (x) I``."""
    dd = chi.shape[0]
    d = int(round(np.sqrt(dd)))
    m = r @ chi @ r
    x = d * np.einsum("ajbj->ab", m.reshape(d, d, d, d))
    ev, v = np.linalg.eigh((x + x.conj().T) / 2)
    li = (v * ev**-0.5) @ v.conj().T
    new = np.einsum("ac,cjdk,db->ajbk", li, m.reshape(d, d, d, d), li).reshape(dd, dd)
    new = (new + new.conj().T) / 2
    return new / np.trace(new).real


def rrr_loop_np(rho, povm, n, chi, maxit, tol, dilution, trace):
    d = rho.shape[1]
    total = n.sum()
    eye = np.eye(d * d)
    p = probabilities_np(chi, rho, povm)
    ll = loglik_np(n, p)
    trace[0] = ll
    mask = n > 0
    converged = False
    fallbacks = 0
    it = 0
    while it < maxit:
        w = np.zeros_like(n)
        w[mask] = n[mask] / p[mask]
        r = r_operator_np(w, rho, povm)
        eps = dilution
        while True:
            ru = r if eps == 0 else (eye + eps * r * (d / total)) / (1 + eps)
            new = tp_step_np(chi, ru)
            p_new = probabilities_np(new, rho, povm)
            ll_new = loglik_np(n, p_new)
            if ll_new >= ll - MONOTONE_SLACK * abs(ll) or eps == MIN_DILUTION:
                break
            eps = 1.0 if eps == 0 else max(eps / 2, MIN_DILUTION)
            fallbacks += 1
        it += 1
        if ll_new < ll - MONOTONE_SLACK * abs(ll):
            # no ascent direction found: stationary
            converged = True
            trace[it] = ll
            break
        gain = ll_new - ll
        chi, p, ll = new, p_new, ll_new
        trace[it] = ll
        if abs(gain) < tol * abs(ll):
            converged = True
            break
    return chi, it, ll, converged, fallbacks


# ---------------------------------------------------------------- numba path
if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _probs_nb(chi, rho, povm, out):
        k_n, d = rho.shape[0], rho.shape[1]
        sig = np.zeros((d, d), dtype=np.complex128)
        for k in range(k_n):
            sig[:, :] = 0
            for i in range(d):
                for j in range(d):
                    r = rho[k, i, j]
                    if r != 0:
                        for a in range(d):
                            for b in range(d):
                                sig[a, b] += chi[i * d + a, j * d + b] * r
            for l in range(povm.shape[0]):
                s = 0.0
                for a in range(d):
                    for b in range(d):
                        s += (sig[a, b] * povm[l, b, a]).real
                out[k, l] = d * s

    @numba.njit(cache=True)
    def _rmat_nb(w, rho, povm, out):
        k_n, d = rho.shape[0], rho.shape[1]
        out[:, :] = 0
        f = np.zeros((d, d), dtype=np.complex128)
        for k in range(k_n):
            f[:, :] = 0
            for l in range(povm.shape[0]):
                wl = w[k, l]
                if wl != 0:
                    for a in range(d):
                        for b in range(d):
                            f[a, b] += wl * povm[l, a, b]
            for i in range(d):
                for j in range(d):
                    r = rho[k, j, i]
                    if r != 0:
                        for a in range(d):
                            for b in range(d):
                                out[i * d + a, j * d + b] += r * f[a, b]

    @numba.njit(cache=True)
    def _ll_nb(n, p):
        s = 0.0
        for k in range(n.shape[0]):
            for l in range(n.shape[1]):
                if n[k, l] > 0:
                    if p[k, l] <= 0:
                        return -np.inf
                    s += n[k, l] * np.log(p[k, l])
        return s

    @numba.njit(cache=True)
    def _tp_step_nb(chi, r, d):
        m = r @ chi @ r
        dd = d * d
        x = np.zeros((d, d), dtype=np.complex128)
        for a in range(d):
            for b in range(d):
                s = 0j
                for j in range(d):
                    s += m[a * d + j, b * d + j]
                x[a, b] = s * d
        x = (x + x.conj().T) / 2
        ev, v = np.linalg.eigh(x)
        li = (v * (ev**-0.5)) @ v.conj().T
        lf = np.zeros((dd, dd), dtype=np.complex128)
        for a in range(d):
            for b in range(d):
                for j in range(d):
                    lf[a * d + j, b * d + j] = li[a, b]
        new = lf @ m @ lf
        new = (new + new.conj().T) / 2
        tr = 0.0
        for i in range(dd):
            tr += new[i, i].real
        return new / tr

    @numba.njit(cache=True)
    def _rrr_loop_nb(rho, povm, n, chi, maxit, tol, dilution, trace):
        k_n, d = rho.shape[0], rho.shape[1]
        l_n = povm.shape[0]
        dd = d * d
        total = n.sum()
        eye = np.eye(dd, dtype=np.complex128)
        p = np.empty((k_n, l_n))
        p_new = np.empty((k_n, l_n))
        _probs_nb(chi, rho, povm, p)
        ll = _ll_nb(n, p)
        trace[0] = ll
        w = np.zeros((k_n, l_n))
        r = np.zeros((dd, dd), dtype=np.complex128)
        converged = False
        fallbacks = 0
        it = 0
        new = chi
        ll_new = ll
        while it < maxit:
            for k in range(k_n):
                for l in range(l_n):
                    w[k, l] = n[k, l] / p[k, l] if n[k, l] > 0 else 0.0
            _rmat_nb(w, rho, povm, r)
            eps = dilution
            while True:
                if eps == 0:
                    ru = r
                else:
                    ru = (eye + eps * r * (d / total)) / (1 + eps)
                new = _tp_step_nb(chi, ru, d)
                _probs_nb(new, rho, povm, p_new)
                ll_new = _ll_nb(n, p_new)
                if ll_new >= ll - MONOTONE_SLACK * abs(ll) or eps == MIN_DILUTION:
                    break
                eps = 1.0 if eps == 0 else max(eps / 2, MIN_DILUTION)
                fallbacks += 1
            it += 1
            if ll_new < ll - MONOTONE_SLACK * abs(ll):
                converged = True
                trace[it] = ll
                break
            gain = ll_new - ll
            chi = new
            p[:, :] = p_new
            ll = ll_new
            trace[it] = ll
            if abs(gain) < tol * abs(ll):
                converged = True
                break
        return chi, it, ll, converged, fallbacks


def probabilities(chi, rho, povm):
    if HAVE_NUMBA:
        out = np.empty((rho.shape[0], povm.shape[0]))
        _probs_nb(np.ascontiguousarray(chi, dtype=np.complex128), rho, povm, out)
        return out
    return probabilities_np(chi, rho, povm)


def rrr_loop(rho, povm, n, chi, maxit, tol, dilution, trace, use_numba=None):
    """Run the iteration; returns ``(chi, iterations, loglik, converged, fallbacks)``."""
    use_numba = HAVE_NUMBA if use_numba is None else (use_numba and HAVE_NUMBA)
    rho = np.ascontiguousarray(rho, dtype=np.complex128)
    povm = np.ascontiguousarray(povm, dtype=np.complex128)
    n = np.ascontiguousarray(n, dtype=np.float64)
    chi = np.ascontiguousarray(chi, dtype=np.complex128)
    fn = _rrr_loop_nb if use_numba else rrr_loop_np
    return fn(rho, povm, n, chi, int(maxit), float(tol), float(dilution), trace)
