"""Bootstrap intervals and the likelihood-ratio consistency test.

Every resample ``i`` draws from its own generator seeded by
``SeedSequence([seed, i])``, so results do not depend on the number of workers
or the order in which resamples finish.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .qlinalg import CNOT, DimensionError, entanglement_fidelity
from .tomography import (
    CountsDataset,
    EmptyDatasetError,
    MLOptions,
    linear_coefficients,
    linear_fidelity,
    log_likelihood,
    ml_estimate,
    povm_elements,
    simulate_dataset,
)


def resample_rng(seed, index):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def _map(fn, indices, threads):
    """Evaluate ``fn`` over ``indices`` and return results in index order."""
    if threads is None or threads <= 1 or len(indices) < 2:
        return [fn(i) for i in indices]
    from joblib import Parallel, delayed

    chunks = np.array_split(np.asarray(indices), min(threads * 4, len(indices)))
    parts = Parallel(n_jobs=threads)(delayed(_run_chunk)(fn, c.tolist()) for c in chunks)
    return [r for part in parts for r in part]


def _run_chunk(fn, idx):
    return [fn(i) for i in idx]


@dataclass(frozen=True)
class BootstrapResult:
    estimates: np.ndarray
    point_estimate: float
    method: str
    seed: int
    converged: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        est = np.asarray(self.estimates, dtype=float)
        if est.size == 0 or not np.all(np.isfinite(est)):
            raise ValueError("bootstrap estimates must be nonempty and finite")
        if self.method not in ("parametric", "nonparametric"):
            raise ValueError(f"unknown bootstrap method {self.method!r}")
        object.__setattr__(self, "estimates", est)

    @property
    def n_nonconverged(self):
        return 0 if self.converged is None else int(np.sum(~np.asarray(self.converged)))

    def histogram(self, bins=40):
        counts, edges = np.histogram(self.estimates, bins=bins)
        return edges, counts

    def to_json(self):
        return {
            "method": self.method,
            "seed": self.seed,
            "point_estimate": self.point_estimate,
            "estimates": self.estimates.tolist(),
            "n_nonconverged": self.n_nonconverged,
        }


@dataclass(frozen=True)
class ConfidenceInterval:
    low: float
    high: float
    level: float

    def __post_init__(self):
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")
        if self.low > self.high:
            raise ValueError("low > high")

    @property
    def width(self):
        return self.high - self.low

    def contains(self, x):
        return self.low <= x <= self.high

    def to_json(self):
        return {"low": self.low, "high": self.high, "level": self.level}


@dataclass(frozen=True)
class LrTestResult:
    lambda_observed: float
    lambda_boot_mean: float
    lambda_boot_sd: float
    z: float
    lambda_boot: np.ndarray = field(repr=False, default=None)
    n_nonconverged: int = 0

    def to_json(self):
        return {
            "lambda_observed": self.lambda_observed,
            "lambda_boot_mean": self.lambda_boot_mean,
            "lambda_boot_sd": self.lambda_boot_sd,
            "z": self.z,
            "n_nonconverged": self.n_nonconverged,
        }


def parametric_bootstrap(chi_hat, design, readout, trials, n_resamples, seed,
                         options=MLOptions(), threads=1, target=CNOT):
    """Simulate from ``chi_hat``, refit by ML, and record the fidelity of each fit."""
    if n_resamples < 2:
        raise ValueError("need at least two resamples")
    povms = povm_elements(design, readout)

    def one(i):
        ds = simulate_dataset(chi_hat, design, readout, trials, resample_rng(seed, i))
        fit = ml_estimate(ds, povms, options)
        return fit.fidelity(target), fit.converged

    res = _map(one, list(range(n_resamples)), threads)
    return BootstrapResult(
        np.array([r[0] for r in res]),
        entanglement_fidelity(chi_hat, target),
        "parametric",
        int(seed),
        np.array([r[1] for r in res]),
    )


def resample_counts(data, rng):
    """Multinomial redraw of every (input, basis) cell from its observed frequencies."""
    nk, nb = data.trials.shape
    if np.any(data.trials == 0):
        raise EmptyDatasetError("cannot resample empty experiments")
    f = data.frequencies().reshape(nk, nb, 4)
    counts = rng.multinomial(data.trials, f)
    return CountsDataset(data.design, counts.reshape(nk, 4 * nb), data.trials)


def nonparametric_bootstrap(data, povms, n_resamples, seed, target=CNOT, threads=1):
    """Resample trials within each cell and apply the linear estimator."""
    if n_resamples < 2:
        raise ValueError("need at least two resamples")
    coeffs = linear_coefficients(data.design, povms, target)

    def one(i):
        return linear_fidelity(resample_counts(data, resample_rng(seed, i)), povms, coefficients=coeffs)

    est = _map(one, list(range(n_resamples)), threads)
    return BootstrapResult(
        np.array(est), linear_fidelity(data, povms, coefficients=coeffs), "nonparametric", int(seed)
    )


def basic_bootstrap_ci(point, boots, level=0.95):
    """``[2F - f_(1-a), 2F - f_a]`` with ``a = (1-level)/2``; type-7 quantiles."""
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    est = boots.estimates if isinstance(boots, BootstrapResult) else np.asarray(boots, dtype=float)
    if est.size == 0:
        raise ValueError("no bootstrap estimates")
    a = (1 - level) / 2
    lo_q, hi_q = np.quantile(est, [a, 1 - a], method="linear")
    return ConfidenceInterval(float(2 * point - hi_q), float(2 * point - lo_q), level)


def unrestricted_loglik(data):
    """``sum n_kl ln(n_kl / N_k)`` with ``0 ln 0 = 0``."""
    n = data.counts.astype(float)
    f = data.frequencies()
    m = n > 0
    return float(np.sum(n[m] * np.log(f[m])))


LAMBDA_SLACK = 1e-6


def lr_statistic(data, chi_hat, povms):
    """``lambda = 2 (L_unrestricted - L(chi_hat))``."""
    chi_hat = np.asarray(chi_hat)
    if chi_hat.shape != (16, 16) or np.asarray(povms).shape[0] != data.counts.shape[1]:
        raise DimensionError("process estimate or POVM family does not match the dataset")
    lam = 2.0 * (unrestricted_loglik(data) - log_likelihood(chi_hat, data, povms))
    if lam < -LAMBDA_SLACK:
        raise ValueError(f"negative likelihood-ratio statistic {lam:.3g}")
    return lam


def lr_test(data, chi_hat, design, readout, n_boot, seed, options=MLOptions(), threads=1):
    """z-score of the observed ``lambda`` within its parametric null distribution.

    Each null resample is simulated from ``chi_hat`` with the observed trial
    numbers and refitted by ML before its ``lambda`` is evaluated.
    """
    if n_boot < 100:
        raise ValueError("n_boot must be >= 100")
    povms = povm_elements(design, readout)
    lam_obs = lr_statistic(data, chi_hat, povms)

    def one(i):
        ds = simulate_dataset(chi_hat, design, readout, data.trials, resample_rng(seed, i))
        fit = ml_estimate(ds, povms, options)
        return lr_statistic(ds, fit.choi, povms), fit.converged

    res = _map(one, list(range(n_boot)), threads)
    lam = np.array([r[0] for r in res])
    mean = float(lam.mean())
    sd = float(lam.std(ddof=1))
    z = (lam_obs - mean) / sd if sd > 0 else math.copysign(math.inf, lam_obs - mean)
    return LrTestResult(lam_obs, mean, sd, z, lam, int(sum(not r[1] for r in res)))


def drift_dataset(noise, design, readout, trials, seed, order="random"):
    """Dataset from the protocol with drifting pulse areas on a persistent trial clock."""
    if noise.drift is None:
        raise ValueError("noise configuration has no drift profile")
    return simulate_dataset(noise, design, readout, trials, seed, order=order)
