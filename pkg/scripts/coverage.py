"""Basic-bootstrap CI coverage on synthetic datasets from a fixed process."""
import argparse
import json
import time
from dataclasses import asdict, dataclass

import numpy as np

from qgt.protocol import NoiseConfig, induced_choi
from qgt.qlinalg import CNOT, entanglement_fidelity
from qgt.stats import basic_bootstrap_ci, parametric_bootstrap
from qgt.tomography import MLOptions, ReadoutModel, design_standard, ml_estimate, povm_elements, simulate_dataset


@dataclass
class CoverageConfig:
    n_datasets: int = 200
    trials: int = 300
    resamples: int = 200
    level: float = 0.95
    tol: float = 1e-8
    seed: int = 600
    threads: int = 1


def run(cfg):
    design, readout = design_standard(), ReadoutModel.reference()
    povms = povm_elements(design, readout)
    chi = induced_choi(NoiseConfig.table1())
    truth = entanglement_fidelity(chi, CNOT)
    opts = MLOptions(tol=cfg.tol)
    rows = []
    for s in range(cfg.n_datasets):
        data = simulate_dataset(chi, design, readout, cfg.trials, seed=cfg.seed + s)
        fit = ml_estimate(data, povms, opts)
        boot = parametric_bootstrap(fit.choi, design, readout, cfg.trials, cfg.resamples,
                                    seed=10 * cfg.seed + s, options=opts, threads=cfg.threads)
        ci = basic_bootstrap_ci(fit.fidelity(), boot.estimates, cfg.level)
        rows.append((fit.fidelity(), ci.low, ci.high, ci.contains(truth)))
    arr = np.array(rows, dtype=float)
    return {"config": asdict(cfg), "truth": truth, "coverage": float(arr[:, 3].mean()),
            "mean_width": float((arr[:, 2] - arr[:, 1]).mean()), "mean_estimate": float(arr[:, 0].mean())}


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    for name, default in asdict(CoverageConfig()).items():
        ap.add_argument(f"--{name.replace('_', '-')}", type=type(default), default=default)
    cfg = CoverageConfig(**vars(ap.parse_args()))
    t0 = time.time()
    out = run(cfg)
    out["seconds"] = time.time() - t0
    print(json.dumps(out, indent=1))
