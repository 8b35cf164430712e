"""Command-line front end.

Exit codes: 0 success, 1 bad input or configuration, 2 ML non-convergence,
3 gate-check failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import budget as bud
from . import gates, io, protocol, stats, tomography
from .qlinalg import (
    CNOT,
    InvalidStateError,
    choi_from_unitary,
    entanglement_fidelity,
    ket,
    matrix_from_json,
    matrix_to_json,
    pauli_transfer_matrix,
    projector,
    ptm_to_csv,
)

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_GATES = 0, 1, 2, 3


class ConfigError(Exception):
    pass


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def _out_dir(args):
    os.makedirs(args.out_dir, exist_ok=True)
    return args.out_dir


def _manifest(args, configs=()):
    return io.RunManifest(
        command=args.command_name,
        config_paths=[c for c in configs if c],
        seed=getattr(args, "seed", None),
        argv=list(args.argv),
    )


def _readout(path):
    if path is None:
        return tomography.ReadoutModel.reference()
    try:
        return tomography.ReadoutModel.from_json(_load_json(path))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad readout model {path}: {exc}") from exc


def _noise(path):
    if path is None:
        return protocol.NoiseConfig()
    try:
        return protocol.NoiseConfig.from_json(_load_json(path))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad noise config {path}: {exc}") from exc


def _noise_from_spec(spec):
    if spec in (None, "noiseless"):
        return protocol.NoiseConfig()
    if spec == "table1":
        return protocol.NoiseConfig.table1()
    if isinstance(spec, dict):
        return protocol.NoiseConfig.from_json(spec)
    raise ConfigError(f"unknown noise specification {spec!r}")


# ------------------------------------------------------------------ gates
def cmd_gates_verify(args):
    phases = {}
    for item in args.perturb or []:
        key, _, val = item.partition("=")
        if key not in gates.WRAPPER_PHASES:
            raise ConfigError(f"unknown wrapper phase {key!r}")
        phases[key] = gates.WRAPPER_PHASES[key] + float(val)
    results = gates.verify_gates(n_random=args.n_random, seed=args.seed, phases=phases or None)
    report = [{"check": n, "passed": bool(p), "deviation": float(d)} for n, p, d in results]
    if args.json:
        sys.stdout.write(io.dumps(report))
    else:
        for r in report:
            print(f"{'PASS' if r['passed'] else 'FAIL'}  {r['check']:<36s} {r['deviation']:.3e}")
    out = _out_dir(args)
    man = _manifest(args)
    io.write_json(man.add(os.path.join(out, "gates_report.json")), report)
    io.write_json(man.add(os.path.join(out, "phase_table.json")), {**gates.WRAPPER_PHASES, **phases})
    man.write(out)
    return EXIT_OK if all(r["passed"] for r in report) else EXIT_GATES


# ------------------------------------------------------------------ protocol
def _named_state(name):
    if name is None:
        name = "00"
    if os.path.exists(name):
        return matrix_from_json(_load_json(name))
    if len(name) == 2 and set(name) <= {"0", "1"}:
        return projector(ket(int(name[0]), int(name[1])))
    if len(name) == 2 and set(name) <= set(tomography.INPUT_LETTERS):
        return tomography.design_standard().input_state(name)
    if name == "bell":
        return projector(np.array([1, 0, 0, 1]) / math.sqrt(2))
    raise ConfigError(f"unknown input state {name!r}")


def cmd_protocol_simulate(args):
    noise = _noise(args.noise)
    rho = _named_state(args.input)
    traces = protocol.sample_runs(rho, noise, args.shots, args.seed)
    out = _out_dir(args)
    man = _manifest(args, [args.noise])
    path = man.add(os.path.join(out, "traces.jsonl"))
    with open(path, "w") as fh:
        for tr in traces:
            fh.write(io.dumps(tr.to_json(), indent=0).replace("\n", "") + "\n")
    man.write(out)
    counts = {}
    for tr in traces:
        counts[(tr.m1_outcome, tr.m2_outcome)] = counts.get((tr.m1_outcome, tr.m2_outcome), 0) + 1
    for k in sorted(counts):
        print(f"m1={k[0]} m2={k[1]}  {counts[k] / args.shots:.4f}")
    return EXIT_OK


# ------------------------------------------------------------------ tomography
def cmd_tomography_design(args):
    out = _out_dir(args)
    man = _manifest(args)
    design = tomography.design_standard()
    io.write_json(man.add(os.path.join(out, "design.json")), design.to_json())
    man.write(out)
    print(f"{len(design.inputs)} inputs x {len(design.bases)} bases = {design.n_experiments} experiments")
    return EXIT_OK


def _source(args):
    if args.choi:
        return matrix_from_json(_load_json(args.choi))
    if args.noise:
        return _noise(args.noise)
    if args.preset == "cnot":
        return choi_from_unitary(CNOT)
    return _noise_from_spec(args.preset)


def cmd_tomography_simulate(args):
    source = _source(args)
    readout = _readout(args.readout)
    design = tomography.design_standard()
    data = tomography.simulate_dataset(source, design, readout, args.trials, args.seed)
    out = _out_dir(args)
    man = _manifest(args, [args.noise, args.choi, args.readout])
    io.write_json(man.add(os.path.join(out, "dataset.json")), data.to_json())
    man.write(out)
    print(f"simulated {data.total} trials")
    return EXIT_OK


def _load_dataset(path):
    try:
        return tomography.CountsDataset.from_json(_load_json(path))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad dataset {path}: {exc}") from exc


def _ml_options(args):
    return tomography.MLOptions(max_iterations=args.max_iterations, tol=args.tol)


def _write_process(man, out, chi):
    io.write_json(man.add(os.path.join(out, "choi.json")), matrix_to_json(chi))
    path = man.add(os.path.join(out, "ptm.csv"))
    with open(path, "w") as fh:
        ptm_to_csv(pauli_transfer_matrix(chi), fh)


def cmd_tomography_estimate(args):
    data = _load_dataset(args.data)
    readout = _readout(args.readout)
    povms = tomography.povm_elements(data.design, readout)
    fit = tomography.ml_estimate(data, povms, _ml_options(args))
    f_lin = tomography.linear_fidelity(data, povms)
    out = _out_dir(args)
    man = _manifest(args, [args.data, args.readout])
    _write_process(man, out, fit.choi)
    summary = {
        **tomography.fidelity_report(fit.choi),
        "linear_fidelity": f_lin,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "log_likelihood": fit.log_likelihood,
    }
    io.write_json(man.add(os.path.join(out, "estimate.json")), summary)
    man.write(out)
    print(f"ML fidelity {summary['fidelity']:.6f}  linear {f_lin:.6f}  iterations {fit.iterations}")
    return EXIT_OK if fit.converged else EXIT_NONCONVERGED


def _write_histogram(man, out, name, values, bins=40):
    counts, edges = np.histogram(values, bins=bins)
    rows = [(edges[i], edges[i + 1], int(counts[i])) for i in range(len(counts))]
    io.write_csv(man.add(os.path.join(out, name)), ["bin_low", "bin_high", "count"], rows)


def cmd_tomography_bootstrap(args):
    data = _load_dataset(args.data)
    readout = _readout(args.readout)
    povms = tomography.povm_elements(data.design, readout)
    fit = None
    if args.method == "parametric":
        fit = tomography.ml_estimate(data, povms, _ml_options(args))
        boots = stats.parametric_bootstrap(
            fit.choi, data.design, readout, data.trials, args.resamples, args.seed,
            _ml_options(args), threads=args.threads,
        )
        point = fit.fidelity()
    else:
        boots = stats.nonparametric_bootstrap(data, povms, args.resamples, args.seed, threads=args.threads)
        point = boots.point_estimate
    ci = stats.basic_bootstrap_ci(point, boots, args.level)
    out = _out_dir(args)
    man = _manifest(args, [args.data, args.readout])
    io.write_json(man.add(os.path.join(out, "bootstrap.json")), {**boots.to_json(), "ci": ci.to_json()})
    _write_histogram(man, out, "bootstrap_hist.csv", boots.estimates)
    man.write(out)
    print(f"{args.method} point {point:.6f}  {args.level:.0%} CI [{ci.low:.6f}, {ci.high:.6f}]")
    if fit is not None and not fit.converged:
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_tomography_lrtest(args):
    data = _load_dataset(args.data)
    readout = _readout(args.readout)
    povms = tomography.povm_elements(data.design, readout)
    fit = tomography.ml_estimate(data, povms, _ml_options(args))
    res = stats.lr_test(data, fit.choi, data.design, readout, args.resamples, args.seed,
                        _ml_options(args), threads=args.threads)
    out = _out_dir(args)
    man = _manifest(args, [args.data, args.readout])
    io.write_json(man.add(os.path.join(out, "lrtest.json")), res.to_json())
    _write_histogram(man, out, "lambda_hist.csv", res.lambda_boot)
    man.write(out)
    print(f"lambda {res.lambda_observed:.3f}  null {res.lambda_boot_mean:.3f} +- {res.lambda_boot_sd:.3f}  z {res.z:.2f}")
    return EXIT_OK if fit.converged else EXIT_NONCONVERGED


# ------------------------------------------------------------------ budget / timing / povm
def cmd_budget(args):
    try:
        b = bud.ErrorBudget.load(args.budget) if args.budget else bud.ErrorBudget.table1()
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad budget: {exc}") from exc
    total, sigma = bud.budget_sum(b)
    fid = bud.budget_fidelity(b)
    unc = bud.budget_uncertainty(b, args.mc, args.seed)
    for name, (v, s) in b.entries.items():
        print(f"{name:<14s} {v:8.4f} +- {s:.4f}")
    print(f"{'sum':<14s} {total:8.4f} +- {sigma:.4f}")
    print(f"{'model fidelity':<14s} {fid:8.4f} +- {unc:.4f}")
    out = _out_dir(args)
    man = _manifest(args, [args.budget])
    io.write_json(man.add(os.path.join(out, "budget.json")), {
        **b.to_json(), "sum": total, "sum_sigma": sigma, "model_fidelity": fid, "model_fidelity_sigma": unc,
    })
    man.write(out)
    return EXIT_OK


def cmd_timing(args):
    try:
        table = bud.TimingTable.load(args.table) if args.table else bud.TimingTable.reference()
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad timing table: {exc}") from exc
    rep = bud.timing_report(table)
    for cat in bud.CATEGORIES:
        print(f"{cat:<12s} {rep['category_us'][cat] / 1000:8.3f} ms  {rep['category_fraction'][cat]:6.1%}")
    print(f"{'total':<12s} {rep['total_us'] / 1000:8.3f} ms")
    out = _out_dir(args)
    man = _manifest(args, [args.table])
    io.write_json(man.add(os.path.join(out, "timing.json")), rep)
    man.write(out)
    return EXIT_OK


def cmd_povm_fit(args):
    try:
        hists = tomography.ReferenceHistograms.from_json(_load_json(args.hists))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad histograms: {exc}") from exc
    try:
        model = tomography.fit_readout(hists)
    except tomography.ReadoutUnidentifiableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = _out_dir(args)
    man = _manifest(args, [args.hists])
    io.write_json(man.add(os.path.join(out, "readout.json")), model.to_json())
    man.write(out)
    for i, (p, t) in enumerate(zip(model.p, model.thresholds)):
        print(f"ion {i}: threshold {t}  p {p:.5f}")
    return EXIT_OK


# ------------------------------------------------------------------ pipeline
PIPELINE_KEYS = {"noise", "readout", "trials", "ml", "bootstrap", "lr_test"}


def _pipeline_config(raw):
    if not isinstance(raw, dict):
        raise ConfigError("pipeline config must be a JSON object")
    unknown = set(raw) - PIPELINE_KEYS
    if unknown:
        raise ConfigError(f"unknown pipeline keys {sorted(unknown)}")
    try:
        noise = _noise_from_spec(raw.get("noise", "table1"))
        readout = (tomography.ReadoutModel.from_json(raw["readout"]) if "readout" in raw
                   else tomography.ReadoutModel.reference())
        trials = int(raw.get("trials", 300))
        if trials < 1:
            raise ValueError("trials must be >= 1")
        ml = tomography.MLOptions(**raw.get("ml", {}))
        boot = dict(raw.get("bootstrap", {}))
        boot_cfg = {
            "resamples": int(boot.get("resamples", 2000)),
            "level": float(boot.get("level", 0.95)),
            "ml": tomography.MLOptions(**boot.get("ml", raw.get("ml", {}))),
        }
        lr = dict(raw.get("lr_test", {}))
        lr_cfg = {"resamples": int(lr.get("resamples", 2000)),
                  "ml": tomography.MLOptions(**lr.get("ml", raw.get("ml", {})))}
        if boot_cfg["resamples"] < 2 or not 0 < boot_cfg["level"] < 1 or lr_cfg["resamples"] < 100:
            raise ValueError("bootstrap needs >= 2 resamples, level in (0,1); LR test needs >= 100")
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad pipeline config: {exc}") from exc
    return noise, readout, trials, ml, boot_cfg, lr_cfg


def cmd_pipeline(args):
    noise, readout, trials, ml, boot_cfg, lr_cfg = _pipeline_config(_load_json(args.config))
    design = tomography.design_standard()
    povms = tomography.povm_elements(design, readout)
    seed = args.seed
    data = tomography.simulate_dataset(noise, design, readout, trials, io.substream_seed(seed, "dataset"))
    fit = tomography.ml_estimate(data, povms, ml)
    f_ml = fit.fidelity()
    boots = stats.parametric_bootstrap(
        fit.choi, design, readout, data.trials, boot_cfg["resamples"],
        io.substream_seed(seed, "bootstrap"), boot_cfg["ml"], threads=args.threads,
    )
    ci = stats.basic_bootstrap_ci(f_ml, boots, boot_cfg["level"])
    lr = stats.lr_test(data, fit.choi, design, readout, lr_cfg["resamples"],
                       io.substream_seed(seed, "lr_test"), lr_cfg["ml"], threads=args.threads)
    truth = entanglement_fidelity(protocol.induced_choi(noise.without_drift()), CNOT)

    out = _out_dir(args)
    man = _manifest(args, [args.config])
    io.write_json(man.add(os.path.join(out, "dataset.json")), data.to_json())
    _write_process(man, out, fit.choi)
    _write_histogram(man, out, "bootstrap_hist.csv", boots.estimates)
    _write_histogram(man, out, "lambda_hist.csv", lr.lambda_boot)
    summary = {
        "fidelity": f_ml,
        "linear_fidelity": tomography.linear_fidelity(data, povms),
        "ci": ci.to_json(),
        "z": lr.z,
        "lr_test": lr.to_json(),
        "ground_truth_fidelity": truth,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "bootstrap_nonconverged": boots.n_nonconverged,
    }
    io.write_json(man.add(os.path.join(out, "summary.json")), summary)
    man.write(out)
    print(f"fidelity {f_ml:.6f}  CI [{ci.low:.6f}, {ci.high:.6f}]  z {lr.z:.2f}")
    return EXIT_OK if fit.converged else EXIT_NONCONVERGED


# ------------------------------------------------------------------ parser
def _add_ml(p):
    p.add_argument("--tol", type=float, default=1e-10, help="relative log-likelihood gain to stop at")
    p.add_argument("--max-iterations", type=int, default=20000)


def build_parser():
    ap = argparse.ArgumentParser(prog="qgt", description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="qgt_out", help="directory for artifacts and the run manifest")
    sub = ap.add_subparsers(dest="group", required=True)

    g = sub.add_parser("gates").add_subparsers(dest="action", required=True)
    p = g.add_parser("verify", help="check composite gate constructions")
    p.add_argument("--json", action="store_true")
    p.add_argument("--n-random", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--perturb", action="append", metavar="PHASE=RAD",
                   help="offset one wrapper phase (mutation testing)")
    p.set_defaults(func=cmd_gates_verify, command_name="gates verify")

    g = sub.add_parser("protocol").add_subparsers(dest="action", required=True)
    p = g.add_parser("simulate", help="sample protocol runs")
    p.add_argument("--input", default="00", help="'00'..'11', a design label like 'u+', 'bell', or a JSON matrix path")
    p.add_argument("--noise", help="NoiseConfig JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shots", type=int, default=1)
    p.set_defaults(func=cmd_protocol_simulate, command_name="protocol simulate")

    g = sub.add_parser("tomography").add_subparsers(dest="action", required=True)
    p = g.add_parser("design", help="write the experiment design")
    p.set_defaults(func=cmd_tomography_design, command_name="tomography design")

    p = g.add_parser("simulate", help="simulate a counts dataset")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--noise", help="NoiseConfig JSON (protocol source)")
    src.add_argument("--choi", help="Choi matrix JSON")
    src.add_argument("--preset", choices=["cnot", "noiseless", "table1"], default="table1")
    p.add_argument("--readout", help="ReadoutModel JSON (default: reference values)")
    p.add_argument("--trials", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_tomography_simulate, command_name="tomography simulate")

    p = g.add_parser("estimate", help="ML and linear estimates")
    p.add_argument("--data", required=True)
    p.add_argument("--readout")
    _add_ml(p)
    p.set_defaults(func=cmd_tomography_estimate, command_name="tomography estimate")

    p = g.add_parser("bootstrap", help="bootstrap confidence interval")
    p.add_argument("--data", required=True)
    p.add_argument("--readout")
    p.add_argument("--method", choices=["parametric", "nonparametric"], default="parametric")
    p.add_argument("--resamples", type=int, default=2000)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    _add_ml(p)
    p.set_defaults(func=cmd_tomography_bootstrap, command_name="tomography bootstrap")

    p = g.add_parser("lrtest", help="likelihood-ratio consistency test")
    p.add_argument("--data", required=True)
    p.add_argument("--readout")
    p.add_argument("--resamples", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    _add_ml(p)
    p.set_defaults(func=cmd_tomography_lrtest, command_name="tomography lrtest")

    p = sub.add_parser("budget", help="depolarizing error budget")
    p.add_argument("--budget", help="ErrorBudget JSON (default: shipped table)")
    p.add_argument("--mc", type=int, default=400)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_budget, command_name="budget")

    p = sub.add_parser("timing", help="duty-cycle report")
    p.add_argument("--table", help="TimingTable JSON (default: shipped table)")
    p.set_defaults(func=cmd_timing, command_name="timing")

    g = sub.add_parser("povm").add_subparsers(dest="action", required=True)
    p = g.add_parser("fit", help="fit readout thresholds and weights")
    p.add_argument("--hists", required=True)
    p.set_defaults(func=cmd_povm_fit, command_name="povm fit")

    p = sub.add_parser("pipeline", help="simulate, estimate, bootstrap and test")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_pipeline, command_name="pipeline")
    return ap


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    try:
        return args.func(args)
    except (ConfigError, InvalidStateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
