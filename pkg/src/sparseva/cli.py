"""Command-line entry point: ``gen-config``, ``run``, ``report`` and ``demo``.

Exit codes: 0 success, 1 config error, 2 runtime failure, 3 report on empty records.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import bench
from .bench import ConfigError, EmptyRecordsError, ExperimentConfig
from .hankel import hankel
from .metrics import fit, numerical_rank
from .system import ModelStructure

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_EMPTY = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config JSON")
    common.add_argument("--seed", type=int, help="override master_seed")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("--out", help="output directory (or file for gen-config)")
    common.add_argument("--estimators", help="comma separated estimator names")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="sparseva-bench", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    g = sub.add_parser("gen-config", parents=[common], help="emit a default config file")
    g.add_argument("--preset", choices=("desk", "full"), default="desk")
    g.add_argument("--noise", choices=("white", "coloured"), default="white")
    sub.add_parser("run", parents=[common], help="run the suite and write records.csv")
    r = sub.add_parser("report", parents=[common], help="summarize a records file")
    r.add_argument("records", nargs="?", help="records CSV (default: <out>/records.csv)")
    d = sub.add_parser("demo", parents=[common], help="one system end to end")
    d.add_argument("--order", type=int, default=3)
    d.add_argument("--snr", type=float, default=20.0)
    return p


def _load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        config.master_seed = args.seed
    if args.estimators:
        config.estimators = [e.strip() for e in args.estimators.split(",") if e.strip()]
    if args.out:
        config.output = args.out
    return config.validate()


def _gen_config(args) -> int:
    config = ExperimentConfig.preset(args.preset)
    if args.noise == "coloured":
        config.noise_kind = "coloured"
        config.estimators = list(bench.COLOURED_ESTIMATORS)
    if args.seed is not None:
        config.master_seed = args.seed
    if args.estimators:
        config.estimators = [e.strip() for e in args.estimators.split(",")]
    config.validate()
    text = config.to_json() + "\n"
    if args.out:
        out = Path(args.out)
        if out.suffix != ".json":
            out = out / "config.json"
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        print(f"wrote {out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _run(args) -> int:
    config = _load_config(args)
    out = Path(config.output)
    n = len(bench.trial_keys(config))

    def progress(done, total):
        if args.verbose or done == total or done % max(1, total // 10) == 0:
            print(f"  {done}/{total} trials", file=sys.stderr)

    t0 = time.perf_counter()
    records = bench.run_suite(config, jobs=args.jobs, progress=progress)
    path = bench.write_records(records, out / "records.csv", config)
    failed = sum(r.converged == "failed" for r in records)
    print(f"{len(records)} records from {n} trials ({failed} failed) in {time.perf_counter() - t0:.1f}s -> {path}")
    return EXIT_OK


def _report(args) -> int:
    out = Path(args.out or ".")
    records = Path(args.records) if args.records else out / "records.csv"
    if not records.exists():
        raise EmptyRecordsError(f"no records at {records}")
    summary = bench.report(records, out)
    ests = summary["estimators"]
    print("mean fit".ljust(10) + "".join(e.rjust(12) for e in ests))
    for row in summary["fit_table"]:
        print(f"{row['snr_db']:>6g} dB " + "".join(f"{row[e]:12.2f}" for e in ests))
    print("mean time " + "".join(
        f"{t['mean_wall_s']:12.3f}" for e in ests for t in summary["time_table"] if t["estimator"] == e
    ))
    print(f"tables written to {out}")
    return EXIT_OK


def _demo(args) -> int:
    from .estimators import cv_nuclear, least_squares, sparseva_nuclear, sparseva_reweighted
    from .system import (
        build_regression, calibrate_noise, generate_noise_model, generate_random_system,
        impulse_response, lowpass_input, simulate,
    )

    config = _load_config(args)
    rng = np.random.default_rng(config.master_seed)
    sys_g = generate_random_system(args.order, config.pole_radius_max, rng)
    sys_h = generate_noise_model(args.order, config.pole_radius_max, rng) if config.noise_kind == "coloured" else None
    u = lowpass_input(config.N, rng)
    sigma = calibrate_noise(sys_g, sys_h, u, args.snr)
    data = simulate(sys_g, sys_h, u, sigma, rng)
    g = impulse_response(sys_g, bench.FIT_TAPS)
    print(f"system order {sys_g.order}, max |pole| {sys_g.max_pole_radius:.3f}, "
          f"SNR {args.snr:g} dB (sigma_e {sigma:.4g}), N={config.N}, noise {config.noise_kind}")
    fir = ModelStructure.fir(config.fir_n)
    arx = ModelStructure.arx(config.arx_nA, config.arx_nB)
    regs = {"FIR": build_regression(data, fir), "ARX": build_regression(data, arx)}
    runs = {
        "LS": ("FIR", None),
        "CV-FIR-N": ("FIR", cv_nuclear),
        "CV-ARX-N": ("ARX", cv_nuclear),
        "SPe-FIR-N": ("FIR", lambda r: sparseva_nuclear(r, config.epsilon_rule)),
        "SPe-FIR-RN": ("FIR", lambda r: sparseva_reweighted(r, config.epsilon_rule)),
        "SPe-ARX-N": ("ARX", lambda r: sparseva_nuclear(r, config.epsilon_rule)),
    }
    print(f"{'estimator':<12}{'fit':>8}{'time s':>9}{'rank':>6}  notes")
    for name in config.estimators:
        kind, run = runs[name]
        reg = regs[kind]
        t0 = time.perf_counter()
        if run is None:
            theta, note = least_squares(reg), f"V_N={reg.residual_ss(least_squares(reg)):.4g}"
        else:
            res = run(reg)
            theta = res.theta
            if res.lam is not None:
                note = f"lambda={res.lam:.4g}"
            else:
                note = f"eps={res.epsilon:.4f} ({config.epsilon_rule}, n={reg.n_params}, N={reg.N})"
            note += f", rounds={len(res.reports)}, converged={res.converged}"
        wall = time.perf_counter() - t0
        g_est = reg.structure.impulse_response(theta, bench.FIT_TAPS)
        rank = numerical_rank(hankel(g_est), 1e-3)
        print(f"{name:<12}{fit(g, g_est):8.2f}{wall:9.3f}{rank:6d}  {note}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handlers = {"gen-config": _gen_config, "run": _run, "report": _report, "demo": _demo}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EmptyRecordsError as exc:
        print(f"nothing to report: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
