"""Monte Carlo benchmark: random systems x noise levels x realizations x estimators."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .estimators import EpsilonRule, cv_nuclear, least_squares, sparseva_nuclear, sparseva_reweighted
from .metrics import fit, summarize
from .system import (
    ModelStructure,
    build_regression,
    calibrate_noise,
    generate_noise_model,
    generate_random_system,
    impulse_response,
    lowpass_input,
    simulate,
)

log = logging.getLogger(__name__)

ESTIMATOR_NAMES = ("LS", "CV-FIR-N", "CV-ARX-N", "SPe-FIR-N", "SPe-FIR-RN", "SPe-ARX-N")
WHITE_ESTIMATORS = ["LS", "CV-FIR-N", "SPe-FIR-N", "SPe-FIR-RN"]
COLOURED_ESTIMATORS = ["LS", "CV-FIR-N", "CV-ARX-N", "SPe-FIR-N", "SPe-FIR-RN", "SPe-ARX-N"]
RECORD_COLUMNS = (
    "system_id", "order", "snr_db", "realization", "estimator", "fit", "wall_s", "converged", "seed",
)
FIT_TAPS = 35


class ConfigError(ValueError):
    pass


class EmptyRecordsError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    num_systems: int = 20
    orders: list = field(default_factory=lambda: [1, 10])
    pole_radius_max: float = 0.9
    N: int = 450
    fir_n: int = 35
    arx_nA: int = 35
    arx_nB: int = 35
    noise_kind: str = "white"
    snr_levels_db: list = field(default_factory=lambda: [20.0, 10.0, 6.0, 3.0])
    realizations_per_level: int = 1
    estimators: list = field(default_factory=lambda: list(WHITE_ESTIMATORS))
    master_seed: int = 0
    output: str = "results"
    epsilon_rule: str = "PEC"
    timing: bool = True

    @classmethod
    def preset(cls, name: str) -> "ExperimentConfig":
        """``desk``: 20 systems, one realization; ``full``: 150 systems, three."""
        if name == "desk":
            return cls()
        if name == "full":
            return cls(num_systems=150, realizations_per_level=3)
        raise ConfigError(f"unknown preset {name!r}")

    def validate(self) -> "ExperimentConfig":
        try:
            lo, hi = (int(v) for v in self.orders)
        except (TypeError, ValueError):
            raise ConfigError("orders must be a pair [min, max]") from None
        if not 1 <= lo <= hi <= 10:
            raise ConfigError("orders must satisfy 1 <= min <= max <= 10")
        if self.num_systems < 1 or self.realizations_per_level < 1:
            raise ConfigError("num_systems and realizations_per_level must be >= 1")
        if not 0.0 < self.pole_radius_max < 1.0:
            raise ConfigError("pole_radius_max must lie in (0, 1)")
        for name in ("fir_n", "arx_nA", "arx_nB"):
            v = getattr(self, name)
            if v < 1 or v % 2 == 0:
                raise ConfigError(f"{name} must be a positive odd integer")
        if self.N - self.fir_n <= self.fir_n:
            raise ConfigError("N is too small for the FIR order")
        uses_arx = any(e.endswith("ARX-N") for e in self.estimators)
        if uses_arx and self.N - max(self.arx_nA, self.arx_nB) <= self.arx_nA + self.arx_nB:
            raise ConfigError("N is too small for the ARX orders")
        if self.noise_kind not in ("white", "coloured"):
            raise ConfigError("noise_kind must be 'white' or 'coloured'")
        if not self.snr_levels_db:
            raise ConfigError("snr_levels_db must be nonempty")
        unknown = [e for e in self.estimators if e not in ESTIMATOR_NAMES]
        if unknown or not self.estimators:
            raise ConfigError(f"unknown estimators {unknown}; choose from {ESTIMATOR_NAMES}")
        try:
            EpsilonRule(self.epsilon_rule)
        except ValueError:
            raise ConfigError(f"unknown epsilon rule {self.epsilon_rule!r}") from None
        return self

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config fields: {sorted(extra)}")
        try:
            return cls(**d).validate()
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None


@dataclass
class TrialRecord:
    system_id: int
    order: int
    snr_db: float
    realization: int
    estimator: str
    fit: float
    wall_s: Optional[float]
    converged: str
    seed: int

    def row(self) -> list:
        wall = "" if self.wall_s is None else f"{self.wall_s:.6f}"
        return [
            self.system_id, self.order, repr(float(self.snr_db)), self.realization,
            self.estimator, repr(float(self.fit)), wall, self.converged, self.seed,
        ]


@dataclass
class Trial:
    """Data and ground truth for one Monte Carlo cell."""

    system_id: int
    level: int
    realization: int
    seed: int
    system: object
    noise_model: object
    data: object
    g_true: np.ndarray

    def regression(self, structure: ModelStructure):
        return build_regression(self.data, structure)


def _derived_seed(master_seed: int, *key: int) -> int:
    state = np.random.SeedSequence(master_seed, spawn_key=key).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])


def system_seed(config: ExperimentConfig, system_id: int) -> int:
    return _derived_seed(config.master_seed, 0, system_id)


def trial_seed(config: ExperimentConfig, system_id: int, level: int, realization: int) -> int:
    return _derived_seed(config.master_seed, 1, system_id, level, realization)


def make_system(config: ExperimentConfig, system_id: int):
    """The true system and (coloured case) noise model of ``system_id``."""
    rng = np.random.default_rng(system_seed(config, system_id))
    lo, hi = config.orders
    order = int(rng.integers(lo, hi + 1))
    sys_g = generate_random_system(order, config.pole_radius_max, rng)
    sys_h = None
    if config.noise_kind == "coloured":
        sys_h = generate_noise_model(order, config.pole_radius_max, rng)
    return sys_g, sys_h


def make_trial(config: ExperimentConfig, system_id: int, level: int, realization: int) -> Trial:
    sys_g, sys_h = make_system(config, system_id)
    seed = trial_seed(config, system_id, level, realization)
    rng = np.random.default_rng(seed)
    u = lowpass_input(config.N, rng)
    sigma = calibrate_noise(sys_g, sys_h, u, config.snr_levels_db[level])
    data = simulate(sys_g, sys_h, u, sigma, rng)
    data.seed = seed
    return Trial(
        system_id, level, realization, seed, sys_g, sys_h, data, impulse_response(sys_g, FIT_TAPS)
    )


def _estimator_table(config: ExperimentConfig) -> dict[str, tuple[str, Callable]]:
    rule = EpsilonRule(config.epsilon_rule)
    return {
        "LS": ("FIR", lambda reg: (least_squares(reg), True)),
        "CV-FIR-N": ("FIR", lambda reg: _unpack(cv_nuclear(reg))),
        "CV-ARX-N": ("ARX", lambda reg: _unpack(cv_nuclear(reg))),
        "SPe-FIR-N": ("FIR", lambda reg: _unpack(sparseva_nuclear(reg, rule))),
        "SPe-FIR-RN": ("FIR", lambda reg: _unpack(sparseva_reweighted(reg, rule))),
        "SPe-ARX-N": ("ARX", lambda reg: _unpack(sparseva_nuclear(reg, rule))),
    }


def _unpack(result):
    return result.theta, result.converged


def run_trial(config: ExperimentConfig, system_id: int, level: int, realization: int) -> list[TrialRecord]:
    """Run every configured estimator on one cell; failures become flagged rows."""
    trial = make_trial(config, system_id, level, realization)
    structures = {
        "FIR": ModelStructure.fir(config.fir_n),
        "ARX": ModelStructure.arx(config.arx_nA, config.arx_nB),
    }
    regressions = {}
    table = _estimator_table(config)
    records = []
    for name in config.estimators:
        kind, run = table[name]
        structure = structures[kind]
        try:
            if kind not in regressions:
                regressions[kind] = trial.regression(structure)
            t0 = time.perf_counter()
            theta, converged = run(regressions[kind])
            wall = time.perf_counter() - t0
            g_est = structure.impulse_response(theta, FIT_TAPS)
            score = fit(trial.g_true, g_est)
            status = "true" if converged else "false"
            if not math.isfinite(score):
                status = "failed"
        except Exception as exc:  # noqa: BLE001 - one bad cell must not stop the suite
            log.warning("trial %s/%s/%s %s failed: %s", system_id, level, realization, name, exc)
            score, wall, status = float("nan"), 0.0, "failed"
        records.append(
            TrialRecord(
                system_id=system_id,
                order=trial.system.order,
                snr_db=float(config.snr_levels_db[level]),
                realization=realization,
                estimator=name,
                fit=score,
                wall_s=wall if config.timing else None,
                converged=status,
                seed=trial.seed,
            )
        )
    return records


def _run_key(args):
    config, key = args
    return run_trial(config, *key)


def trial_keys(config: ExperimentConfig) -> list[tuple[int, int, int]]:
    return [
        (s, lvl, r)
        for s in range(config.num_systems)
        for lvl in range(len(config.snr_levels_db))
        for r in range(config.realizations_per_level)
    ]


def _sort_key(config: ExperimentConfig):
    order = {name: i for i, name in enumerate(config.estimators)}
    return lambda rec: (rec.system_id, config.snr_levels_db.index(rec.snr_db), rec.realization, order[rec.estimator])


def run_suite(config: ExperimentConfig, jobs: int = 1, progress: Optional[Callable] = None) -> list[TrialRecord]:
    """All records of the suite, in a fixed order independent of ``jobs``."""
    config.validate()
    keys = trial_keys(config)
    records: list[TrialRecord] = []
    if jobs <= 1:
        for i, key in enumerate(keys):
            records.extend(run_trial(config, *key))
            if progress:
                progress(i + 1, len(keys))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for i, recs in enumerate(pool.map(_run_key, [(config, k) for k in keys])):
                records.extend(recs)
                if progress:
                    progress(i + 1, len(keys))
    records.sort(key=_sort_key(config))
    return records


def write_records(records: list[TrialRecord], path, config: Optional[ExperimentConfig] = None) -> Path:
    """Write the records CSV and, with ``config``, a JSON sidecar next to it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RECORD_COLUMNS)
        for rec in records:
            writer.writerow(rec.row())
    if config is not None:
        sidecar = {"config": asdict(config), "version": __version__, "columns": list(RECORD_COLUMNS)}
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return path


def read_records(path) -> list[TrialRecord]:
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RECORD_COLUMNS:
            raise ValueError(f"unexpected record header {reader.fieldnames}")
        for row in reader:
            records.append(
                TrialRecord(
                    system_id=int(row["system_id"]),
                    order=int(row["order"]),
                    snr_db=float(row["snr_db"]),
                    realization=int(row["realization"]),
                    estimator=row["estimator"],
                    fit=float(row["fit"]),
                    wall_s=float(row["wall_s"]) if row["wall_s"] else None,
                    converged=row["converged"],
                    seed=int(row["seed"]),
                )
            )
    return records


def _ordered_estimators(names) -> list[str]:
    known = [e for e in ESTIMATOR_NAMES if e in names]
    return known + sorted(set(names) - set(known))


def summarize_records(records: list[TrialRecord]) -> dict:
    """Mean-fit table, mean wall time per estimator and boxplot statistics.

    Failed rows are excluded from every statistic.
    """
    ok = [r for r in records if r.converged != "failed" and math.isfinite(r.fit)]
    if not ok:
        raise EmptyRecordsError("no usable records")
    estimators = _ordered_estimators({r.estimator for r in ok})
    levels = sorted({r.snr_db for r in ok}, reverse=True)
    cells: dict[tuple[float, str], list[float]] = {}
    times: dict[str, list[float]] = {}
    for r in ok:
        cells.setdefault((r.snr_db, r.estimator), []).append(r.fit)
        if r.wall_s is not None:
            times.setdefault(r.estimator, []).append(r.wall_s)
    fit_table = [
        {"snr_db": lvl, **{e: float(np.mean(cells[(lvl, e)])) if (lvl, e) in cells else float("nan") for e in estimators}}
        for lvl in levels
    ]
    time_table = [
        {"estimator": e, "mean_wall_s": float(np.mean(times[e])), "count": len(times[e])}
        for e in estimators
        if e in times
    ]
    boxplot = [
        {"snr_db": lvl, "estimator": e, **summarize(cells[(lvl, e)]).as_dict()}
        for lvl in levels
        for e in estimators
        if (lvl, e) in cells
    ]
    return {"estimators": estimators, "fit_table": fit_table, "time_table": time_table, "boxplot": boxplot}


def _write_rows(path: Path, rows: list[dict], columns: list[str]):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{v:.4f}" if isinstance(v, float) else v) for k, v in row.items()})


def report(records_path, out_dir) -> dict:
    """Write ``fit_table.csv``, ``time_table.csv`` and ``boxplot.csv`` to ``out_dir``."""
    summary = summarize_records(read_records(records_path))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "fit_table.csv", summary["fit_table"], ["snr_db", *summary["estimators"]])
    _write_rows(out / "time_table.csv", summary["time_table"], ["estimator", "mean_wall_s", "count"])
    _write_rows(
        out / "boxplot.csv",
        summary["boxplot"],
        ["snr_db", "estimator", "min", "q1", "median", "q3", "max", "mean", "count", "n_outliers"],
    )
    return summary


def default_jobs() -> int:
    return max(1, (os.cpu_count() or 1))
