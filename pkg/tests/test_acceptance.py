"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run standalone with ``python tests/test_acceptance.py`` for the summary only.
"""

import dataclasses
import functools
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import random_instance, subgradient_oracle  # noqa: E402
from sparseva.bench import ExperimentConfig, make_trial, run_suite, trial_keys, write_records  # noqa: E402
from sparseva.estimators import (  # noqa: E402
    EpsilonRule,
    cv_nuclear,
    epsilon,
    least_squares,
    sparseva_nuclear,
    sparseva_reweighted,
)
from sparseva.hankel import WeightPair, hankel, inv_sqrt_psd, nuclear_norm, sdp_weights  # noqa: E402
from sparseva.metrics import fit  # noqa: E402
from sparseva.solver import Constrained, Penalized, ProblemSpec, solve_constrained, solve_penalized  # noqa: E402
from sparseva.system import (  # noqa: E402
    DataRecord,
    ModelStructure,
    RegressionData,
    build_regression,
    generate_random_system,
    lowpass_input,
)

SEED = 20240601


class Outcome:
    def __init__(self, ok, detail, elapsed):
        self.ok, self.detail, self.elapsed = bool(ok), detail, elapsed

    def line(self, number, title):
        tag = "PASS" if self.ok else "FAIL"
        return f"[{tag}] {number:>2}. {title}: {self.detail} ({self.elapsed:.1f}s)"


def timed(fn):
    @functools.wraps(fn)
    def wrapper():
        t0 = time.perf_counter()
        ok, detail = fn()
        return Outcome(ok, detail, time.perf_counter() - t0)

    return wrapper


def _spd(rng, m):
    G = rng.standard_normal((m, m))
    return G @ G.T + 0.1 * np.eye(m)


def _sqrtm(A):
    lam, V = np.linalg.eigh(A)
    return (V * np.sqrt(lam)) @ V.T


@timed
def sdp_equivalence():
    rng = np.random.default_rng(SEED)
    worst_eig, worst_gap, worst_beat = np.inf, 0.0, -np.inf
    for _ in range(100):
        m = int(rng.integers(1, 7))
        A, B, X = _spd(rng, m), _spd(rng, m), rng.standard_normal((m, m))
        sa, sb = _sqrtm(A), _sqrtm(B)
        L = WeightPair(inv_sqrt_psd(np.linalg.inv(A), 1e-300), inv_sqrt_psd(np.linalg.inv(B), 1e-300))
        target = nuclear_norm(sa @ X @ sb)
        W1, W2 = sdp_weights(X, L)
        block = np.block([[W1, X], [X.T, W2]])
        worst_eig = min(worst_eig, np.linalg.eigvalsh(block)[0])
        worst_gap = max(worst_gap, abs(0.5 * (np.trace(A @ W1) + np.trace(B @ W2)) - target))
        # any PSD block matrix is a feasible point for its own off-diagonal block
        G = rng.standard_normal((2 * m, 2 * m))
        P = G @ G.T
        F1, Xf, F2 = P[:m, :m], P[:m, m:], P[m:, m:]
        value = 0.5 * (np.trace(A @ F1) + np.trace(B @ F2))
        worst_beat = max(worst_beat, nuclear_norm(sa @ Xf @ sb) - value)
    ok = worst_eig >= -1e-9 and worst_gap <= 1e-9 and worst_beat <= 1e-9
    return ok, f"min eig {worst_eig:.2e}, objective gap {worst_gap:.2e}, best random beat {worst_beat:.2e}"


def _fir_reg(Phi, Y):
    return RegressionData(Y, Phi, ModelStructure.fir(Phi.shape[0]))


@timed
def penalized_vs_oracle():
    rng = np.random.default_rng(SEED + 1)
    worst = 0.0
    for _ in range(20):
        Phi, Y = random_instance(rng)
        _, rep = solve_penalized(ProblemSpec.from_structure(_fir_reg(Phi, Y), Penalized(1.0)))
        ref = subgradient_oracle(Phi, Y, 1.0)
        worst = max(worst, abs(rep.objective - ref) / ref)
    return worst <= 1e-4, f"worst relative objective gap {worst:.2e} over 20 instances"


@timed
def duality_bridge():
    rng = np.random.default_rng(SEED + 2)
    worst = 0.0
    for _ in range(20):
        Phi, Y = random_instance(rng)
        reg = _fir_reg(Phi, Y)
        th_p, rep_p = solve_penalized(ProblemSpec.from_structure(reg, Penalized(1.0)))
        th_c, _ = solve_constrained(ProblemSpec.from_structure(reg, Constrained(rep_p.vn)))
        a, b = nuclear_norm(hankel(th_p)), nuclear_norm(hankel(th_c))
        worst = max(worst, abs(a - b) / a)
    return worst <= 1e-3, f"worst relative nuclear-norm gap {worst:.2e} over 20 instances"


@timed
def epsilon_arithmetic():
    got = [epsilon(r, 35, 450) for r in EpsilonRule]
    want = [7 / 83, 70 / 450, math.log(450) * 35 / 450]
    err = max(abs(g - w) for g, w in zip(got, want))
    ok = err <= 1e-12 and got[0] < got[1] < got[2]
    return ok, "PEC {:.7f} < AIC {:.7f} < BIC {:.7f}, max error {:.1e}".format(*got, err)


def desk_config(**kw):
    return dataclasses.replace(ExperimentConfig.preset("desk"), **kw)


@timed
def feasibility_suite():
    cfg = desk_config()
    rule = EpsilonRule(cfg.epsilon_rule)
    structures = {"FIR": ModelStructure.fir(cfg.fir_n), "ARX": ModelStructure.arx(cfg.arx_nA, cfg.arx_nB)}
    estimators = {
        "SPe-FIR-N": ("FIR", lambda r: sparseva_nuclear(r, rule)),
        "SPe-FIR-RN": ("FIR", lambda r: sparseva_reweighted(r, rule)),
        "SPe-ARX-N": ("ARX", lambda r: sparseva_nuclear(r, rule)),
    }
    worst, bad_fit, count = -np.inf, 0, 0
    for key in trial_keys(cfg)[:50]:
        trial = make_trial(cfg, *key)
        for name, (kind, run) in estimators.items():
            reg = trial.regression(structures[kind])
            res = run(reg)
            bound = reg.residual_ss(least_squares(reg)) * (1 + res.epsilon)
            worst = max(worst, reg.residual_ss(res.theta) / bound - 1)
            score = fit(trial.g_true, res.impulse_response(35))
            bad_fit += res.converged and not math.isfinite(score)
            count += 1
    ok = worst <= 1e-6 and bad_fit == 0
    return ok, f"{count} estimates on 50 trials, worst V_N/bound - 1 = {worst:.2e}, non-finite converged fits {bad_fit}"


@timed
def spectrum_sharpening():
    rng = np.random.default_rng(SEED + 6)
    wins = 0
    for _ in range(20):
        sys_g = generate_random_system(3, 0.9, rng)
        u = lowpass_input(450, rng)
        reg = build_regression(DataRecord(u, sys_g.filter(u)), ModelStructure.fir(35))
        plain = sparseva_nuclear(reg).theta
        rew = sparseva_reweighted(reg).theta
        r_plain, r_rew = (np.linalg.svd(hankel(t), compute_uv=False) for t in (plain, rew))
        a, b = r_rew[3] / r_rew[0], r_plain[3] / r_plain[0]
        wins += a <= b
    return wins >= 14, f"reweighted sigma4/sigma1 <= plain in {wins}/20 noiseless systems"


@functools.lru_cache(maxsize=None)
def desk_run(tag):
    cfg = desk_config(timing=False)
    t0 = time.perf_counter()
    records = run_suite(cfg)
    elapsed = time.perf_counter() - t0
    path = Path(tempfile.mkdtemp(prefix=f"desk-{tag}-")) / "records.csv"
    write_records(records, path, cfg)
    return records, path.read_bytes(), elapsed


@timed
def table_trend():
    records, _, elapsed = desk_run("a")
    level = 20.0
    means = {}
    for name in ("CV-FIR-N", "SPe-FIR-N", "SPe-FIR-RN"):
        fits = [r.fit for r in records if r.snr_db == level and r.estimator == name]
        means[name] = float(np.mean(fits))
    cv, spe, rn = means["CV-FIR-N"], means["SPe-FIR-N"], means["SPe-FIR-RN"]
    ok = rn >= spe - 1.0 and abs(cv - spe) <= 8.0 and elapsed < 1800
    return ok, f"20 dB mean fit CV {cv:.2f} / SPe-N {spe:.2f} / SPe-RN {rn:.2f}, suite {elapsed:.0f}s"


@timed
def timing_ratio():
    cfg = desk_config()
    t_cv = t_spe = 0.0
    for system_id in range(10):
        reg = make_trial(cfg, system_id, 0, 0).regression(ModelStructure.fir(cfg.fir_n))
        t0 = time.perf_counter()
        cv_nuclear(reg)
        t1 = time.perf_counter()
        sparseva_nuclear(reg, cfg.epsilon_rule)
        t2 = time.perf_counter()
        t_cv += t1 - t0
        t_spe += t2 - t1
    ratio = t_cv / t_spe
    return ratio >= 3, f"CV {t_cv:.2f}s vs SPARSEVA {t_spe:.2f}s, ratio {ratio:.1f}"


@timed
def metric_exactness():
    g = np.array([1.0, 0.6, 0.2, -0.3, 0.05])
    perfect = fit(g, g)
    mean = fit(g, np.full_like(g, g.mean()))
    hand = fit([1.0, 0.0, 0.0], [0.0, 0.0, 0.0])
    ok = perfect == 100.0 and abs(mean) <= 1e-12 and abs(hand + 22.474) <= 1e-3
    return ok, f"fit(g,g)={float(perfect)!r}, fit(g,mean)={mean:.1e}, hand example {hand:.4f}"


@timed
def determinism():
    _, first, _ = desk_run("a")
    _, second, _ = desk_run("b")
    n_lines = first.count(b"\n")
    return first == second, f"two desk runs, {len(first)} bytes / {n_lines} lines, identical={first == second}"


CRITERIA = [
    (1, "SDP and weighted nuclear norm equivalence", sdp_equivalence),
    (2, "penalized solver vs subgradient oracle", penalized_vs_oracle),
    (3, "constrained/penalized duality bridge", duality_bridge),
    (4, "epsilon-rule arithmetic", epsilon_arithmetic),
    (5, "feasibility suite", feasibility_suite),
    (6, "rank/spectrum sharpening", spectrum_sharpening),
    (7, "desk-scale fit trend", table_trend),
    (8, "timing ratio", timing_ratio),
    (9, "metric exactness", metric_exactness),
    (10, "determinism", determinism),
]

RUNTIME_LIMITS = {1: 10.0, 2: 120.0, 3: 120.0, 7: 1800.0}


@pytest.mark.slow
@pytest.mark.parametrize("number, title, check", CRITERIA, ids=[f"criterion_{c[0]:02d}" for c in CRITERIA])
def test_criterion(number, title, check, capsys):
    outcome = check()
    limit = RUNTIME_LIMITS.get(number)
    if limit is not None and number != 7 and outcome.elapsed >= limit:
        outcome.ok = False
        outcome.detail += f"; over the {limit:.0f}s limit"
    with capsys.disabled():
        print("\n" + outcome.line(number, title))
    assert outcome.ok, outcome.detail


if __name__ == "__main__":
    failures = 0
    for number, title, check in CRITERIA:
        outcome = check()
        print(outcome.line(number, title), flush=True)
        failures += not outcome.ok
    sys.exit(1 if failures else 0)
