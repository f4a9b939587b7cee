"""Least squares, SPARSEVA nuclear/reweighted estimators and the CV baseline."""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .hankel import WeightPair, hankel, logdet_surrogate, nuclear_norm, sdp_weights, weight_update
from .solver import (
    Constrained,
    Penalized,
    ProblemSpec,
    SolverOptions,
    SolverReport,
    least_squares_solution,
    solve_constrained,
    solve_penalized,
)
from .system import ModelStructure, RegressionData


class EpsilonRule(str, enum.Enum):
    PEC = "PEC"
    AIC = "AIC"
    BIC = "BIC"

    @classmethod
    def _missing_(cls, value):
        if isinstance(value, str):
            return cls.__members__.get(value.upper())
        return None

    def value(self, n: int, N: int) -> float:
        return epsilon(self, n, N)


def epsilon(rule: Union[EpsilonRule, str], n: int, N: int) -> float:
    """Relative residual slack for SPARSEVA.

    PEC: ``(n/N) / (1 - n/N)``; AIC: ``2n/N``; BIC: ``ln(N) n/N``.
    """
    rule = EpsilonRule(rule)
    if not 0 < n < N:
        raise ValueError(f"need 0 < n < N, got n={n}, N={N}")
    ratio = n / N
    if rule is EpsilonRule.PEC:
        return ratio / (1.0 - ratio)
    if rule is EpsilonRule.AIC:
        return 2.0 * ratio
    return math.log(N) * ratio


@dataclass
class ReweightOptions:
    """``delta=None`` picks ``1e-2 * sigma_max(H(theta_LS))`` per block (floored at 1e-8)."""

    delta: Optional[float] = None
    max_rounds: int = 5
    round_tol: float = 1e-3

    def __post_init__(self):
        if self.delta is not None and self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")


@dataclass
class LambdaSearch:
    """Candidate regularization weights for cross validation.

    With an explicit ``grid`` those values are used as given. Otherwise the
    grid is ``num`` log-spaced points on ``span * s`` with
    ``s = V_N(theta_LS) / max(1, ||H(theta_LS)||_*)``.
    """

    grid: Optional[Sequence[float]] = None
    num: int = 12
    span: tuple = (1e-4, 1e2)
    refine_evals: int = 8


@dataclass
class EstimateResult:
    theta: np.ndarray
    structure: ModelStructure
    reports: list = field(default_factory=list)
    epsilon: Optional[float] = None
    lam: Optional[float] = None
    wall_time_seconds: float = 0.0
    history: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.theta.size != self.structure.n_params:
            raise ValueError("theta length does not match the model structure")

    @property
    def converged(self) -> bool:
        # CV candidate fits only rank the grid; the refit decides.
        if self.lam is not None:
            return bool(self.reports) and self.reports[-1].converged
        return all(r.converged for r in self.reports)

    def impulse_response(self, n: int = 35) -> np.ndarray:
        return self.structure.impulse_response(self.theta, n)


def least_squares(data: RegressionData) -> np.ndarray:
    """``(Phi Phi^T)^-1 Phi Y``; a tiny ridge is used if ``Phi Phi^T`` is singular."""
    return least_squares_solution(data.Phi, data.Y)


def block_nuclear_norms(data: RegressionData, theta, weights=None) -> list[float]:
    out = []
    for i, sl in enumerate(data.structure.blocks):
        H = hankel(theta[sl])
        if weights is not None:
            H = weights[i].apply(H)
        out.append(nuclear_norm(H))
    return out


def _resolve_epsilon(rule, data: RegressionData) -> float:
    if isinstance(rule, (int, float)) and not isinstance(rule, bool):
        if rule <= 0:
            raise ValueError("epsilon must be positive")
        return float(rule)
    return epsilon(rule, data.n_params, data.N)


def sparseva_nuclear(
    data: RegressionData,
    rule: Union[EpsilonRule, str, float] = EpsilonRule.PEC,
    options: Optional[SolverOptions] = None,
) -> EstimateResult:
    """Minimize the (sum of block) Hankel nuclear norms subject to
    ``V_N(theta) <= V_N(theta_LS) (1 + eps)``.

    ``rule`` is an :class:`EpsilonRule` or an explicit positive epsilon.
    """
    return sparseva_reweighted(data, rule, ReweightOptions(max_rounds=1), options)


def _default_deltas(data: RegressionData, theta_ls) -> list[float]:
    deltas = []
    for sl in data.structure.blocks:
        s = np.linalg.svd(hankel(theta_ls[sl]), compute_uv=False)
        deltas.append(max(1e-2 * s[0], 1e-8))
    return deltas


def sparseva_reweighted(
    data: RegressionData,
    rule: Union[EpsilonRule, str, float] = EpsilonRule.PEC,
    reweight: Optional[ReweightOptions] = None,
    options: Optional[SolverOptions] = None,
) -> EstimateResult:
    """Reweighted nuclear norm SPARSEVA.

    Round ``k`` minimizes ``sum_b ||L1_b^k H(theta_b) L2_b^k||_*`` over the
    residual ball, starting from identity weights; the weights are then
    refreshed from the optimal SDP weights ``W1, W2`` of the new estimate as
    ``(W + delta I)^(-1/2)``. The loop stops after ``max_rounds`` or once the
    relative change of theta drops below ``round_tol``.

    ``history["surrogate"]`` records ``sum_b logdet(W1_b + delta_b I) +
    logdet(W2_b + delta_b I)`` at the weights built after each round.
    """
    reweight = reweight or ReweightOptions()
    t0 = time.perf_counter()
    structure = data.structure
    eps = _resolve_epsilon(rule, data)
    theta_ls = least_squares(data)
    rho = data.residual_ss(theta_ls) * (1.0 + eps)
    if reweight.delta is None:
        deltas = _default_deltas(data, theta_ls)
    else:
        deltas = [reweight.delta] * len(structure.blocks)
    weights = [WeightPair.identity((sl.stop - sl.start + 1) // 2) for sl in structure.blocks]
    reports: list[SolverReport] = []
    surrogate: list[float] = []
    theta = theta_ls
    for k in range(reweight.max_rounds):
        spec = ProblemSpec.from_structure(data, Constrained(rho), weights=weights)
        previous = theta
        theta, report = solve_constrained(spec, options, theta0=theta)
        reports.append(report)
        new_weights = []
        total = 0.0
        for sl, L, delta in zip(structure.blocks, weights, deltas):
            H = hankel(theta[sl])
            W1, W2 = sdp_weights(H, L)
            total += logdet_surrogate(W1, W2, delta)
            new_weights.append(weight_update(H, L, delta))
        surrogate.append(total)
        weights = new_weights
        if k > 0:
            change = np.linalg.norm(theta - previous) / max(np.linalg.norm(previous), 1e-300)
            if change < reweight.round_tol:
                break
    return EstimateResult(
        theta=theta,
        structure=structure,
        reports=reports,
        epsilon=eps,
        wall_time_seconds=time.perf_counter() - t0,
        history={"surrogate": surrogate, "deltas": deltas, "rho": rho},
    )


def _golden_points(a: float, b: float, f, evals: int):
    """Golden-section search on ``[a, b]`` using ``evals`` new evaluations."""
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - inv * (b - a)
    d = a + inv * (b - a)
    fc, fd = f(c), f(d)
    used = 2
    while used < evals:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = f(d)
        used += 1


def cv_nuclear(
    data: RegressionData,
    split_fraction: float = 2.0 / 3.0,
    search: Optional[LambdaSearch] = None,
    options: Optional[SolverOptions] = None,
) -> EstimateResult:
    """Penalized nuclear-norm estimate with the weight chosen by hold-out validation.

    The regression columns are split chronologically. Every candidate is
    fitted on the leading part and scored by its one-step-ahead squared
    error on the trailing part; the best candidate (ties to the smaller
    weight) is refitted on all data. ARX blocks share one weight.
    """
    if not 0.0 < split_fraction < 1.0:
        raise ValueError("split_fraction must lie in (0, 1)")
    search = search or LambdaSearch()
    t0 = time.perf_counter()
    n_est = int(round(split_fraction * data.N))
    if not 0 < n_est < data.N:
        raise ValueError("split leaves an empty estimation or validation part")
    est = data.subset(slice(0, n_est))
    val = data.subset(slice(n_est, None))
    reports: list[SolverReport] = []
    scores: dict[float, float] = {}

    def score(lam: float) -> float:
        lam = float(lam)
        if lam not in scores:
            spec = ProblemSpec.from_structure(est, Penalized(lam))
            theta, report = solve_penalized(spec, options)
            reports.append(report)
            scores[lam] = val.residual_ss(theta)
        return scores[lam]

    if search.grid is not None:
        grid = sorted(float(g) for g in search.grid)
        for lam in grid:
            score(lam)
    else:
        theta_ls = least_squares(data)
        scale = data.residual_ss(theta_ls) / max(1.0, sum(block_nuclear_norms(data, theta_ls)))
        grid = list(scale * np.logspace(np.log10(search.span[0]), np.log10(search.span[1]), search.num))
        for lam in grid:
            score(lam)
        if search.refine_evals > 0 and len(grid) > 1:
            i = min(range(len(grid)), key=lambda j: (scores[grid[j]], grid[j]))
            lo = grid[max(i - 1, 0)]
            hi = grid[min(i + 1, len(grid) - 1)]
            _golden_points(
                math.log(lo), math.log(hi), lambda x: score(math.exp(x)), search.refine_evals
            )
    best = min(scores, key=lambda lam: (scores[lam], lam))
    theta, report = solve_penalized(ProblemSpec.from_structure(data, Penalized(best)), options)
    reports.append(report)
    return EstimateResult(
        theta=theta,
        structure=data.structure,
        reports=reports,
        lam=best,
        wall_time_seconds=time.perf_counter() - t0,
        history={"grid": grid, "scores": dict(sorted(scores.items()))},
    )
