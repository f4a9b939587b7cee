"""ADMM solvers for Hankel weighted-nuclear-norm regularized least squares.

Two problem shapes are handled over one or more disjoint parameter blocks
``theta_b`` with weights ``(L1_b, L2_b)``:

* penalized:    min ||Y - Phi^T theta||^2 + sum_b lam_b ||L1_b H(theta_b) L2_b||_*
* constrained:  min sum_b w_b ||L1_b H(theta_b) L2_b||_*  s.t. ||Y - Phi^T theta||^2 <= rho

Both split ``Z_b = L1_b H(theta_b) L2_b``. The matrix step is singular value
thresholding, the theta step is a linear solve (penalized) or a
quadratic minimization over the residual ball (constrained). The dual
variables are kept in scaled form.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from .hankel import HankelSpec, WeightPair, hankel, hankel_adjoint, nuclear_norm, svt
from .system import RegressionData


class InfeasibleError(ValueError):
    """The residual bound lies below the least-squares residual."""


class NumericalError(RuntimeError):
    """The multiplier search failed."""


@dataclass
class Block:
    index: slice
    weights: Optional[WeightPair] = None
    multiplier: float = 1.0


@dataclass
class Penalized:
    lam: float


@dataclass
class Constrained:
    rho: float


@dataclass
class ProblemSpec:
    regression: RegressionData
    blocks: list[Block]
    mode: Union[Penalized, Constrained]

    def __post_init__(self):
        n = self.regression.n_params
        covered = np.zeros(n, dtype=int)
        for b in self.blocks:
            start, stop, step = b.index.indices(n)
            if step != 1 or stop <= start:
                raise ValueError("blocks must be contiguous, nonempty ranges")
            HankelSpec(stop - start)
            covered[start:stop] += 1
            if b.multiplier < 0:
                raise ValueError("block multipliers must be nonnegative")
        if not np.all(covered == 1):
            raise ValueError("blocks must be disjoint and cover theta exactly")

    @classmethod
    def from_structure(cls, regression: RegressionData, mode, weights=None, multipliers=None):
        """One block per Hankel block of ``regression.structure``."""
        slices = regression.structure.blocks
        weights = weights or [None] * len(slices)
        multipliers = multipliers or [1.0] * len(slices)
        blocks = [Block(s, w, float(c)) for s, w, c in zip(slices, weights, multipliers)]
        return cls(regression, blocks, mode)


@dataclass
class SolverOptions:
    beta: float = 1.0
    abs_tol: float = 1e-6
    rel_tol: float = 1e-5
    max_iter: int = 2000
    multiplier_tol: float = 1e-12
    balance_ratio: float = 2.0
    balance_factor: float = 2.0
    relaxation: float = 1.8

    def __post_init__(self):
        if min(self.beta, self.abs_tol, self.rel_tol, self.multiplier_tol) <= 0:
            raise ValueError("solver options must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class SolverReport:
    iterations: int = 0
    primal_residuals: list = field(default_factory=list)
    dual_residuals: list = field(default_factory=list)
    objective: float = float("nan")
    vn: float = float("nan")
    converged: bool = False
    wall_time: float = 0.0
    beta: float = float("nan")
    multiplier: float = 0.0
    duals: list = field(default_factory=list)


def residual_ss(regression: RegressionData, theta) -> float:
    """``V_N(theta) = ||Y - Phi^T theta||^2``."""
    return regression.residual_ss(theta)


def least_squares_solution(Phi, Y) -> np.ndarray:
    """Least-squares parameters, with a tiny ridge when ``Phi Phi^T`` is singular."""
    Phi = np.atleast_2d(np.asarray(Phi, dtype=float))
    Y = np.asarray(Y, dtype=float)
    G = Phi @ Phi.T
    b = Phi @ Y
    try:
        c = cholesky(G, lower=False)
        if np.min(np.abs(np.diag(c))) ** 2 > 1e-13 * np.max(np.diag(G)):
            return solve_triangular(c, solve_triangular(c, b, trans="T"))
    except np.linalg.LinAlgError:
        pass
    ridge = 1e-10 * np.trace(G) / G.shape[0]
    return np.linalg.solve(G + ridge * np.eye(G.shape[0]), b)


class _HankelMap:
    """Stacked linear map ``theta -> [L1_b H(theta_b) L2_b]_b`` and its adjoint."""

    def __init__(self, blocks: Sequence[Block], n: int):
        self.n = n
        self.blocks = []
        for b in blocks:
            start, stop, _ = b.index.indices(n)
            spec = HankelSpec(stop - start)
            w = b.weights or WeightPair.identity(spec.m)
            if w.L1.shape[0] != spec.m:
                raise ValueError("weight size does not match the Hankel block")
            self.blocks.append((slice(start, stop), spec, w.L1, w.L2))
        self.size = sum(s.m * s.m for _, s, _, _ in self.blocks)

    def forward(self, theta) -> list:
        return [L1 @ hankel(theta[sl], spec) @ L2 for sl, spec, L1, L2 in self.blocks]

    def adjoint(self, mats) -> np.ndarray:
        out = np.zeros(self.n)
        for (sl, spec, L1, L2), Mb in zip(self.blocks, mats):
            out[sl] = hankel_adjoint(L1 @ Mb @ L2, spec)
        return out

    def gram(self) -> np.ndarray:
        M = np.zeros((self.n, self.n))
        for sl, spec, L1, L2 in self.blocks:
            A1, A2 = L1 @ L1, L2 @ L2
            k = spec.n
            for j in range(k):
                e = np.zeros(k)
                e[j] = 1.0
                M[sl, sl.start + j] = hankel_adjoint(A1 @ hankel(e, spec) @ A2, spec)
        return 0.5 * (M + M.T)


class _Pencil:
    """Simultaneous diagonalization of ``M`` (PD) and ``G`` (PSD).

    ``Q^T M Q = I`` and ``Q^T G Q = diag(D)``.
    """

    def __init__(self, M, G):
        R = cholesky(M, lower=False)
        T = solve_triangular(R, G, trans="T")
        S = solve_triangular(R, T.T, trans="T")
        D, V = np.linalg.eigh(0.5 * (S + S.T))
        D[D < 1e-13 * max(D.max(), 0.0)] = 0.0
        self.D = D
        self.Q = solve_triangular(R, V)

    def solve(self, alpha: float, beta: float, rhs) -> np.ndarray:
        """Solve ``(alpha G + beta M) x = rhs``."""
        return self.Q @ ((self.Q.T @ rhs) / (alpha * self.D + beta))


class _Ball:
    """Minimizer of ``0.5 x^T M x + q^T x`` over ``||Y - Phi^T x||^2 <= rho``.

    In pencil coordinates ``x = Q w`` the KKT point for multiplier ``mu`` is
    ``w_i = (2 mu c_i - d_i) / (1 + 2 mu D_i)`` with ``c = Q^T Phi Y`` and
    ``d = Q^T q``, and the residual is
    ``r(mu) = r_inf + sum_{D_i>0} (d_i D_i + c_i)^2 / (D_i (1 + 2 mu D_i)^2)``,
    which is convex and decreasing in ``mu``.
    """

    def __init__(self, pencil: _Pencil, Phi, Y):
        self.pencil = pencil
        self.Phi = Phi
        self.Y = Y
        self.c = pencil.Q.T @ (Phi @ Y)
        self.pos = pencil.D > 0
        w_inf = np.zeros_like(self.c)
        w_inf[self.pos] = self.c[self.pos] / pencil.D[self.pos]
        r = Y - Phi.T @ (pencil.Q @ w_inf)
        self.r_inf = float(r @ r)
        # roundoff floor for residuals (measured disagreement is ~1e-18 ||Y||^2);
        # matters when the data are (nearly) noiseless
        self.floor = 1e-16 * float(Y @ Y)
        # the degenerate ball is this one point, independent of the weights
        self.theta_ls = least_squares_solution(Phi, Y) if self.pos.all() else None

    def theta(self, mu: float, d) -> np.ndarray:
        D = self.pencil.D
        if np.isinf(mu):
            if self.theta_ls is not None:
                return self.theta_ls.copy()
            w = -d.copy()
            w[self.pos] = self.c[self.pos] / D[self.pos]
        else:
            w = (2.0 * mu * self.c - d) / (1.0 + 2.0 * mu * D)
        return self.pencil.Q @ w

    def solve(self, q, rho: float, tol: float = 1e-12) -> tuple[np.ndarray, float]:
        d = self.pencil.Q.T @ q
        if rho < self.r_inf * (1.0 - 1e-9) - self.floor:
            raise InfeasibleError(f"rho={rho:.6g} is below the least-squares residual {self.r_inf:.6g}")
        gap = rho - self.r_inf
        if gap <= tol * max(rho, 1e-300) + self.floor:
            return self.theta(np.inf, d), np.inf
        D = self.pencil.D[self.pos]
        e2 = (d[self.pos] * D + self.c[self.pos]) ** 2

        def excess(mu):
            return float(np.sum(e2 / (D * (1.0 + 2.0 * mu * D) ** 2)))

        if excess(0.0) <= gap:
            return self.theta(0.0, d), 0.0
        mu = _secular_root(D, e2, gap, tol * rho)
        theta = self.theta(mu, d)
        return theta, mu


def _secular_root(D, e2, gap: float, abs_tol: float, max_iter: int = 200) -> float:
    """Root of ``s(mu) = sum e2 / (D (1 + 2 mu D)^2) = gap`` on the feasible side.

    Newton on ``s^(-1/2)``, which is exactly linear for a single term,
    safeguarded by bisection inside a bracket.
    """
    if not np.all(np.isfinite(e2)) or gap <= 0:
        raise NumericalError("invalid multiplier equation")
    k = e2.size
    per = np.sqrt(e2 / (D * gap / k))
    hi = float(np.max(np.maximum((per - 1.0) / (2.0 * D), 0.0)))
    lo = 0.0

    def s_and_ds(mu):
        t = 1.0 + 2.0 * mu * D
        return float(np.sum(e2 / (D * t * t))), float(-np.sum(4.0 * e2 / (t * t * t)))

    s_hi, _ = s_and_ds(hi)
    if s_hi > gap * (1.0 + 1e-12):
        raise NumericalError(f"failed to bracket multiplier (s(hi)={s_hi:.6g}, gap={gap:.6g})")
    mu = lo
    target = gap ** -0.5
    for _ in range(max_iter):
        s, ds = s_and_ds(mu)
        if abs(s - gap) <= abs_tol and s <= gap + abs_tol:
            return mu
        if s > gap:
            lo = mu
        else:
            hi = mu
        psi = s ** -0.5 - target
        dpsi = -0.5 * s ** -1.5 * ds
        step = mu - psi / dpsi if dpsi > 0 else np.nan
        if not lo < step < hi:
            step = 0.5 * (lo + hi)
        if hi - lo <= 1e-15 * hi:
            break
        mu = step
    return hi


def qcqp_ball_step(P, q, Phi, Y, rho: float) -> tuple[np.ndarray, float]:
    """Minimize ``0.5 x^T P x + q^T x`` subject to ``||Y - Phi^T x||^2 <= rho``.

    Returns ``(x, mu)`` where ``mu >= 0`` is the constraint multiplier
    (``inf`` when the ball degenerates to the least-squares point).
    """
    Phi = np.atleast_2d(np.asarray(Phi, dtype=float))
    Y = np.asarray(Y, dtype=float)
    ball = _Ball(_Pencil(np.asarray(P, dtype=float), Phi @ Phi.T), Phi, Y)
    return ball.solve(np.asarray(q, dtype=float), float(rho))


def _objective_terms(hmap: _HankelMap, theta, multipliers) -> float:
    return float(sum(c * nuclear_norm(Z) for c, Z in zip(multipliers, hmap.forward(theta))))


def _admm(hmap, theta_step, thresholds, theta0, opts: SolverOptions, report: SolverReport):
    """Shared ADMM loop; ``thresholds[b]`` is the nuclear weight of block ``b``
    (the svt threshold is ``thresholds[b] / beta``)."""
    beta = opts.beta
    theta = theta0
    Z = hmap.forward(theta)
    U = [np.zeros_like(z) for z in Z]
    sqrt_p, sqrt_n = np.sqrt(hmap.size), np.sqrt(hmap.n)
    for k in range(1, opts.max_iter + 1):
        v = hmap.adjoint([z - u for z, u in zip(Z, U)])
        theta = theta_step(v, beta)
        Ax = hmap.forward(theta)
        Z_old = Z
        alpha = opts.relaxation
        Ah = Ax if alpha == 1.0 else [alpha * a + (1.0 - alpha) * z for a, z in zip(Ax, Z_old)]
        Z = [svt(a + u, t / beta) for a, u, t in zip(Ah, U, thresholds)]
        for b in range(len(U)):
            U[b] = U[b] + Ah[b] - Z[b]
        r = np.sqrt(sum(np.sum((a - z) ** 2) for a, z in zip(Ax, Z)))
        s = beta * np.linalg.norm(hmap.adjoint([z - zo for z, zo in zip(Z, Z_old)]))
        norm_ax = np.sqrt(sum(np.sum(a * a) for a in Ax))
        norm_z = np.sqrt(sum(np.sum(z * z) for z in Z))
        eps_pri = sqrt_p * opts.abs_tol + opts.rel_tol * max(norm_ax, norm_z)
        eps_dual = sqrt_n * opts.abs_tol + opts.rel_tol * beta * np.linalg.norm(hmap.adjoint(U))
        report.primal_residuals.append(float(r))
        report.dual_residuals.append(float(s))
        report.iterations = k
        if r <= eps_pri and s <= eps_dual:
            report.converged = True
            break
        if r > opts.balance_ratio * s:
            beta *= opts.balance_factor
            U = [u / opts.balance_factor for u in U]
        elif s > opts.balance_ratio * r:
            beta /= opts.balance_factor
            U = [u * opts.balance_factor for u in U]
    report.beta = beta
    report.duals = [beta * u for u in U]
    return theta


def _initial_theta(spec: ProblemSpec, theta0):
    reg = spec.regression
    if theta0 is not None:
        return np.asarray(theta0, dtype=float).copy()
    return least_squares_solution(reg.Phi, reg.Y)


def solve_penalized(spec: ProblemSpec, opts: Optional[SolverOptions] = None, theta0=None):
    """Penalized weighted-nuclear-norm least squares.

    Returns ``(theta, report)``; ``report.duals[b]`` is ``lam_b`` times a
    subgradient of the nuclear norm at the final ``Z_b``.
    """
    if not isinstance(spec.mode, Penalized):
        raise TypeError("solve_penalized needs a Penalized problem")
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    reg = spec.regression
    report = SolverReport()
    lams = [spec.mode.lam * b.multiplier for b in spec.blocks]
    hmap = _HankelMap(spec.blocks, reg.n_params)
    theta = _initial_theta(spec, theta0)
    if all(lam == 0 for lam in lams):
        theta = least_squares_solution(reg.Phi, reg.Y)
        report.converged = True
    else:
        pencil = _Pencil(hmap.gram(), reg.Phi @ reg.Phi.T)
        two_phi_y = 2.0 * (reg.Phi @ reg.Y)

        def theta_step(v, beta):
            return pencil.solve(2.0, beta, two_phi_y + beta * v)

        theta = _admm(hmap, theta_step, lams, theta, opts, report)
    report.vn = residual_ss(reg, theta)
    report.objective = report.vn + _objective_terms(hmap, theta, lams)
    report.wall_time = time.perf_counter() - t0
    return theta, report


def solve_constrained(spec: ProblemSpec, opts: Optional[SolverOptions] = None, theta0=None):
    """Weighted nuclear norm minimization over the residual ball ``V_N <= rho``.

    Every theta step is ball-feasible, so the returned estimate satisfies
    the residual bound up to the multiplier-search tolerance.
    """
    if not isinstance(spec.mode, Constrained):
        raise TypeError("solve_constrained needs a Constrained problem")
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    reg = spec.regression
    rho = float(spec.mode.rho)
    report = SolverReport()
    weights = [b.multiplier for b in spec.blocks]
    hmap = _HankelMap(spec.blocks, reg.n_params)
    ball = _Ball(_Pencil(hmap.gram(), reg.Phi @ reg.Phi.T), reg.Phi, reg.Y)
    if rho < ball.r_inf * (1.0 - 1e-9) - ball.floor:
        raise InfeasibleError(f"rho={rho:.6g} is below V_N(theta_LS)={ball.r_inf:.6g}")
    theta = _initial_theta(spec, theta0)
    if residual_ss(reg, theta) > rho:
        theta = least_squares_solution(reg.Phi, reg.Y)

    def theta_step(v, beta):
        x, mu = ball.solve(-v, rho, opts.multiplier_tol)
        report.multiplier = mu * beta
        return x

    theta = _admm(hmap, theta_step, weights, theta, opts, report)
    report.vn = residual_ss(reg, theta)
    report.objective = _objective_terms(hmap, theta, weights)
    report.wall_time = time.perf_counter() - t0
    return theta, report
