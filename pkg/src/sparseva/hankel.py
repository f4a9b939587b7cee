"""Square Hankel embedding of impulse-response blocks and nuclear-norm tools."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class StructureError(ValueError):
    """Raised for parameter blocks that cannot be embedded in a square Hankel matrix."""


@dataclass(frozen=True)
class HankelSpec:
    n: int

    def __post_init__(self):
        if self.n < 1 or self.n % 2 == 0:
            raise StructureError(f"Hankel block length must be a positive odd integer, got {self.n}")

    @property
    def m(self) -> int:
        return (self.n + 1) // 2

    @classmethod
    def for_length(cls, n: int) -> "HankelSpec":
        return cls(int(n))


def _anti_diagonal_index(m: int) -> np.ndarray:
    i = np.arange(m)
    return i[:, None] + i[None, :]


def hankel(theta, spec: HankelSpec | None = None) -> np.ndarray:
    """Return the m x m Hankel matrix with entry ``(i, j) = theta[i + j]`` (0-based)."""
    theta = np.asarray(theta, dtype=float).ravel()
    spec = spec or HankelSpec.for_length(theta.size)
    if theta.size != spec.n:
        raise StructureError(f"expected {spec.n} parameters, got {theta.size}")
    return theta[_anti_diagonal_index(spec.m)]


def hankel_adjoint(M, spec: HankelSpec | None = None) -> np.ndarray:
    """Adjoint of :func:`hankel`: plain sums along anti-diagonals."""
    M = np.asarray(M, dtype=float)
    m = M.shape[0]
    if M.shape != (m, m):
        raise StructureError("adjoint expects a square matrix")
    spec = spec or HankelSpec(2 * m - 1)
    if spec.m != m:
        raise StructureError(f"expected a {spec.m}x{spec.m} matrix, got {m}x{m}")
    return np.bincount(_anti_diagonal_index(m).ravel(), weights=M.ravel(), minlength=spec.n)


def nuclear_norm(X) -> float:
    return float(np.sum(np.linalg.svd(np.asarray(X, dtype=float), compute_uv=False)))


def svt(X, tau: float) -> np.ndarray:
    """Singular value thresholding, the prox of ``tau * ||.||_*``."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    U, s, Vt = np.linalg.svd(np.asarray(X, dtype=float), full_matrices=False)
    return (U * np.maximum(s - tau, 0.0)) @ Vt


def inv_sqrt_psd(W, delta: float) -> np.ndarray:
    """``(W + delta I)^(-1/2)`` for symmetric PSD ``W``."""
    W = np.asarray(W, dtype=float)
    if delta <= 0:
        raise ValueError("delta must be positive")
    if np.max(np.abs(W - W.T), initial=0.0) > 1e-8 * max(1.0, np.max(np.abs(W), initial=0.0)):
        raise ValueError("W must be symmetric")
    lam, V = np.linalg.eigh(0.5 * (W + W.T))
    lam = np.maximum(lam, 0.0) + delta
    R = (V / np.sqrt(lam)) @ V.T
    return 0.5 * (R + R.T)


@dataclass(frozen=True)
class WeightPair:
    """Left/right factors of a weighted nuclear norm ``||L1 X L2||_*``.

    In the reweighting loop ``L1 = (W1 + delta I)^(-1/2)`` and likewise
    for ``L2``.
    """

    L1: np.ndarray
    L2: np.ndarray

    def __post_init__(self):
        for L in (self.L1, self.L2):
            if L.ndim != 2 or L.shape[0] != L.shape[1]:
                raise ValueError("weights must be square")
            if np.max(np.abs(L - L.T)) > 1e-12 * max(1.0, np.max(np.abs(L))):
                raise ValueError("weights must be symmetric")
            if np.linalg.eigvalsh(L)[0] <= 0:
                raise ValueError("weights must be positive definite")

    @classmethod
    def identity(cls, m: int) -> "WeightPair":
        return cls(np.eye(m), np.eye(m))

    def apply(self, X) -> np.ndarray:
        return self.L1 @ X @ self.L2


def sdp_weights(X, L: WeightPair) -> tuple[np.ndarray, np.ndarray]:
    """Minimizers ``(W1, W2)`` of ``0.5 * [Tr(L1^2 W1) + Tr(L2^2 W2)]``
    subject to ``[[W1, X], [X^T, W2]] >= 0``.

    With ``L1 X L2 = U S V^T`` the minimizers are
    ``W1 = L1^-1 U S U^T L1^-1`` and ``W2 = L2^-1 V S V^T L2^-1``; the block
    matrix factors as a congruence of ``[U; V] S [U; V]^T`` and the minimum
    value is ``||L1 X L2||_*``.
    """
    U, s, Vt = np.linalg.svd(L.apply(X), full_matrices=False)
    A = np.linalg.solve(L.L1, U)
    B = np.linalg.solve(L.L2, Vt.T)
    W1 = (A * s) @ A.T
    W2 = (B * s) @ B.T
    return 0.5 * (W1 + W1.T), 0.5 * (W2 + W2.T)


def weight_update(H_opt, L: WeightPair, delta: float) -> WeightPair:
    """Next reweighting factors from the current Hankel estimate."""
    W1, W2 = sdp_weights(H_opt, L)
    return WeightPair(inv_sqrt_psd(W1, delta), inv_sqrt_psd(W2, delta))


def logdet_surrogate(W1, W2, delta: float) -> float:
    """``logdet(W1 + delta I) + logdet(W2 + delta I)``."""
    total = 0.0
    for W in (W1, W2):
        sign, val = np.linalg.slogdet(W + delta * np.eye(W.shape[0]))
        total += val
    return float(total)
