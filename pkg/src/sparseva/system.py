"""Random test systems, data simulation and FIR/ARX regression construction.

Time index convention: array position ``i`` holds sample ``t = i + 1``.
All filters start from zero initial conditions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.signal import lfilter

RngLike = Union[np.random.Generator, int, None]

#: Low-pass input filter ``F_u(q) = 0.436 / (1 - 0.9 q^-1)``.
INPUT_FILTER_NUM = (0.436,)
INPUT_FILTER_DEN = (1.0, -0.9)

#: Number of impulse-response taps used for gain normalization.
NORM_TAPS = 35
#: Truncation length of the analytic noise gain.
NOISE_GAIN_TAPS = 200
#: SNR values above this are treated as infinite.
MAX_SNR_DB = 1e6


class InsufficientDataError(ValueError):
    """Raised when a record is too short for the requested lag structure."""


class CalibrationError(ValueError):
    """Raised when noise cannot be calibrated against a zero signal."""


def _as_rng(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclass(frozen=True)
class LinearSystem:
    """Stable discrete-time SISO transfer function in pole/zero/gain form.

    The transfer function is strictly proper with relative degree one,

        G(q) = gain * q^-1 * prod(1 - z_i q^-1) / prod(1 - p_i q^-1),

    so that ``g_1 = gain`` and there is no direct feed-through term.
    """

    poles: np.ndarray
    zeros: np.ndarray
    gain: float

    def __post_init__(self):
        object.__setattr__(self, "poles", np.atleast_1d(np.asarray(self.poles, dtype=complex)))
        object.__setattr__(self, "zeros", np.atleast_1d(np.asarray(self.zeros, dtype=complex)))
        object.__setattr__(self, "gain", float(self.gain))
        if self.poles.size < 1:
            raise ValueError("a LinearSystem needs at least one pole")
        for roots in (self.poles, self.zeros):
            if not _conjugate_closed(roots):
                raise ValueError("complex poles/zeros must come in conjugate pairs")

    @property
    def order(self) -> int:
        return int(self.poles.size)

    @property
    def max_pole_radius(self) -> float:
        return float(np.max(np.abs(self.poles)))

    def polynomials(self):
        """Return ``(num, den)`` coefficient arrays in powers of ``q^-1``."""
        den = np.real(np.atleast_1d(np.poly(self.poles)))
        num = self.gain * np.concatenate([[0.0], np.real(np.atleast_1d(np.poly(self.zeros)))])
        return num, den

    def filter(self, x: np.ndarray) -> np.ndarray:
        num, den = self.polynomials()
        return lfilter(num, den, np.asarray(x, dtype=float))


def _conjugate_closed(roots: np.ndarray, tol: float = 1e-10) -> bool:
    remaining = list(roots)
    while remaining:
        r = remaining.pop()
        if abs(r.imag) <= tol:
            continue
        dists = [abs(r.conjugate() - s) for s in remaining]
        if not dists or min(dists) > tol * max(1.0, abs(r)):
            return False
        remaining.pop(int(np.argmin(dists)))
    return True


def _random_roots(count: int, r_min: float, r_max: float, rng: np.random.Generator) -> np.ndarray:
    roots = []
    while len(roots) < count:
        left = count - len(roots)
        radius = rng.uniform(r_min, r_max)
        if left >= 2 and rng.random() < 0.5:
            angle = rng.uniform(0.0, np.pi)
            p = radius * np.exp(1j * angle)
            roots.extend([p, np.conj(p)])
        else:
            roots.append(complex(radius if rng.random() < 0.5 else -radius))
    return np.array(roots, dtype=complex)


def generate_random_system(
    order: int, pole_radius_max: float = 0.9, rng: RngLike = None
) -> LinearSystem:
    """Draw a random stable system of the given order.

    Poles are either real or conjugate pairs (a pair is chosen with
    probability 0.5 whenever two or more poles remain), with magnitudes
    uniform on ``[0.1, pole_radius_max)`` and pair angles uniform on
    ``[0, pi]``. ``order - 1`` zeros are drawn the same way with magnitude
    cap 0.95. The gain is scaled so that the 2-norm of the first 35
    impulse-response taps is uniform on ``[0.5, 2]``.
    """
    if isinstance(order, bool) or int(order) != order or not 1 <= order <= 10:
        raise ValueError(f"order must be an integer in [1, 10], got {order!r}")
    if not 0.0 < pole_radius_max < 1.0:
        raise ValueError(f"pole_radius_max must lie in (0, 1), got {pole_radius_max!r}")
    order = int(order)
    rng = _as_rng(rng)
    poles = _random_roots(order, min(0.1, pole_radius_max / 2), pole_radius_max, rng)
    zeros = _random_roots(order - 1, 0.1, 0.95, rng)
    unit = LinearSystem(poles, zeros, 1.0)
    g = impulse_response(unit, NORM_TAPS)
    target = rng.uniform(0.5, 2.0)
    return LinearSystem(poles, zeros, target / np.linalg.norm(g))


def generate_noise_model(
    order: int, pole_radius_max: float = 0.9, rng: RngLike = None
) -> LinearSystem:
    """Random colouring filter ``H0`` with unit noise gain.

    Drawn like :func:`generate_random_system`, then rescaled so that the
    squared impulse response (200 taps) sums to one; the noise colour is
    thereby decoupled from the noise power.
    """
    shape = generate_random_system(order, pole_radius_max, rng)
    unit = LinearSystem(shape.poles, shape.zeros, 1.0)
    return LinearSystem(shape.poles, shape.zeros, 1.0 / np.sqrt(noise_gain(unit)))


def impulse_response(sys: LinearSystem, n: int) -> np.ndarray:
    """Taps ``g_1 .. g_n`` of the impulse response of ``sys``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    impulse = np.zeros(n + 1)
    impulse[0] = 1.0
    return sys.filter(impulse)[1:]


def arx_impulse_response(a, b, n: int) -> np.ndarray:
    """First ``n`` impulse-response taps of ``B(q)/A(q)``.

    ``a`` holds ``a_1..a_nA`` (the leading 1 of ``A`` is implicit) and ``b``
    holds ``b_1..b_nB``. Unstable ``A`` is allowed; the taps then grow.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    impulse = np.zeros(n + 1)
    impulse[0] = 1.0
    with np.errstate(over="ignore", invalid="ignore"):
        return lfilter(np.concatenate([[0.0], b]), np.concatenate([[1.0], a]), impulse)[1:]


def lowpass_filter(w) -> np.ndarray:
    """Apply the input shaping filter ``0.436 / (1 - 0.9 q^-1)``."""
    return lfilter(INPUT_FILTER_NUM, INPUT_FILTER_DEN, np.asarray(w, dtype=float))


def lowpass_input(N: int, rng: RngLike = None) -> np.ndarray:
    """Unit-variance Gaussian white noise passed through the low-pass filter."""
    if N < 1:
        raise ValueError("N must be >= 1")
    return lowpass_filter(_as_rng(rng).standard_normal(N))


@dataclass
class DataRecord:
    u: np.ndarray
    y: np.ndarray
    noise_sigma: float = 0.0
    seed: int = -1

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float).ravel()
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.u.size < 1 or self.u.size != self.y.size:
            raise ValueError("u and y must be nonempty and of equal length")

    @property
    def N(self) -> int:
        return int(self.u.size)


def noise_gain(sys_h: Optional[LinearSystem], taps: int = NOISE_GAIN_TAPS) -> float:
    """Sum of squared noise-filter taps (1 for white noise)."""
    if sys_h is None:
        return 1.0
    return float(np.sum(impulse_response(sys_h, taps) ** 2))


def simulate(
    sys_g: LinearSystem,
    sys_h: Optional[LinearSystem],
    u,
    sigma_e: float,
    rng: RngLike = None,
) -> DataRecord:
    """Simulate ``y = G0 u + H0 e`` with ``e ~ N(0, sigma_e^2)`` i.i.d.

    ``sys_h=None`` means white output noise (``H0 = 1``). When ``rng`` is an
    integer it is stored as the record seed.
    """
    u = np.asarray(u, dtype=float).ravel()
    if u.size < 1:
        raise ValueError("u must be nonempty")
    if sigma_e < 0:
        raise ValueError("sigma_e must be nonnegative")
    seed = int(rng) if isinstance(rng, (int, np.integer)) else -1
    e = sigma_e * _as_rng(rng).standard_normal(u.size)
    v = e if sys_h is None else sys_h.filter(e)
    return DataRecord(u=u, y=sys_g.filter(u) + v, noise_sigma=float(sigma_e), seed=seed)


def calibrate_noise(
    sys_g: LinearSystem, sys_h: Optional[LinearSystem], u, target_snr_db: float
) -> float:
    """Noise standard deviation giving the requested output SNR.

    The SNR is ``var(G0 u) / (sigma_e^2 * sum h_k^2)`` with the noise gain
    truncated at 200 taps.
    """
    y0 = sys_g.filter(u)
    signal_var = float(np.var(y0))
    if signal_var == 0.0:
        raise CalibrationError("noise-free output is identically zero")
    snr_db = min(float(target_snr_db), MAX_SNR_DB)
    # log domain so the capped limit underflows to 0 instead of overflowing
    return float(np.sqrt(signal_var / noise_gain(sys_h)) * 10.0 ** (-snr_db / 20.0))


@dataclass(frozen=True)
class ModelStructure:
    """FIR(n) or ARX(nA, nB) model structure with odd block lengths."""

    kind: str
    n: int = 0
    na: int = 0
    nb: int = 0

    def __post_init__(self):
        if self.kind not in ("FIR", "ARX"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        lengths = (self.n,) if self.kind == "FIR" else (self.na, self.nb)
        for length in lengths:
            if length < 1 or length % 2 == 0:
                raise ValueError(f"block lengths must be positive odd integers, got {length}")

    @classmethod
    def fir(cls, n: int) -> "ModelStructure":
        return cls("FIR", n=n)

    @classmethod
    def arx(cls, na: int, nb: int) -> "ModelStructure":
        return cls("ARX", na=na, nb=nb)

    @property
    def n_params(self) -> int:
        return self.n if self.kind == "FIR" else self.na + self.nb

    @property
    def max_lag(self) -> int:
        return self.n if self.kind == "FIR" else max(self.na, self.nb)

    @property
    def blocks(self) -> list[slice]:
        """Index ranges of the Hankel-embedded parameter blocks."""
        if self.kind == "FIR":
            return [slice(0, self.n)]
        return [slice(0, self.na), slice(self.na, self.na + self.nb)]

    def impulse_response(self, theta, n: int) -> np.ndarray:
        """Impulse response of the model with parameters ``theta`` (``n`` taps)."""
        theta = np.asarray(theta, dtype=float)
        if self.kind == "FIR":
            g = np.zeros(n)
            k = min(n, self.n)
            g[:k] = theta[:k]
            return g
        return arx_impulse_response(theta[: self.na], theta[self.na :], n)


@dataclass
class RegressionData:
    """Linear regression ``Y = Phi^T theta + e``; ``Phi`` is parameters x samples."""

    Y: np.ndarray
    Phi: np.ndarray
    structure: ModelStructure = field(default=None)

    def __post_init__(self):
        self.Y = np.asarray(self.Y, dtype=float).ravel()
        self.Phi = np.atleast_2d(np.asarray(self.Phi, dtype=float))
        if self.Phi.shape[1] != self.Y.size:
            raise ValueError("Phi must have one column per element of Y")
        if self.structure is not None and self.Phi.shape[0] != self.structure.n_params:
            raise ValueError("Phi row count does not match the model structure")

    @property
    def n_params(self) -> int:
        return int(self.Phi.shape[0])

    @property
    def N(self) -> int:
        return int(self.Y.size)

    def residual_ss(self, theta) -> float:
        r = self.Y - self.Phi.T @ np.asarray(theta, dtype=float)
        return float(r @ r)

    def subset(self, cols: slice) -> "RegressionData":
        return RegressionData(self.Y[cols], self.Phi[:, cols], self.structure)


def build_regression(data: DataRecord, structure: ModelStructure) -> RegressionData:
    """Stack regressors for columns ``t = maxlag+1 .. N`` (no zero padding)."""
    lag = structure.max_lag
    N = data.N
    if N <= lag:
        raise InsufficientDataError(f"need more than {lag} samples, got {N}")
    t = np.arange(lag, N)
    if structure.kind == "FIR":
        rows = [data.u[t - k] for k in range(1, structure.n + 1)]
    else:
        rows = [-data.y[t - k] for k in range(1, structure.na + 1)]
        rows += [data.u[t - k] for k in range(1, structure.nb + 1)]
    return RegressionData(data.y[t], np.vstack(rows), structure)
