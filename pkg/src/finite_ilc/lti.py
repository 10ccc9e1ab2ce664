"""Discrete-time SISO systems, impulse responses and lifted (finite-time) operators.

Polynomials are stored as coefficient arrays in ascending powers of z^-1,
i.e. ``num = [b0, b1, b2]`` means ``b0 + b1 z^-1 + b2 z^-2``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

TAIL_TOL = 1e-12
STABILITY_TOL = 1e-9


class PoleOnGridError(ZeroDivisionError):
    pass


class UnstableSystemError(OverflowError):
    pass


class InsufficientHorizonError(ValueError):
    pass


class UnstableClosedLoopWarning(RuntimeWarning):
    pass


def _as_coeffs(c) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(c, dtype=float)).copy()
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("coefficients must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(arr)):
        raise ValueError("coefficients must be finite")
    return arr


def polyval_zinv(coeffs: np.ndarray, omega) -> np.ndarray:
    """Evaluate sum_k c_k e^{-j omega k}."""
    zinv = np.exp(-1j * np.asarray(omega, dtype=float))
    return np.polyval(np.asarray(coeffs)[::-1], zinv)


@dataclass(frozen=True)
class RationalTransferFunction:
    num: np.ndarray
    den: np.ndarray
    ts: float = 1e-3

    def __post_init__(self):
        num = _as_coeffs(self.num)
        den = _as_coeffs(self.den)
        if den[0] == 0.0:
            raise ValueError("denominator z^0 coefficient must be nonzero")
        if not self.ts > 0:
            raise ValueError("sample time must be positive")
        object.__setattr__(self, "num", num / den[0])
        object.__setattr__(self, "den", den / den[0])
        object.__setattr__(self, "ts", float(self.ts))

    @classmethod
    def gain(cls, k: float, ts: float = 1e-3) -> "RationalTransferFunction":
        return cls([k], [1.0], ts)

    @property
    def delay(self) -> int:
        """Number of leading zero numerator coefficients."""
        nz = np.flatnonzero(self.num)
        return int(nz[0]) if nz.size else 0

    def is_zero(self) -> bool:
        return not np.any(self.num)

    def poles(self) -> np.ndarray:
        # roots in z of z^n den(z^-1)
        return np.roots(np.trim_zeros(self.den, "b"))

    def zeros(self) -> np.ndarray:
        return np.roots(np.trim_zeros(np.trim_zeros(self.num, "f"), "b"))

    def is_stable(self, tol: float = STABILITY_TOL) -> bool:
        p = self.poles()
        return bool(p.size == 0 or np.max(np.abs(p)) < 1.0 + tol)

    def frf(self, omega):
        return frf(self, omega)

    def __mul__(self, other: "RationalTransferFunction") -> "RationalTransferFunction":
        if not isinstance(other, RationalTransferFunction):
            return RationalTransferFunction(self.num * float(other), self.den, self.ts)
        return RationalTransferFunction(
            np.convolve(self.num, other.num), np.convolve(self.den, other.den), self.ts
        )

    __rmul__ = __mul__

    def to_record(self) -> dict:
        return {"num": [float(x) for x in self.num], "den": [float(x) for x in self.den], "ts": self.ts}

    @classmethod
    def from_record(cls, rec: dict) -> "RationalTransferFunction":
        return cls(rec["num"], rec["den"], rec.get("ts", 1e-3))

    def __eq__(self, other):
        if not isinstance(other, RationalTransferFunction):
            return NotImplemented
        return (
            self.ts == other.ts
            and np.array_equal(self.num, other.num)
            and np.array_equal(self.den, other.den)
        )

    __hash__ = None


@dataclass(frozen=True)
class ImpulseResponse:
    """Coefficients h(k) for k = k_min, ..., k_min + len(coefficients) - 1."""

    coefficients: np.ndarray
    k_min: int = 0
    ts: float = 1e-3

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if not np.all(np.isfinite(c)):
            raise ValueError("impulse response coefficients must be finite")
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "k_min", int(self.k_min))

    @property
    def k_max(self) -> int:
        return self.k_min + len(self.coefficients) - 1

    @property
    def lags(self) -> np.ndarray:
        return np.arange(self.k_min, self.k_max + 1)

    def __call__(self, k):
        k = np.asarray(k)
        idx = k - self.k_min
        inside = (idx >= 0) & (idx < len(self.coefficients))
        out = np.zeros(k.shape)
        out[inside] = self.coefficients[idx[inside]]
        return out if out.ndim else float(out)

    def shifted(self, d: int) -> "ImpulseResponse":
        """Response of z^d H(z): h'(k) = h(k + d)."""
        return ImpulseResponse(self.coefficients, self.k_min - d, self.ts)

    def frf(self, omega):
        omega = np.asarray(omega, dtype=float)
        return np.exp(-1j * omega * self.k_min) * polyval_zinv(self.coefficients, omega)


def frf(sys: RationalTransferFunction, omega):
    """Frequency response at ``omega`` [rad/sample] (scalar or array)."""
    omega = np.asarray(omega, dtype=float)
    den = polyval_zinv(sys.den, omega)
    if np.any(den == 0):
        raise PoleOnGridError("denominator vanishes on the frequency grid")
    out = polyval_zinv(sys.num, omega) / den
    return complex(out) if out.ndim == 0 else out


def impulse_response(sys: RationalTransferFunction, k_max: int) -> ImpulseResponse:
    """Causal impulse response h(0..k_max) by the difference-equation recursion."""
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    delta = np.zeros(k_max + 1)
    delta[0] = 1.0
    with np.errstate(over="ignore", invalid="ignore"):
        h = lfilter(sys.num, sys.den, delta)
    if not np.all(np.isfinite(h)):
        p = sys.poles()
        worst = p[np.argmax(np.abs(p))]
        raise UnstableSystemError(f"impulse response overflowed; unstable pole at z={worst:.6g}")
    return ImpulseResponse(h, 0, sys.ts)


def _check_tail(sys: RationalTransferFunction, k_max: int, tol: float) -> np.ndarray:
    """Return h(0..k_max); raise if the discarded tail exceeds ``tol`` relative."""
    ext = impulse_response(sys, 2 * k_max + len(sys.num) + len(sys.den)).coefficients
    h, tail = ext[: k_max + 1], ext[k_max + 1 :]
    scale = np.max(np.abs(h)) if np.any(h) else 1.0
    if tail.size and np.max(np.abs(tail)) > tol * scale:
        raise InsufficientHorizonError(
            f"impulse response tail {np.max(np.abs(tail)):.3g} exceeds tolerance at "
            f"k_max={k_max}; increase k_max"
        )
    return h


def truncated_impulse_response(
    sys: RationalTransferFunction, k_max: int, tol: float = TAIL_TOL
) -> ImpulseResponse:
    """Like :func:`impulse_response` but verifies that h(k > k_max) is negligible."""
    return ImpulseResponse(_check_tail(sys, k_max, tol), 0, sys.ts)


def zero_phase_impulse_response(
    q1: RationalTransferFunction, k_max: int, tol: float = TAIL_TOL
) -> ImpulseResponse:
    """Two-sided response of q1(1/z) q1(z) on k in [-k_max, k_max]."""
    h1 = _check_tail(q1, k_max, tol)
    full = np.correlate(h1, h1, mode="full")
    # enforce exact symmetry
    full = 0.5 * (full + full[::-1])
    return ImpulseResponse(full, -k_max, q1.ts)


def convolution_matrix(h: ImpulseResponse, N: int) -> np.ndarray:
    """N x N lifted operator with entry (i, k) = h(i - k)."""
    if N < 1:
        raise ValueError("N must be at least 1")
    lag = np.subtract.outer(np.arange(N), np.arange(N))
    return h(lag)


def lifted(sys: RationalTransferFunction, N: int, k_max: int | None = None) -> np.ndarray:
    """Finite-time convolution matrix of a causal system."""
    return convolution_matrix(impulse_response(sys, N - 1 if k_max is None else k_max), N)


def _closed_loop_den(plant, controller) -> np.ndarray:
    a = np.convolve(plant.den, controller.den)
    b = np.convolve(plant.num, controller.num)
    return np.polyadd(a[::-1], b[::-1])[::-1]


def _trim(c: np.ndarray) -> np.ndarray:
    c = np.trim_zeros(c, "b")
    return c if c.size else np.zeros(1)


def process_sensitivity(
    plant: RationalTransferFunction, controller: RationalTransferFunction
) -> RationalTransferFunction:
    """J = P / (1 + K P), by polynomial arithmetic without cancellation."""
    if plant.is_zero():
        return RationalTransferFunction([0.0], [1.0], plant.ts)
    den = _trim(_closed_loop_den(plant, controller))
    if not np.any(den):
        raise ZeroDivisionError("1 + K P is identically zero")
    j = RationalTransferFunction(_trim(np.convolve(plant.num, controller.den)), den, plant.ts)
    if not j.is_stable():
        warnings.warn(
            f"closed loop is unstable (max |pole| = {np.max(np.abs(j.poles())):.6g})",
            UnstableClosedLoopWarning,
            stacklevel=2,
        )
    return j


def sensitivity(
    plant: RationalTransferFunction, controller: RationalTransferFunction
) -> RationalTransferFunction:
    """S = 1 / (1 + K P)."""
    den = _trim(_closed_loop_den(plant, controller))
    return RationalTransferFunction(_trim(np.convolve(plant.den, controller.den)), den, plant.ts)


def simulate_trial(
    true_plant: RationalTransferFunction,
    controller: RationalTransferFunction,
    r,
    f,
) -> np.ndarray:
    """Tracking error e = S r - J f of one trial from zero initial conditions."""
    r = np.asarray(r, dtype=float)
    f = np.asarray(f, dtype=float)
    if r.shape != f.shape or r.ndim != 1:
        raise ValueError("r and f must be 1-D signals of equal length")
    den = _closed_loop_den(true_plant, controller)
    s_num = np.convolve(true_plant.den, controller.den)
    j_num = np.convolve(true_plant.num, controller.den)
    return lfilter(s_num, den, r) - lfilter(j_num, den, f)


# --- benchmark ------------------------------------------------------------------

# Two-mass-spring-damper, force on m1, position of m2, ZOH at 1 ms plus one
# sample delay. Full-precision coefficients; the printed 3-digit values are kept
# below for reference only (their rounding moves poles outside the unit circle).
TRUE_NUM = [0.0, 0.0, 2.7993162809991645e-07, 1.2419913772987456e-06,
            -6.522647666429293e-08, -1.58366778357788e-07]
TRUE_DEN = [1.0, -3.7830712710252454, 5.455777867771029, -3.56230167424403,
            0.8895950774982471]
MODEL_NUM = [0.0, 0.0, 4.0012039859149695e-07, 2.1357741921690376e-06,
             5.847185708951486e-07, -1.2539972304992375e-07]
MODEL_DEN = [1.0, -3.5623339426238054, 4.974542317929762, -3.262082807988109,
             0.8498744326821516]

PRINTED_TRUE_NUM = [0.0, 0.0, 2.80e-7, 12.4e-7, -0.65e-7, -1.58e-7]
PRINTED_TRUE_DEN = [1.0, -3.78, 5.46, -3.56, 0.89]
PRINTED_MODEL_NUM = [0.0, 0.0, 4.00e-7, 21.4e-7, 5.85e-7, -1.25e-7]
PRINTED_MODEL_DEN = [1.0, -3.56, 4.98, -3.26, 0.85]

PRINTED_CONTROLLER_NUM = [108.6, 112.9, -100.0, -104.3]
PRINTED_CONTROLLER_DEN = [1.0, -0.65, -0.95, 0.70]
# common factor (1 + z^-1) divided out
CONTROLLER_NUM = [108.6, 4.3, -104.3]
CONTROLLER_DEN = [1.0, -1.65, 0.70]

TRUE_PARAMETERS = {"m1": 0.072, "m2": 0.01, "k": 1000.0, "d2": 0.031, "d12": 1.0}
MODEL_PARAMETERS = {"m1": 0.09, "m2": 0.006, "k": 1800.0, "d2": 0.0, "d12": 0.915}


@dataclass(frozen=True)
class BenchmarkPlant:
    true_plant: RationalTransferFunction
    model_plant: RationalTransferFunction
    controller: RationalTransferFunction
    true_parameters: dict = field(default_factory=dict)
    model_parameters: dict = field(default_factory=dict)

    @property
    def ts(self) -> float:
        return self.true_plant.ts

    def j_hat(self) -> RationalTransferFunction:
        return process_sensitivity(self.model_plant, self.controller)

    def j_true(self) -> RationalTransferFunction:
        return process_sensitivity(self.true_plant, self.controller)


def load_benchmark(ts: float = 1e-3) -> BenchmarkPlant:
    """The two-mass-spring-damper benchmark with its lead/low-pass controller."""
    return BenchmarkPlant(
        true_plant=RationalTransferFunction(TRUE_NUM, TRUE_DEN, ts),
        model_plant=RationalTransferFunction(MODEL_NUM, MODEL_DEN, ts),
        controller=RationalTransferFunction(CONTROLLER_NUM, CONTROLLER_DEN, ts),
        true_parameters=dict(TRUE_PARAMETERS),
        model_parameters=dict(MODEL_PARAMETERS),
    )
