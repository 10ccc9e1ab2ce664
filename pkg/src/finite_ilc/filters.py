"""Learning filter (ZPETC), zero-phase robustness filter and convergence check."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.signal import butter

from .lti import (
    TAIL_TOL,
    ImpulseResponse,
    RationalTransferFunction,
    convolution_matrix,
    polyval_zinv,
    truncated_impulse_response,
    zero_phase_impulse_response,
)

ROOT_TOL = 1e-9
GRID_POINTS = 2048
# shortest impulse-response horizon used when lifting, so tiny N still truncates safely
MIN_HORIZON = 256


def _horizon(N: int, k_max: int | None) -> int:
    return max(4 * N, MIN_HORIZON) if k_max is None else k_max


class MarginalZeroError(ValueError):
    pass


class FilterParameterError(ValueError):
    pass


def frequency_grid(n: int = GRID_POINTS) -> np.ndarray:
    """Uniform grid on [0, pi] in rad/sample."""
    return np.linspace(0.0, np.pi, n)


@dataclass(frozen=True)
class ZpetcFilter:
    """L(z) = z^d A(z^-1) B+(z) / (B-(z^-1) B+(1)^2).

    ``stable_inverse_part`` is A/B- (causal), ``unstable_zero_compensator`` holds
    the coefficients c of B+(z^-1) = c0 + c1 z^-1 + ..., applied mirrored as
    B+(z), and ``noncausal_lead`` is the preview d.
    """

    stable_inverse_part: RationalTransferFunction
    noncausal_lead: int
    unstable_zero_compensator: np.ndarray

    @property
    def ts(self) -> float:
        return self.stable_inverse_part.ts

    @property
    def gain(self) -> float:
        return 1.0 / np.sum(self.unstable_zero_compensator) ** 2

    def frf(self, omega):
        omega = np.asarray(omega, dtype=float)
        mirror = polyval_zinv(self.unstable_zero_compensator, -omega)
        return (
            np.exp(1j * omega * self.noncausal_lead)
            * self.stable_inverse_part.frf(omega)
            * mirror
            * self.gain
        )

    def impulse_response(self, k_max: int, tol: float = TAIL_TOL) -> ImpulseResponse:
        """Two-sided response; k runs from -(d + deg B+) to k_max - d."""
        g = truncated_impulse_response(self.stable_inverse_part, k_max, tol).coefficients
        c = self.unstable_zero_compensator
        h = np.convolve(g, c[::-1]) * self.gain
        return ImpulseResponse(h, -(len(c) - 1) - self.noncausal_lead, self.ts)

    @property
    def preview(self) -> int:
        """Samples of future error used per output sample."""
        return self.noncausal_lead + len(self.unstable_zero_compensator) - 1

    def matrix(self, N: int, k_max: int | None = None, trim_preview: bool = True) -> np.ndarray:
        """Lifted learning operator.

        With ``trim_preview`` the last ``preview`` rows are zeroed: those outputs
        would need error samples beyond the trial, and the truncated sums are
        dominated by the large leading inverse coefficients.
        """
        L = convolution_matrix(self.impulse_response(_horizon(N, k_max)), N)
        if trim_preview and self.preview:
            L[max(N - self.preview, 0):, :] = 0.0
        return L


def design_zpetc(j_hat: RationalTransferFunction, rho: float = ROOT_TOL) -> ZpetcFilter:
    """Zero-phase-error tracking approximate inverse of ``j_hat``."""
    if j_hat.is_zero():
        raise ValueError("numerator is identically zero")
    d = j_hat.delay
    b = np.trim_zeros(j_hat.num[d:], "b")
    roots = np.roots(b) if len(b) > 1 else np.array([])
    mag = np.abs(roots)
    if np.any(np.abs(mag - 1.0) <= rho):
        raise MarginalZeroError(f"zero on the unit circle: {roots[np.abs(mag - 1.0) <= rho]}")
    stable, unstable = roots[mag < 1.0 - rho], roots[mag > 1.0 + rho]
    b_minus = b[0] * np.real(np.poly(stable)) if stable.size else np.array([b[0]])
    b_plus = np.real(np.poly(unstable)) if unstable.size else np.array([1.0])
    if abs(np.sum(b_plus)) < rho:
        raise ZeroDivisionError("B+(1) = 0, ZPETC normalization undefined")
    return ZpetcFilter(
        stable_inverse_part=RationalTransferFunction(j_hat.den, b_minus, j_hat.ts),
        noncausal_lead=d,
        unstable_zero_compensator=b_plus,
    )


@dataclass(frozen=True)
class ZeroPhaseFilter:
    """Q(z) = q1(1/z) q1(z)."""

    q1: RationalTransferFunction
    cutoff: float
    order: int

    @property
    def ts(self) -> float:
        return self.q1.ts

    def frf(self, omega):
        return np.abs(self.q1.frf(omega)) ** 2 + 0j

    def impulse_response(self, k_max: int, tol: float = TAIL_TOL) -> ImpulseResponse:
        return zero_phase_impulse_response(self.q1, k_max, tol)

    def matrix(self, N: int, k_max: int | None = None) -> np.ndarray:
        return convolution_matrix(self.impulse_response(_horizon(N, k_max)), N)


def design_zero_phase_butterworth(order: int, cutoff: float, sample_rate: float) -> ZeroPhaseFilter:
    if not 0 < cutoff < sample_rate / 2:
        raise FilterParameterError(f"cutoff {cutoff} Hz must lie in (0, {sample_rate / 2}) Hz")
    if int(order) != order or order < 1:
        raise FilterParameterError("order must be a positive integer")
    b, a = butter(int(order), cutoff, btype="low", fs=sample_rate)
    return ZeroPhaseFilter(RationalTransferFunction(b, a, 1.0 / sample_rate), float(cutoff), int(order))


@dataclass
class ConvergenceReport:
    grid: np.ndarray
    modulus: np.ndarray

    @property
    def max_modulus(self) -> float:
        return float(np.max(self.modulus)) if self.modulus.size else 0.0

    @property
    def converges(self) -> bool:
        return self.max_modulus < 1.0

    def to_csv(self, path, ts: float) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["freq_hz", "modulus"])
            for om, m in zip(self.grid, self.modulus):
                w.writerow([repr(float(om / (2 * np.pi * ts))), repr(float(m))])


def check_convergence(q_frf, l_frf, j_true_frf, alpha: float, grid=None) -> ConvergenceReport:
    """|Q (1 - alpha J L)| per grid point; J must be the true process sensitivity."""
    q, l, j = (np.asarray(x, dtype=complex) for x in (q_frf, l_frf, j_true_frf))
    if not (q.shape == l.shape == j.shape):
        raise ValueError(f"misaligned grids: {q.shape}, {l.shape}, {j.shape}")
    if grid is None:
        grid = np.linspace(0.0, np.pi, q.size)
    return ConvergenceReport(np.asarray(grid, dtype=float), np.abs(q * (1 - alpha * j * l)))
