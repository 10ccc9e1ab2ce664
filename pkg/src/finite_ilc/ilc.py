"""Lifted ILC update laws, equivalent norm-optimal weights and a QP oracle.

All laws minimise a quadratic cost of the form

    ||e_j - J (f_{j+1} - f_j)||^2_{We} + ||f_{j+1}||^2_{Wf} + ||f_{j+1} - f_j||^2_{Wdf}

over the (possibly parameterised) next feedforward. Normal matrices are solved
with a Cholesky factorisation; a non positive definite normal matrix raises
:class:`RankDeficiencyError` instead of being pseudo-solved.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigh, solve

EIG_FLOOR = 1e-8
SYM_TOL = 1e-8


class RankDeficiencyError(np.linalg.LinAlgError):
    pass


class AssumptionViolationError(ValueError):
    pass


def _spd_solve(A: np.ndarray, b: np.ndarray, hint: str = "") -> np.ndarray:
    A = 0.5 * (A + A.T)
    try:
        c = cho_factor(A)
    except LinAlgError:
        lam = np.linalg.eigvalsh(A)[0] if A.size else 0.0
        msg = f"normal matrix not positive definite (smallest eigenvalue {lam:.3e})"
        raise RankDeficiencyError(msg + (f"; {hint}" if hint else "")) from None
    return cho_solve(c, b)


@dataclass
class IlcWeights:
    W_e: np.ndarray
    W_f: np.ndarray
    W_df: np.ndarray

    @classmethod
    def scalar(cls, N: int, w_e: float = 1.0, w_f: float = 0.0, w_df: float = 0.0) -> "IlcWeights":
        I = np.eye(N)
        return cls(w_e * I, w_f * I, w_df * I)

    def check(self, tol: float = 1e-10) -> None:
        for name in ("W_e", "W_f", "W_df"):
            W = getattr(self, name)
            scale = max(1.0, np.max(np.abs(W)))
            if np.max(np.abs(W - W.T)) > tol * scale:
                raise ValueError(f"{name} is not symmetric")
            if np.linalg.eigvalsh(0.5 * (W + W.T))[0] < -tol * scale:
                raise ValueError(f"{name} is not positive semidefinite")


@dataclass
class CombinedParameters:
    theta: np.ndarray
    f_freq: np.ndarray

    @classmethod
    def zeros(cls, n_theta: int, N: int) -> "CombinedParameters":
        return cls(np.zeros(n_theta), np.zeros(N))

    @classmethod
    def from_stacked(cls, x: np.ndarray, n_theta: int) -> "CombinedParameters":
        return cls(x[:n_theta].copy(), x[n_theta:].copy())

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.theta, self.f_freq])

    def feedforward(self, psi: np.ndarray) -> np.ndarray:
        return psi @ self.theta + self.f_freq


@dataclass
class CombinedWeights:
    W_e: np.ndarray
    W_theta: np.ndarray
    W_dtheta: np.ndarray
    W_f: np.ndarray
    W_df: np.ndarray
    # extra (n_theta + N) square penalty added to W_thetaf, e.g. targeted regularization
    penalty: np.ndarray | None = None

    @classmethod
    def from_ilc_weights(cls, w: IlcWeights, n_theta: int, W_theta=None, W_dtheta=None,
                         penalty=None) -> "CombinedWeights":
        z = np.zeros((n_theta, n_theta))
        return cls(
            w.W_e,
            z if W_theta is None else np.asarray(W_theta, dtype=float),
            z.copy() if W_dtheta is None else np.asarray(W_dtheta, dtype=float),
            w.W_f,
            w.W_df,
            penalty,
        )

    @staticmethod
    def _blockdiag(a, b):
        n, N = a.shape[0], b.shape[0]
        out = np.zeros((n + N, n + N))
        out[:n, :n] = a
        out[n:, n:] = b
        return out

    @property
    def W_thetaf(self) -> np.ndarray:
        W = self._blockdiag(self.W_theta, self.W_f)
        return W if self.penalty is None else W + self.penalty

    @property
    def W_delta(self) -> np.ndarray:
        return self._blockdiag(self.W_dtheta, self.W_df)


def norm_optimal_update(j_hat, w: IlcWeights, f_j, e_j) -> np.ndarray:
    """Minimiser of the norm-optimal cost for the next feedforward signal."""
    JtWe = j_hat.T @ w.W_e
    M = JtWe @ j_hat + w.W_df
    return _spd_solve(M + w.W_f, M @ f_j + JtWe @ e_j)


def basis_function_update(j_hat, psi, w: IlcWeights, theta_j, e_j) -> np.ndarray:
    """Norm-optimal update of theta with f = psi theta; W_f, W_df act on f."""
    psi = np.asarray(psi, dtype=float)
    Jpsi = j_hat @ psi
    JtWe = Jpsi.T @ w.W_e
    M = JtWe @ Jpsi + psi.T @ w.W_df @ psi
    return _spd_solve(
        M + psi.T @ w.W_f @ psi,
        M @ theta_j + JtWe @ e_j,
        hint="basis functions are linearly dependent or unobservable through J",
    )


def freq_ilc_update(q_op, l_op, alpha: float, f_j, e_j) -> np.ndarray:
    """f_{j+1} = Q (f_j + alpha L e_j)."""
    return q_op @ (f_j + alpha * (l_op @ e_j))


def weight_f_from_q(q_op: np.ndarray, floor: float = EIG_FLOOR, sym_tol: float = SYM_TOL) -> np.ndarray:
    """Q^-1 - I through a symmetric eigendecomposition with eigenvalue floor."""
    scale = max(1.0, np.max(np.abs(q_op)))
    if np.max(np.abs(q_op - q_op.T)) > sym_tol * scale:
        raise AssumptionViolationError("robustness filter matrix is not symmetric (zero-phase Q required)")
    lam, V = eigh(0.5 * (q_op + q_op.T))
    if lam[0] < -np.sqrt(floor) * scale:
        raise AssumptionViolationError(f"robustness filter matrix is indefinite (eigenvalue {lam[0]:.3e})")
    lam = np.maximum(lam, floor)
    W = (V * (1.0 / lam - 1.0)) @ V.T
    return 0.5 * (W + W.T)


def theorem1_weights(j_hat, q_op, l_op, alpha: float, exact_inverse: bool = False,
                     floor: float = EIG_FLOOR) -> IlcWeights:
    """Norm-optimal weights that reproduce Q (f + alpha L e).

    With ``exact_inverse`` (L = J^-1) the error weight is alpha J^-T L, which
    makes the equivalence exact; otherwise the symmetric surrogate
    alpha L^T L is used.
    """
    N = q_op.shape[0]
    if exact_inverse:
        JinvT = solve(j_hat.T, np.eye(N))
        W_e = alpha * JinvT @ l_op
        asym = np.max(np.abs(W_e - W_e.T)) / max(np.max(np.abs(W_e)), 1e-300)
        if asym > SYM_TOL:
            raise AssumptionViolationError(
                f"J^-T L is not symmetric (relative asymmetry {asym:.2e}); L must equal J^-1"
            )
        W_e = 0.5 * (W_e + W_e.T)
    else:
        W_e = alpha * l_op.T @ l_op
    return IlcWeights(W_e, weight_f_from_q(q_op, floor), (1.0 - alpha) * np.eye(N))


def combined_update(j_hat, psi, w: CombinedWeights, theta_big_j: CombinedParameters, e_j) -> CombinedParameters:
    """Joint update of basis coefficients and the free frequency-domain signal."""
    psi = np.asarray(psi, dtype=float).reshape(j_hat.shape[0], -1)
    n = psi.shape[1]
    Psi = np.hstack([psi, np.eye(j_hat.shape[0])])
    JPsi = j_hat @ Psi
    JtWe = JPsi.T @ w.W_e
    Wd = w.W_delta
    M = JtWe @ JPsi + Wd
    x = _spd_solve(
        M + w.W_thetaf,
        M @ theta_big_j.stacked() + JtWe @ e_j,
        hint="add a targeted regularization on the image of psi or a nonzero W_theta",
    )
    return CombinedParameters.from_stacked(x, n)


def targeted_regularization_term(psi, lam: float, tol: float = 1e-12) -> np.ndarray:
    """lam [0 U1]^T [0 U1] with U1 an orthonormal basis of range(psi)."""
    psi = np.asarray(psi, dtype=float)
    N, n = psi.shape
    out = np.zeros((n + N, n + N))
    if lam == 0 or n == 0:
        return out
    U, s, _ = np.linalg.svd(psi, full_matrices=False)
    U1 = U[:, s > tol * max(s[0], 1e-300)]
    out[n:, n:] = lam * U1 @ U1.T
    return out


def qp_oracle(terms, penalty=None, n: int | None = None) -> np.ndarray:
    """Minimise sum_i ||A_i x - b_i||^2_{W_i} + x^T penalty x.

    ``terms`` is a list of (A, b, W) triples. The gradient is assembled term by
    term and the stationarity condition solved densely with a general solver.
    """
    if n is None:
        n = terms[0][0].shape[1]
    H = np.zeros((n, n))
    g = np.zeros(n)
    for A, b, W in terms:
        A = np.asarray(A, dtype=float)
        W = np.asarray(W, dtype=float)
        H += A.T @ W @ A + A.T @ W.T @ A
        g += A.T @ (W + W.T) @ b
    if penalty is not None:
        H += penalty + penalty.T
    H *= 0.5
    g *= 0.5
    lam = np.linalg.eigvalsh(0.5 * (H + H.T))
    if lam[0] <= 0:
        raise np.linalg.LinAlgError(f"Hessian not positive definite (smallest eigenvalue {lam[0]:.3e})")
    return np.linalg.solve(H, g)
