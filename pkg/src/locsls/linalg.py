"""Dense numerical kernels: Riccati, Stein, pseudo-inverse, kernels, KKT.

Every routine accepts degenerate (zero-row / zero-column) shapes and returns the
dimensionally forced result, since empty boundary sets produce such matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    DareConvergenceError,
    InfeasibleError,
    SingularMatrixError,
    UnboundedOrSingularError,
    UnstableError,
)

RANK_TOL = 1e-10


def _as2d(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError(f"expected a matrix, got array of shape {M.shape}")
    return M


def spectral_radius(M) -> float:
    M = _as2d(M)
    if M.shape[0] != M.shape[1]:
        raise ValueError("spectral radius needs a square matrix")
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def pinv(M, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Moore-Penrose pseudo-inverse; singular values below ``rank_tol * s_max`` are dropped."""
    M = _as2d(M)
    r, c = M.shape
    if M.size == 0:
        return np.zeros((c, r))
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    keep = s > rank_tol * s[0] if s[0] > 0 else np.zeros_like(s, dtype=bool)
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


def numerical_rank(M, rank_tol: float = RANK_TOL) -> int:
    M = _as2d(M)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > rank_tol * s[0])) if s[0] > 0 else 0


def kernel_basis(M, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis of ``ker(M)`` as columns. A zero-row ``M`` yields the identity."""
    M = _as2d(M)
    r, c = M.shape
    if r == 0 or c == 0:
        return np.eye(c)
    _, s, Vt = np.linalg.svd(M, full_matrices=True)
    rank = int(np.sum(s > rank_tol * s[0])) if s[0] > 0 else 0
    return Vt[rank:].T.copy()


def row_basis(M, rank_tol: float = RANK_TOL, abs_tol: float = 0.0) -> np.ndarray:
    """Orthonormal rows spanning the row space of ``M``.

    Singular values at or below ``max(rank_tol * s_max, abs_tol)`` count as zero.
    """
    M = _as2d(M)
    r, c = M.shape
    if M.size == 0:
        return np.zeros((0, c))
    _, s, Vt = np.linalg.svd(M, full_matrices=False)
    cut = max(rank_tol * s[0], abs_tol)
    return Vt[s > cut].copy()


@dataclass(frozen=True)
class DareSolution:
    X: np.ndarray
    K: np.ndarray
    residual: float
    iterations: int


def dare_residual(A, B, Q, R, X) -> np.ndarray:
    """``Q + A'XA - A'XB (R + B'XB)^-1 B'XA - X``."""
    A, B, Q, R, X = map(_as2d, (A, B, Q, R, X))
    AXA = A.T @ X @ A
    if B.shape[1]:
        BXA = B.T @ X @ A
        AXA = AXA - BXA.T @ np.linalg.solve(R + B.T @ X @ B, BXA)
    return Q + AXA - X


def _gain(A, B, R, X) -> np.ndarray:
    if B.shape[1] == 0:
        return np.zeros((0, A.shape[0]))
    S = R + B.T @ X @ B
    try:
        c = scipy.linalg.cho_factor(S)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("R + B'XB is not numerically positive definite") from exc
    return -scipy.linalg.cho_solve(c, B.T @ X @ A)


_DIVERGED = 1e100


def _doubling(A, G, H, tol, max_iter):
    n = A.shape[0]
    I = np.eye(n)
    Ak, Gk, Hk = A.copy(), G.copy(), H.copy()
    for it in range(1, max_iter + 1):
        W = I + Gk @ Hk
        try:
            lu = scipy.linalg.lu_factor(W)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise DareConvergenceError("doubling iteration hit a singular matrix", iterations=it) from exc
        WA = scipy.linalg.lu_solve(lu, Ak)
        WG = scipy.linalg.lu_solve(lu, Gk)
        A_next = Ak @ WA
        G_next = Gk + Ak @ WG @ Ak.T
        H_next = Hk + Ak.T @ Hk @ WA
        G_next = (G_next + G_next.T) / 2
        H_next = (H_next + H_next.T) / 2
        hn = np.linalg.norm(H_next)
        if not np.isfinite(hn) or hn > _DIVERGED:
            raise DareConvergenceError("doubling iterates diverged", iterations=it)
        diff = np.linalg.norm(H_next - Hk)
        Ak, Gk, Hk = A_next, G_next, H_next
        if diff <= tol * max(1.0, np.linalg.norm(Hk)):
            return Hk, it
    raise DareConvergenceError(f"doubling did not converge in {max_iter} iterations", iterations=max_iter)


def _value_iteration(A, B, Q, R, tol, max_iter):
    X = Q.copy()
    for it in range(1, max_iter + 1):
        X_next = Q + A.T @ X @ A
        if B.shape[1]:
            BXA = B.T @ X @ A
            X_next = X_next - BXA.T @ np.linalg.solve(R + B.T @ X @ B, BXA)
        X_next = (X_next + X_next.T) / 2
        xn = np.linalg.norm(X_next)
        if not np.isfinite(xn) or xn > _DIVERGED:
            raise DareConvergenceError("value iteration diverged", iterations=it)
        diff = np.linalg.norm(X_next - X)
        X = X_next
        if diff <= tol * max(1.0, np.linalg.norm(X)):
            return X, it
    raise DareConvergenceError(f"value iteration did not converge in {max_iter} iterations", iterations=max_iter)


def _newton_polish(A, B, Q, R, X, steps: int = 3):
    """A few Hewer steps from a near-converged ``X``; each is kept only if the residual drops."""
    best = np.linalg.norm(dare_residual(A, B, Q, R, X))
    for _ in range(steps):
        if best == 0:
            break
        K = _gain(A, B, R, X)
        Acl = A + B @ K
        if spectral_radius(Acl) >= 1:
            break
        Xn = dlyap_solve(Acl, Q + K.T @ R @ K)
        res = np.linalg.norm(dare_residual(A, B, Q, R, Xn))
        if not res < best:
            break
        X, best = Xn, res
    return X


def dare_solve(
    A,
    B,
    Q,
    R,
    tol: float = 1e-12,
    max_iter: int = 10000,
    *,
    method: str = "doubling",
    residual_tol: float = 1e-8,
) -> DareSolution:
    """Stabilizing solution of ``X = Q + A'XA - A'XB (R + B'XB)^-1 B'XA``.

    Parameters
    ----------
    A, B : ndarray
        State and input matrices; ``B`` may have zero columns, in which case
        the equation degenerates to the Stein equation and ``A`` must be stable.
    Q, R : ndarray
        Symmetric PSD state weight and symmetric PD input weight.
    tol : float
        Stop once successive iterates differ by at most ``tol`` in Frobenius norm,
        relative to ``max(1, ||X||)``.
    method : {"doubling", "iteration"}
        Structure-preserving doubling (quadratic convergence) or plain Riccati
        value iteration, kept as an independent check.
    residual_tol : float
        Relative bound on the final fixed-point residual before giving up.

    Returns
    -------
    DareSolution
        ``X``, the gain ``K = -(R + B'XB)^-1 B'XA`` so that ``A + BK`` is stable,
        the Frobenius residual and the iteration count.
    """
    A, B, Q, R = map(_as2d, (A, B, Q, R))
    n, m = B.shape
    if A.shape != (n, n) or Q.shape != (n, n) or R.shape != (m, m):
        raise ValueError("inconsistent DARE dimensions")
    if n == 0:
        return DareSolution(np.zeros((0, 0)), np.zeros((m, 0)), 0.0, 0)
    if m and np.linalg.eigvalsh((R + R.T) / 2).min() <= 0:
        raise SingularMatrixError("R must be positive definite")
    Q = (Q + Q.T) / 2

    if method == "doubling":
        G = B @ np.linalg.solve(R, B.T) if m else np.zeros((n, n))
        X, iters = _doubling(A, G, Q, tol, max_iter)
    elif method == "iteration":
        X, iters = _value_iteration(A, B, Q, R, tol, max_iter)
    else:
        raise ValueError(f"unknown DARE method {method!r}")

    if method == "doubling" and m:
        X = _newton_polish(A, B, Q, R, X)
    K = _gain(A, B, R, X)
    res = float(np.linalg.norm(dare_residual(A, B, Q, R, X)))
    if res > residual_tol * max(1.0, np.linalg.norm(X)):
        raise DareConvergenceError(f"DARE residual {res:.3e} above tolerance", residual=res)
    rho = spectral_radius(A + B @ K)
    if rho >= 1:
        raise DareConvergenceError(f"DARE solution is not stabilizing (spectral radius {rho:.6f})", rho=rho)
    return DareSolution(X, K, res, iters)


def dlyap_solve(Acl, M) -> np.ndarray:
    """Solve the Stein equation ``G = Acl' G Acl + M`` for stable ``Acl``."""
    Acl, M = _as2d(Acl), _as2d(M)
    n = Acl.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    rho = spectral_radius(Acl)
    if rho >= 1:
        raise UnstableError(f"Stein equation needs a stable matrix (spectral radius {rho:.6f})", rho=rho)
    M = (M + M.T) / 2
    G = scipy.linalg.solve_discrete_lyapunov(Acl.T, M)
    # one step of iterative refinement on the residual
    E = Acl.T @ G @ Acl + M - G
    if np.linalg.norm(E) > 1e-13 * max(1.0, np.linalg.norm(G)):
        G = G + scipy.linalg.solve_discrete_lyapunov(Acl.T, (E + E.T) / 2)
    return (G + G.T) / 2


def kkt_solve(H, f, Aeq, beq, rank_tol: float = RANK_TOL, feas_tol: float = 1e-8):
    """Minimize ``0.5 z'Hz + f'z`` subject to ``Aeq z = beq``.

    Redundant constraint rows are removed with an SVD; the reduced problem is solved
    on the null space of ``Aeq``.

    Returns
    -------
    z : ndarray
        Minimizer.
    lam : ndarray
        Multipliers with ``H z + f + Aeq' lam = 0`` (minimum-norm choice).

    Raises
    ------
    InfeasibleError
        ``beq`` is not in the range of ``Aeq``.
    UnboundedOrSingularError
        The Hessian restricted to the null space of ``Aeq`` is singular.
    """
    H = _as2d(H)
    f = np.asarray(f, dtype=float).ravel()
    n = f.size
    Aeq = _as2d(Aeq) if np.size(Aeq) else np.zeros((0, n))
    beq = np.asarray(beq, dtype=float).ravel()
    p = Aeq.shape[0]
    if H.shape != (n, n) or Aeq.shape[1] != n or beq.size != p:
        raise ValueError("inconsistent KKT dimensions")

    if p:
        U, s, Vt = np.linalg.svd(Aeq, full_matrices=True)
        r = int(np.sum(s > rank_tol * s[0])) if s.size and s[0] > 0 else 0
        Ur, sr, Vr = U[:, :r], s[:r], Vt[:r]
        c = Ur.T @ beq
        gap = np.linalg.norm(beq - Ur @ c)
        if gap > feas_tol * max(1.0, np.linalg.norm(beq)):
            raise InfeasibleError(f"equality constraints are inconsistent (residual {gap:.3e})", residual=float(gap))
        z0 = Vr.T @ (c / sr)
        Z = Vt[r:].T
    else:
        z0 = np.zeros(n)
        Z = np.eye(n)

    if Z.shape[1]:
        Hr = Z.T @ H @ Z
        Hr = (Hr + Hr.T) / 2
        g = Z.T @ (H @ z0 + f)
        try:
            c_fac = scipy.linalg.cho_factor(Hr)
        except np.linalg.LinAlgError as exc:
            raise UnboundedOrSingularError("reduced Hessian is not positive definite") from exc
        ev = np.linalg.eigvalsh(Hr)
        if ev[0] <= rank_tol * max(1.0, ev[-1]):
            raise UnboundedOrSingularError("reduced Hessian is numerically singular")
        z = z0 - Z @ scipy.linalg.cho_solve(c_fac, g)
    else:
        z = z0
    grad = H @ z + f
    lam = -pinv(Aeq.T) @ grad if p else np.zeros(0)
    return z, lam
