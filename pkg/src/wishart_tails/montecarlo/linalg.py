"""Exact per-matrix quantities: SINR diagonal elements, eigenpairs, weights.

Functions accept a single matrix or a stack with leading batch axes.
"""

from __future__ import annotations

import numpy as np

HERMITIAN_TOL = 1e-12
JACOBI_THRESHOLD = 1e-13
JACOBI_MAX_SWEEPS = 40


class NumericError(ArithmeticError):
    """Factorization failed or produced non-finite values."""


def gram(H: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(H, -1, -2)) @ H


def _last_pivot_sq(A: np.ndarray) -> np.ndarray:
    """|R_NN|^2 from A = QR, which equals 1 / [(A^H A)^-1]_NN.

    Working on A instead of A^H A keeps the relative error at the level of
    cond(A), not cond(A)^2.
    """
    try:
        R = np.linalg.qr(A, mode="r")
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"QR factorization failed: {exc}") from None
    piv = np.abs(R[..., -1, -1]) ** 2
    if not np.all(np.isfinite(piv)):
        raise NumericError("non-finite pivot in QR factorization")
    return piv


def _stream_last(H: np.ndarray, stream: int) -> np.ndarray:
    N = H.shape[-1]
    if not 0 <= stream < N:
        raise ValueError(f"stream index {stream} out of range for N={N}")
    order = [j for j in range(N) if j != stream] + [stream]
    return H[..., order]


def _augmented(H: np.ndarray, rho: float) -> np.ndarray:
    """[sqrt(rho) H; I], whose Gram matrix is I + rho H^H H."""
    N = H.shape[-1]
    eye = np.broadcast_to(np.eye(N, dtype=H.dtype), H.shape[:-2] + (N, N))
    return np.concatenate([np.sqrt(rho) * H, eye], axis=-2)


def sinr_mmse(H: np.ndarray, rho: float, stream: int = 0):
    """z = gamma / rho with 1 / (1 + rho z) = [(I + rho H^H H)^-1]_ii."""
    if not rho > 0:
        raise ValueError("rho must be > 0")
    H = np.asarray(H)
    if not np.all(np.isfinite(H)):
        raise NumericError("channel has non-finite entries")
    z = (_last_pivot_sq(_augmented(_stream_last(H, stream), rho)) - 1.0) / rho
    return float(z) if np.ndim(z) == 0 else z


def sinr_zf(H: np.ndarray, stream: int = 0):
    """z = 1 / [(H^H H)^-1]_ii; beta = rho z."""
    H = np.asarray(H)
    if not np.all(np.isfinite(H)):
        raise NumericError("channel has non-finite entries")
    z = _last_pivot_sq(_stream_last(H, stream))
    scale = np.max(np.sum(np.abs(H) ** 2, axis=-2), axis=-1)
    bad = z <= 64 * np.finfo(float).eps * scale
    if np.any(bad):
        worst = float(np.min(z / scale))
        raise NumericError(f"H^H H is singular to working precision (relative pivot {worst:.3e})")
    return float(z) if np.ndim(z) == 0 else z


def sinr_all_streams(H: np.ndarray, rho=None) -> np.ndarray:
    """Normalized SINR of every stream, shape (..., N); rho=None selects ZF.

    With A = QR, diag((A^H A)^-1) is the squared row norms of R^-1.
    """
    H = np.asarray(H)
    A = H if rho is None else _augmented(H, rho)
    try:
        R = np.linalg.qr(A, mode="r")
        Rinv = np.linalg.inv(R)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"factorization failed: {exc}") from None
    diag = np.sum(np.abs(Rinv) ** 2, axis=-1)
    if not np.all(np.isfinite(diag)) or np.any(diag <= 0):
        raise NumericError("non-positive or non-finite diagonal of the inverse")
    inv_diag = 1.0 / diag
    return inv_diag if rho is None else (inv_diag - 1.0) / rho


def wishart_eig(H: np.ndarray):
    """Eigenpairs of H^H H from the SVD of H: ascending x_j = sigma_j^2 and U.

    Small eigenvalues keep relative accuracy that eigh(H^H H) would lose.
    """
    H = np.asarray(H)
    try:
        _, sv, Vh = np.linalg.svd(H, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD failed: {exc}") from None
    x = sv[..., ::-1] ** 2
    U = np.conj(np.swapaxes(Vh, -1, -2))[..., ::-1]
    return x, U


def _check_hermitian(W: np.ndarray):
    W = np.asarray(W)
    if W.shape[-1] != W.shape[-2]:
        raise ValueError("matrix must be square")
    scale = max(float(np.max(np.abs(W))), np.finfo(float).tiny)
    if np.max(np.abs(W - np.conj(np.swapaxes(W, -1, -2)))) > HERMITIAN_TOL * scale:
        raise ValueError("matrix is not Hermitian to 1e-12")
    return W


def hermitian_eig(W: np.ndarray, method: str = "lapack"):
    """(ascending eigenvalues, unitary U) with W = U diag(x) U^H; columns of U are eigenvectors."""
    W = _check_hermitian(W)
    if method == "lapack":
        return np.linalg.eigh(W)
    if method == "jacobi":
        return jacobi_eig(W)
    raise ValueError(f"unknown eigensolver {method!r}")


def jacobi_eig(W: np.ndarray, threshold: float = JACOBI_THRESHOLD, max_sweeps: int = JACOBI_MAX_SWEEPS):
    """Cyclic Jacobi with complex rotations, vectorized over a batch of matrices.

    Each rotation first removes the phase of a_pq and then applies the real
    Jacobi rotation of Numerical Recipes.  Sweeps stop when the off-diagonal
    Frobenius norm of every matrix is below ``threshold`` times its full norm.
    """
    W = np.asarray(W, dtype=np.complex128)
    single = W.ndim == 2
    A = W.reshape((-1,) + W.shape[-2:]).copy()
    B, n, _ = A.shape
    V = np.broadcast_to(np.eye(n, dtype=np.complex128), A.shape).copy()
    full = np.sqrt(np.sum(np.abs(A) ** 2, axis=(1, 2)))
    off_mask = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.abs(A[:, off_mask]) ** 2, axis=1))
        if np.all(off <= threshold * np.maximum(full, np.finfo(float).tiny)):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[:, p, q]
                r = np.abs(apq)
                active = r > 0
                if not np.any(active):
                    continue
                phase = np.where(active, apq / np.where(active, r, 1.0), 1.0)
                app = A[:, p, p].real
                aqq = A[:, q, q].real
                with np.errstate(divide="ignore", invalid="ignore"):
                    tau = (aqq - app) / (2.0 * r)
                    t = np.sign(tau) / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
                t = np.where(tau == 0, 1.0, t)
                t = np.where(active, t, 0.0)
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # G = diag(1, conj(phase)) @ [[c, s], [-s, c]]
                g_pp, g_pq = c, s
                g_qp, g_qq = -s * np.conj(phase), c * np.conj(phase)
                cp, cq = A[:, :, p].copy(), A[:, :, q].copy()
                A[:, :, p] = cp * g_pp[:, None] + cq * g_qp[:, None]
                A[:, :, q] = cp * g_pq[:, None] + cq * g_qq[:, None]
                rp, rq = A[:, p, :].copy(), A[:, q, :].copy()
                A[:, p, :] = np.conj(g_pp)[:, None] * rp + np.conj(g_qp)[:, None] * rq
                A[:, q, :] = np.conj(g_pq)[:, None] * rp + np.conj(g_qq)[:, None] * rq
                A[:, p, q] = 0.0
                A[:, q, p] = 0.0
                vp, vq = V[:, :, p].copy(), V[:, :, q].copy()
                V[:, :, p] = vp * g_pp[:, None] + vq * g_qp[:, None]
                V[:, :, q] = vp * g_pq[:, None] + vq * g_qq[:, None]
    else:
        off = np.sqrt(np.sum(np.abs(A[:, off_mask]) ** 2, axis=1))
        if np.any(off > threshold * np.maximum(full, np.finfo(float).tiny)):
            raise NumericError(f"Jacobi did not converge in {max_sweeps} sweeps")
    vals = np.real(np.diagonal(A, axis1=1, axis2=2))
    order = np.argsort(vals, axis=1)
    vals = np.take_along_axis(vals, order, axis=1)
    V = np.take_along_axis(V, order[:, None, :], axis=2)
    if single:
        return vals[0], V[0]
    return vals.reshape(W.shape[:-1]), V.reshape(W.shape)


def weights_from_eig(U: np.ndarray, stream: int = 0) -> np.ndarray:
    """t_j = N |U[i, j]|^2: weight of eigenvector j on coordinate i; sums to N."""
    U = np.asarray(U)
    N = U.shape[-1]
    return N * np.abs(U[..., stream, :]) ** 2
