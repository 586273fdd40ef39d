"""Exact ZF channel draws conditioned on the normalized SINR (diagnostic only).

For ZF, z = |h_1 - P h_1|^2 where P projects onto the span of the other
N - 1 columns.  Given those columns, the orthogonal part of h_1 is an
isotropic CN vector in an (M - N + 1)-dimensional space.  Fixing its norm to
sqrt(z) and keeping a uniform direction gives an exact draw from H | z.

This is not used by the plain Monte-Carlo runs.  It resolves tail bins whose
probability is far below anything plain sampling can reach.
"""

from __future__ import annotations

import numpy as np

from .linalg import gram, hermitian_eig, weights_from_eig
from .rng import stream_generator


def zf_conditional_channels(M: int, N: int, z: float, seed: int, count: int, stream: int = 0) -> np.ndarray:
    """``count`` channels H with z_zf(H) = z exactly, shape (count, M, N)."""
    if not (M >= N >= 1):
        raise ValueError("need M >= N >= 1")
    if not z > 0:
        raise ValueError("z must be > 0")
    rng = stream_generator(seed, stream)
    g = rng.standard_normal((count, M, N, 2)) * np.sqrt(0.5 / N)
    H = g.view(np.complex128)[..., 0].copy()
    if N > 1:
        Q, _ = np.linalg.qr(H[..., 1:], mode="complete")
        span, perp = Q[..., : N - 1], Q[..., N - 1 :]
        inside = span @ (np.conj(np.swapaxes(span, -1, -2)) @ H[..., :1])
    else:
        perp = np.broadcast_to(np.eye(M, dtype=complex), (count, M, M))
        inside = np.zeros((count, M, 1), dtype=complex)
    d = M - N + 1
    v = rng.standard_normal((count, d, 2)).view(np.complex128)[..., 0]
    v *= np.sqrt(z) / np.linalg.norm(v, axis=-1, keepdims=True)
    H[..., 0] = inside[..., 0] + np.einsum("bij,bj->bi", perp, v)
    return H


def zf_conditional_extremes(M: int, N: int, z: float, seed: int, count: int):
    """Mean (largest eigenvalue, its weight / N) of H^H H given z_zf = z."""
    H = zf_conditional_channels(M, N, z, seed, count)
    x, U = hermitian_eig(gram(H))
    t = weights_from_eig(U)
    return float(np.mean(x[:, -1])), float(np.mean(t[:, -1] / N))
