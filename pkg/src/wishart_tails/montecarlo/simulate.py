"""Plain Monte-Carlo runs: SINR samples, histograms and conditional weight statistics.

Work is split by RNG stream.  Each stream produces a partial aggregate and the
partials are merged in stream order, so a run is bit-identical for any number
of workers.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..core import SystemParams, mp_edges
from ..ratefn import ergodic_stats
from .linalg import (
    gram,
    hermitian_eig,
    sinr_all_streams,
    sinr_mmse,
    sinr_zf,
    weights_from_eig,
    wishart_eig,
)
from .rng import channel_block, sample_channel, stream_plan

WORKERS_ENV = "WISHART_TAILS_WORKERS"
MIN_SAMPLES = 1000
MIN_BIN_COUNT = 100
DEFAULT_BINS = 64
DEFAULT_X_BINS = 16
WINDOW_SIGMAS = 8.0


class EmptyBinWarning(UserWarning):
    """A conditioning bin or eigenvalue bin was suppressed for low counts."""


@dataclass(frozen=True)
class SinrSample:
    z: float
    eigenvalues: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    total: int
    below: int = 0
    above: int = 0

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def inside(self) -> int:
        return int(self.counts.sum())

    @property
    def probabilities(self) -> np.ndarray:
        """Fraction of all samples in each bin."""
        return self.counts / self.total

    @property
    def density(self) -> np.ndarray:
        """Density normalized over the window, so that it integrates to 1."""
        return self.counts / (max(self.inside, 1) * np.diff(self.edges))

    @property
    def stderr(self) -> np.ndarray:
        n = max(self.inside, 1)
        p = self.counts / n
        return np.sqrt(p * (1 - p) / n) / np.diff(self.edges)


@dataclass(frozen=True)
class MomentSummary:
    count: int
    mean: float
    mean_se: float
    var: float
    var_se: float
    min: float
    max: float


@dataclass(frozen=True)
class ConditionalWeightStats:
    z_bin: Tuple[float, float]
    x_edges: np.ndarray
    counts: np.ndarray
    mean_t: np.ndarray
    se_t: np.ndarray
    reported: np.ndarray
    samples: int
    top_weight: float = math.nan
    top_weight_se: float = math.nan
    top_position: float = math.nan
    top_position_se: float = math.nan
    bottom_weight: float = math.nan
    bottom_weight_se: float = math.nan
    bottom_position: float = math.nan
    bottom_position_se: float = math.nan

    @property
    def x_centers(self) -> np.ndarray:
        return 0.5 * (self.x_edges[1:] + self.x_edges[:-1])


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(n, 1)


def _map_streams(fn, tasks, workers: Optional[int]):
    """Results of fn over tasks, always in task order."""
    workers = default_workers() if workers is None else max(int(workers), 1)
    if workers == 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*tasks)))


def _z_of(H: np.ndarray, params: SystemParams, all_streams: bool) -> np.ndarray:
    if all_streams:
        return sinr_all_streams(H, None if params.is_zf else params.rho)
    if params.is_zf:
        return sinr_zf(H)
    return sinr_mmse(H, params.rho)


def draw_sample(params: SystemParams, seed: int, stream: int, index: int) -> SinrSample:
    """Single exact sample with the eigenvalues of H^H H and the stream-1 weights."""
    M, N = params.require_dims()
    H = sample_channel(M, N, seed, stream, index)
    z = _z_of(H, params, False)
    x, U = wishart_eig(H)
    return SinrSample(float(z), x, weights_from_eig(U))


def _z_block(params: SystemParams, seed: int, stream: int, count: int, all_streams: bool):
    M, N = params.require_dims()
    return np.asarray(_z_of(channel_block(M, N, seed, stream, count), params, all_streams)).ravel()


def simulate_z(
    params: SystemParams,
    samples: int,
    seed: int,
    workers: Optional[int] = None,
    all_streams: bool = False,
) -> np.ndarray:
    """Normalized SINR of ``samples`` channel draws.

    With ``all_streams`` every diagonal entry is returned (N per draw).  These
    are correlated within a draw: fine for histograms, wrong for KS tests.
    """
    params.require_dims()
    if samples < 1:
        raise ValueError("need at least one sample")
    tasks = [(params, seed, s, c, all_streams) for s, c in stream_plan(samples)]
    return np.concatenate(_map_streams(_z_block, tasks, workers))


def default_window(params: SystemParams):
    _, N = params.require_dims()
    stats = ergodic_stats(params)
    sigma = max(math.sqrt(stats.v_erg / N), 1.0 / N)
    return max(stats.z_erg - WINDOW_SIGMAS * sigma, 0.0), stats.z_erg + WINDOW_SIGMAS * sigma


def histogram(z: np.ndarray, edges: np.ndarray) -> Histogram:
    z = np.asarray(z)
    counts, _ = np.histogram(z, bins=edges)
    below = int(np.count_nonzero(z < edges[0]))
    above = int(np.count_nonzero(z > edges[-1]))
    return Histogram(np.asarray(edges, dtype=float), counts, int(z.size), below, above)


def summarize(z: np.ndarray) -> MomentSummary:
    z = np.asarray(z, dtype=float)
    n = z.size
    mean = float(z.mean())
    c = z - mean
    var = float(np.mean(c**2) * n / max(n - 1, 1))
    m4 = float(np.mean(c**4))
    return MomentSummary(
        count=n,
        mean=mean,
        mean_se=math.sqrt(var / n),
        var=var,
        var_se=math.sqrt(max(m4 - var**2, 0.0) / n),
        min=float(z.min()),
        max=float(z.max()),
    )


def run_histogram(
    params: SystemParams,
    samples: int,
    seed: int,
    bins: int = DEFAULT_BINS,
    window=None,
    workers: Optional[int] = None,
    all_streams: bool = False,
):
    """(Histogram, MomentSummary, z samples) of the normalized SINR."""
    if samples < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples")
    lo, hi = default_window(params) if window is None else window
    z = simulate_z(params, samples, seed, workers, all_streams)
    return histogram(z, np.linspace(lo, hi, bins + 1)), summarize(z), z


# -- conditional eigenvector weights ----------------------------------------


@dataclass
class _Partial:
    """Sums for one z-bin; merged by plain addition in stream order."""

    n_x: np.ndarray
    s_t: np.ndarray
    s_t2: np.ndarray
    n: int = 0
    extremes: np.ndarray = field(default_factory=lambda: np.zeros((4, 2)))

    @classmethod
    def empty(cls, x_bins: int) -> "_Partial":
        return cls(np.zeros(x_bins, dtype=np.int64), np.zeros(x_bins), np.zeros(x_bins))

    def merge(self, other: "_Partial"):
        self.n_x += other.n_x
        self.s_t += other.s_t
        self.s_t2 += other.s_t2
        self.n += other.n
        self.extremes += other.extremes


def _eig(H: np.ndarray, method: str):
    if method == "svd":
        return wishart_eig(H)
    return hermitian_eig(gram(H), method)


def _conditional_block(params, seed, stream, count, z_bins, x_edges, all_streams, eig_method):
    M, N = params.require_dims()
    H = channel_block(M, N, seed, stream, count)
    z = _z_of(H, params, all_streams).reshape(count, -1)
    nx = len(x_edges) - 1
    out = []
    for lo, hi in z_bins:
        part = _Partial.empty(nx)
        rows, cols = np.nonzero((z >= lo) & (z <= hi))
        if rows.size:
            x, U = _eig(H[rows], eig_method)
            t = N * np.abs(U[np.arange(rows.size), cols, :]) ** 2
            idx = np.searchsorted(x_edges, x, side="right") - 1
            idx[x == x_edges[-1]] = nx - 1
            ok = (idx >= 0) & (idx < nx)
            part.n_x += np.bincount(idx[ok], minlength=nx)
            part.s_t += np.bincount(idx[ok], weights=t[ok], minlength=nx)
            part.s_t2 += np.bincount(idx[ok], weights=t[ok] ** 2, minlength=nx)
            part.n = int(rows.size)
            for r, (w, pos) in enumerate(((t[:, -1] / N, x[:, -1]), (t[:, 0] / N, x[:, 0]))):
                part.extremes[2 * r] += (w.sum(), (w**2).sum())
                part.extremes[2 * r + 1] += (pos.sum(), (pos**2).sum())
        out.append(part)
    return out


def _mean_se(s1: float, s2: float, n: int):
    if n == 0:
        return math.nan, math.nan
    mean = s1 / n
    var = max(s2 / n - mean**2, 0.0) * n / max(n - 1, 1)
    return mean, math.sqrt(var / n)


def run_conditional_weights(
    params: SystemParams,
    samples: int,
    seed: int,
    z_bins: Sequence[Tuple[float, float]],
    x_bins: int = DEFAULT_X_BINS,
    min_count: int = MIN_BIN_COUNT,
    workers: Optional[int] = None,
    all_streams: bool = False,
    eig_method: str = "lapack",
) -> List[ConditionalWeightStats]:
    """Mean eigenvector weight t per eigenvalue bin, conditioned on z in each z-bin.

    Eigenvalue bins split the asymptotic bulk [a, b] into equal parts;
    eigenvalues outside it only enter the extreme-eigenvalue statistics.
    Bins with fewer than ``min_count`` entries are suppressed (NaN).
    """
    if samples < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples")
    z_bins = [(float(lo), float(hi)) for lo, hi in z_bins]
    if any(not hi > lo for lo, hi in z_bins):
        raise ValueError("each z-bin needs lo < hi")
    sup = mp_edges(params.alpha)
    x_edges = np.linspace(sup.a, sup.b, x_bins + 1)
    tasks = [
        (params, seed, s, c, z_bins, x_edges, all_streams, eig_method) for s, c in stream_plan(samples)
    ]
    totals = [_Partial.empty(x_bins) for _ in z_bins]
    for parts in _map_streams(_conditional_block, tasks, workers):
        for acc, p in zip(totals, parts):
            acc.merge(p)

    results = []
    for (lo, hi), acc in zip(z_bins, totals):
        reported = acc.n_x >= min_count
        if not reported.all():
            warnings.warn(
                f"z-bin [{lo:g}, {hi:g}]: {int((~reported).sum())} of {x_bins} eigenvalue bins "
                f"hold fewer than {min_count} entries and are suppressed",
                EmptyBinWarning,
                stacklevel=2,
            )
        with np.errstate(invalid="ignore", divide="ignore"):
            n = acc.n_x.astype(float)
            mean = acc.s_t / n
            var = np.maximum(acc.s_t2 / n - mean**2, 0.0) * n / np.maximum(n - 1, 1)
            se = np.sqrt(var / n)
        mean = np.where(reported, mean, np.nan)
        se = np.where(reported, se, np.nan)
        ext = [_mean_se(s1, s2, acc.n) for s1, s2 in acc.extremes]
        results.append(
            ConditionalWeightStats(
                z_bin=(lo, hi),
                x_edges=x_edges,
                counts=acc.n_x,
                mean_t=mean,
                se_t=se,
                reported=reported,
                samples=acc.n,
                top_weight=ext[0][0],
                top_weight_se=ext[0][1],
                top_position=ext[1][0],
                top_position_se=ext[1][1],
                bottom_weight=ext[2][0],
                bottom_weight_se=ext[2][1],
                bottom_position=ext[3][0],
                bottom_position_se=ext[3][1],
            )
        )
    return results
