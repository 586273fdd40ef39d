"""Counter-based random streams keyed by (seed, stream id).

Sample s of a run lives in stream ``s // DRAWS_PER_STREAM`` at draw
``s % DRAWS_PER_STREAM``.  Each stream is a Philox generator whose key is
derived from the seed and the stream id, so any subset of streams can be
regenerated independently and results do not depend on how streams are
distributed over workers.
"""

from __future__ import annotations

import numpy as np

DRAWS_PER_STREAM = 4096


def stream_generator(seed: int, stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(stream,))
    return np.random.Generator(np.random.Philox(ss))


def channel_block(M: int, N: int, seed: int, stream: int, count: int = DRAWS_PER_STREAM) -> np.ndarray:
    """First ``count`` channel draws of a stream, shape (count, M, N).

    Entries are CN(0, 1/N).  Gaussians come from numpy's ziggurat transform of
    the Philox output; draws are consumed in C order, so a shorter block is a
    prefix of a longer one.
    """
    if not 0 <= count <= DRAWS_PER_STREAM:
        raise ValueError(f"a stream holds at most {DRAWS_PER_STREAM} draws")
    g = stream_generator(seed, stream).standard_normal((count, M, N, 2))
    g *= np.sqrt(0.5 / N)
    return g.view(np.complex128)[..., 0]


def sample_channel(M: int, N: int, seed: int, stream: int, index: int) -> np.ndarray:
    """Draw ``index`` of stream ``stream``; identical to the same row of a block."""
    if not 0 <= index < DRAWS_PER_STREAM:
        raise ValueError(f"draw index must lie in [0, {DRAWS_PER_STREAM})")
    return channel_block(M, N, seed, stream, index + 1)[index]


def stream_plan(samples: int):
    """(stream id, draw count) pairs covering ``samples`` draws."""
    full, rest = divmod(samples, DRAWS_PER_STREAM)
    plan = [(s, DRAWS_PER_STREAM) for s in range(full)]
    if rest:
        plan.append((full, rest))
    return plan
