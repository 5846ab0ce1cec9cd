"""
Partial sums S_n / c_n at geometric checkpoints and the partial sum process
s_n(t) = (S_[nt] + (nt - [nt]) X_[nt]+1) / c_n on a uniform grid.

Both read the same stream through `_running_sums`, which accumulates strictly left to
right, so a point and a snapshot taken from one stream agree bit for bit.
"""

import math
from concurrent import futures
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from loguru import logger

from limset.errors import ParameterError
from limset.heavy_tail_models import sample_X
from limset.strassen_core import GridFn
from limset.sumsim.rng import RngStream

CHUNK = 1 << 16


@dataclass(frozen=True, eq=False)
class Visit:
    n: int
    point: np.ndarray
    snapshot: GridFn | None = None
    stream_id: int = 0


@dataclass
class ReplicaResult:
    stream: RngStream
    visits: list[Visit] = field(default_factory=list)

    @property
    def points(self) -> np.ndarray:
        return np.array([v.point for v in self.visits])


def checkpoints(n_max: int, theta: float = 1.1) -> np.ndarray:
    """n_k = ceil(theta^k) <= n_max, deduplicated."""
    if not theta > 1.0:
        raise ParameterError(f"theta must exceed 1, got {theta}")
    if n_max < 1:
        raise ParameterError(f"n_max must be positive, got {n_max}")
    k_max = int(math.floor(math.log(n_max) / math.log(theta))) + 1
    ns = np.unique(np.ceil(theta ** np.arange(k_max + 1)).astype(np.int64))
    return ns[ns <= n_max]


def normalizer_at(seq, n: int) -> float:
    return math.exp(float(seq.log_c(math.log(n))))


def _running_sums(model, stream: RngStream, n: int, chunk: int = CHUNK) -> Iterator[tuple[int, np.ndarray]]:
    """(offset, rows S_{offset+1}, ..., S_{offset+m}) in chunks of at most `chunk` draws."""
    total = np.zeros(model.dim)
    done = 0
    while done < n:
        m = min(chunk, n - done)
        x = stream.sign * sample_X(model, stream, m)
        sums = np.cumsum(np.vstack([total, x]), axis=0)[1:]
        if not np.all(np.isfinite(sums)):
            raise ParameterError(f"partial sums overflowed the float range before n={done + m}; lower n_max")
        yield done, sums
        total = sums[-1]
        done += m


def _path_values(prefix: np.ndarray, n: int, grid_size: int) -> np.ndarray:
    """S_([nt]) + (nt - [nt]) X_([nt]+1) at t = j / grid_size, from prefix[k] = S_k."""
    j = np.arange(grid_size + 1)
    q, r = np.divmod(n * j, grid_size)
    lo = prefix[q]
    hi = prefix[np.minimum(q + 1, n)]
    return lo + (r / grid_size)[:, None] * (hi - lo)


def simulate_partial_sums(
    model,
    seq,
    n_max: int,
    stream: RngStream,
    theta: float = 1.1,
    snapshot_every: int = 0,
    grid_size: int = 64,
) -> Iterator[Visit]:
    """
    Single pass over X_1, ..., X_{n_max}; yields S_n / c_n at the checkpoints and, every
    `snapshot_every`-th checkpoint, the snapshot s_n on `grid_size` intervals.
    """
    ns = checkpoints(n_max, theta)
    prefix = None
    if snapshot_every > 0:
        prefix = np.zeros((n_max + 1, model.dim))
    idx = 0
    for offset, sums in _running_sums(model, stream, n_max):
        if prefix is not None:
            prefix[offset + 1 : offset + 1 + sums.shape[0]] = sums
        end = offset + sums.shape[0]
        while idx < ns.size and ns[idx] <= end:
            n = int(ns[idx])
            c_n = normalizer_at(seq, n)
            snapshot = None
            if prefix is not None and idx % snapshot_every == 0:
                snapshot = GridFn.from_values(_path_values(prefix, n, grid_size) / c_n)
            yield Visit(n, sums[n - 1 - offset] / c_n, snapshot, stream.stream_id)
            idx += 1


def simulate_path_process(model, seq, n: int, grid_size: int, stream: RngStream) -> GridFn:
    """s_n = S_(n) / c_n on the grid, from the first n draws of the stream."""
    if n < 1 or grid_size < 1:
        raise ParameterError(f"n and grid_size must be positive, got {n}, {grid_size}")
    prefix = np.zeros((n + 1, model.dim))
    for offset, sums in _running_sums(model, stream, n):
        prefix[offset + 1 : offset + 1 + sums.shape[0]] = sums
    return GridFn.from_values(_path_values(prefix, n, grid_size) / normalizer_at(seq, n))


def run_replicas(model, seq, config, stream_list: list[RngStream], workers: int = 1) -> list[ReplicaResult]:
    """One single-threaded replica per stream; results come back in stream order."""

    def replica(stream: RngStream) -> ReplicaResult:
        visits = list(
            simulate_partial_sums(
                model,
                seq,
                config.n_max,
                stream,
                theta=config.theta,
                snapshot_every=config.snapshot_every,
                grid_size=config.grid_size,
            )
        )
        logger.debug(f"replica {stream}: {len(visits)} checkpoints up to n={config.n_max}")
        return ReplicaResult(stream, visits)

    if workers > 1 and len(stream_list) > 1:
        with futures.ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(replica, stream_list))
    return [replica(s) for s in stream_list]
