"""Signal models: plain sparse, sparse in levels, sparse and distributed.

Also provides the best-approximation errors used on the right-hand side of
the recovery error bounds.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._util import make_rng


class InfeasibleCapsError(ValueError):
    """The per-level caps cannot accommodate the requested sparsity."""


@dataclass(frozen=True)
class LevelPartition:
    """A partition of ``{0, ..., N-1}`` into ``D`` disjoint, nonempty levels.

    Indices are zero-based throughout the package.
    """

    levels: tuple
    N: int

    def __post_init__(self):
        levels = tuple(np.asarray(lv, dtype=np.intp).ravel() for lv in self.levels)
        object.__setattr__(self, "levels", levels)
        if not levels:
            raise ValueError("partition needs at least one level")
        if any(lv.size == 0 for lv in levels):
            raise ValueError("every level must be nonempty")
        allidx = np.concatenate(levels)
        if allidx.size != self.N or np.any(np.sort(allidx) != np.arange(self.N)):
            raise ValueError("levels must be disjoint and cover 0..N-1")

    @property
    def D(self) -> int:
        return len(self.levels)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([lv.size for lv in self.levels])

    @classmethod
    def contiguous(cls, N: int, D: int) -> "LevelPartition":
        """Split ``0..N-1`` into ``D`` contiguous blocks of near-equal size."""
        if not 1 <= D <= N:
            raise ValueError(f"need 1 <= D <= N, got D={D}, N={N}")
        return cls(tuple(np.array_split(np.arange(N), D)), N)

    def level_of(self) -> np.ndarray:
        """Array mapping each index to its level number."""
        out = np.empty(self.N, dtype=np.intp)
        for d, lv in enumerate(self.levels):
            out[lv] = d
        return out

    def to_json(self) -> list:
        return [lv.tolist() for lv in self.levels]

    @classmethod
    def from_json(cls, data: list) -> "LevelPartition":
        N = sum(len(lv) for lv in data)
        return cls(tuple(data), N)


@dataclass(frozen=True)
class SparseSignal:
    x: np.ndarray
    support: np.ndarray
    level_counts: Optional[np.ndarray] = None
    model: str = "plain"
    lam: Optional[float] = None
    partition: Optional[LevelPartition] = field(default=None, repr=False)

    @property
    def s(self) -> int:
        return int(self.support.size)

    def is_distributed(self, s: int, lam: float, partition: LevelPartition) -> bool:
        """Membership in the set of s-sparse, lam-distributed vectors."""
        return is_sparse_distributed(self.x, s, lam, partition)

    def to_json(self) -> list:
        return complex_to_json(self.x)


def complex_to_json(x) -> list:
    x = np.asarray(x, dtype=complex)
    return [[float(v.real), float(v.imag)] for v in x]


def complex_from_json(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 1:
        return arr.astype(complex)
    return arr[..., 0] + 1j * arr[..., 1]


def _draw_values(rng, k: int, value_law: str) -> np.ndarray:
    if value_law == "unit_complex_phase":
        return np.exp(2j * np.pi * rng.random(k))
    if value_law == "gaussian":
        return (rng.standard_normal(k) + 1j * rng.standard_normal(k)) / np.sqrt(2)
    raise ValueError(f"unknown value law {value_law!r}")


def draw_sparse(N: int, s: int, seed=None, value_law: str = "unit_complex_phase") -> SparseSignal:
    """Draw an s-sparse vector with a uniformly random support of size ``s``.

    ``s = 0`` is allowed and returns the zero vector.
    """
    if not 0 <= s <= N:
        raise ValueError(f"sparsity s={s} out of range for N={N}")
    rng = make_rng(seed)
    support = np.sort(rng.choice(N, size=s, replace=False))
    x = np.zeros(N, dtype=complex)
    x[support] = _draw_values(rng, s, value_law)
    return SparseSignal(x, support)


def level_cap(s: int, lam: float, D: int) -> int:
    cap = math.floor(lam * s / D + 1e-12)
    if cap < 1:
        raise InfeasibleCapsError(f"per-level cap floor(lam*s/D) = floor({lam}*{s}/{D}) is zero")
    return cap


def _check_caps(sizes: np.ndarray, s: int, cap: int):
    room = int(np.minimum(sizes, cap).sum())
    if room < s:
        raise InfeasibleCapsError(
            f"caps admit at most {room} nonzeros but s={s} was requested"
        )


def _count_table(sizes: Sequence[int], s: int, cap: int) -> list:
    # ways[d][k]: number of supports of size k using levels d..D-1 under the caps
    D = len(sizes)
    ways = [[0] * (s + 1) for _ in range(D + 1)]
    ways[D][0] = 1
    for d in range(D - 1, -1, -1):
        for k in range(s + 1):
            tot = 0
            for j in range(0, min(cap, sizes[d], k) + 1):
                tot += math.comb(sizes[d], j) * ways[d + 1][k - j]
            ways[d][k] = tot
    return ways


def draw_sparse_distributed(
    partition: LevelPartition,
    s: int,
    lam: float,
    seed=None,
    value_law: str = "unit_complex_phase",
) -> SparseSignal:
    """Draw an s-sparse vector whose support is uniform over all supports
    with at most ``floor(lam*s/D)`` entries in each level.

    Per-level counts are sampled exactly from their marginal law (a dynamic
    program over big-integer support counts), then positions are drawn
    uniformly inside each level.
    """
    D = partition.D
    if not 1 <= lam <= D:
        raise ValueError(f"need 1 <= lam <= D, got lam={lam}, D={D}")
    if not 1 <= s <= partition.N:
        raise ValueError(f"sparsity s={s} out of range")
    cap = level_cap(s, lam, D)
    sizes = [int(v) for v in partition.sizes]
    _check_caps(np.array(sizes), s, cap)

    rng = make_rng(seed)
    # exact big-integer draws; floats would lose precision for large counts
    pyrng = random.Random(int(rng.integers(2**63)))
    ways = _count_table(sizes, s, cap)
    counts = np.zeros(D, dtype=np.intp)
    remaining = s
    for d in range(D):
        weights = []
        for j in range(0, min(cap, sizes[d], remaining) + 1):
            weights.append(math.comb(sizes[d], j) * ways[d + 1][remaining - j])
        r = pyrng.randrange(sum(weights))
        acc = 0
        for j, w in enumerate(weights):
            acc += w
            if r < acc:
                break
        counts[d] = j
        remaining -= j

    picks = [rng.choice(lv, size=k, replace=False) for lv, k in zip(partition.levels, counts)]
    support = np.sort(np.concatenate(picks)) if picks else np.array([], dtype=np.intp)
    x = np.zeros(partition.N, dtype=complex)
    x[support] = _draw_values(rng, support.size, value_law)
    return SparseSignal(x, support, counts, model="distributed", lam=lam, partition=partition)


def level_counts(x, partition: LevelPartition, tol: float = 0.0) -> np.ndarray:
    nz = np.abs(np.asarray(x)) > tol
    return np.array([int(nz[lv].sum()) for lv in partition.levels])


def is_sparse_distributed(x, s: int, lam: float, partition: LevelPartition) -> bool:
    counts = level_counts(x, partition)
    return counts.sum() <= s and counts.max() <= lam * s / partition.D + 1e-12


def best_s_term_error(x, s: int) -> float:
    """l1 error of the best s-term approximation of ``x``."""
    mags = np.abs(np.asarray(x)).ravel()
    if not 0 <= s <= mags.size:
        raise ValueError(f"s={s} out of range")
    if s == mags.size:
        return 0.0
    # ascending order: the N-s smallest entries are the residual
    return float(np.sort(mags)[: mags.size - s].sum())


def best_distributed_support(x, s: int, lam: float, partition: LevelPartition) -> np.ndarray:
    """Support of a best approximation in the sparse-and-distributed set.

    Greedy: keep the ``cap`` largest magnitudes per level, then the ``s``
    largest of those.  Ties go to the lowest index.
    """
    mags = np.abs(np.asarray(x)).ravel()
    cap = level_cap(s, lam, partition.D)
    _check_caps(partition.sizes, s, cap)
    kept = []
    for lv in partition.levels:
        lv = np.sort(lv)
        order = np.lexsort((lv, -mags[lv]))
        kept.append(lv[order[:cap]])
    cand = np.concatenate(kept)
    order = np.lexsort((cand, -mags[cand]))
    return np.sort(cand[order[:s]])


def best_distributed_error(x, s: int, lam: float, partition: LevelPartition) -> float:
    mags = np.abs(np.asarray(x)).ravel()
    drop = np.ones(mags.size, dtype=bool)
    drop[best_distributed_support(x, s, lam, partition)] = False
    return float(mags[drop].sum())
