"""Random sensing rows and the stacked multi-sensor measurement operators.

A row stack returned by :func:`draw_rows` holds the rows of the standard CS
matrix, i.e. the conjugate transposes of the sensing vectors.  Block ``c`` of
an assembled operator is ``rows_c @ H_c``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.fft

from ._util import make_rng
from .profiles import SensorProfileSet, apply_profile

LAWS = ("gaussian", "bernoulli_pm1", "subsampled_dft", "random_convolution")
DENSE_LIMIT = 4096


@dataclass(frozen=True)
class RowDistribution:
    """An isotropic row law on C^N.

    ``alpha`` is the subgaussian parameter in E exp(theta <Y, x>) <=
    exp(alpha theta^2); both real laws attain alpha = 1/2.  ``coherence`` is
    the almost-sure bound on the squared sup-norm of a row, ``None`` when the
    law is unbounded.
    """

    law: str
    N: int

    def __post_init__(self):
        if self.law not in LAWS:
            raise ValueError(f"unsupported row law {self.law!r}; choose from {LAWS}")
        if self.N < 1:
            raise ValueError("N must be positive")

    @property
    def alpha(self) -> Optional[float]:
        return 0.5 if self.law in ("gaussian", "bernoulli_pm1") else None

    @property
    def coherence(self) -> Optional[float]:
        return None if self.law == "gaussian" else 1.0

    @property
    def is_real(self) -> bool:
        return self.law in ("gaussian", "bernoulli_pm1")


def dft_rows(freqs, N: int) -> np.ndarray:
    """Rows of the sqrt(N)-scaled unitary DFT at the given frequencies."""
    freqs = np.asarray(freqs)
    return np.exp(-2j * np.pi * np.outer(freqs, np.arange(N)) / N)


def draw_rows(dist: RowDistribution, count: int, seed=None) -> np.ndarray:
    """Draw ``count`` i.i.d. rows from ``dist`` as a ``count x N`` array."""
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = make_rng(seed)
    N = dist.N
    if dist.law == "gaussian":
        return rng.standard_normal((count, N))
    if dist.law == "bernoulli_pm1":
        return 2.0 * rng.integers(0, 2, size=(count, N)) - 1.0
    if dist.law == "subsampled_dft":
        return dft_rows(rng.integers(0, N, size=count), N)
    # random_convolution: one random-sign diagonal per stack, then DFT rows
    signs = 2.0 * rng.integers(0, 2, size=N) - 1.0
    return dft_rows(rng.integers(0, N, size=count), N) * signs


def _block(rows: np.ndarray, profiles: SensorProfileSet, c: int) -> np.ndarray:
    # rows @ H_c without forming H_c for the diagonal case
    if profiles.kind == "diagonal":
        return rows * profiles.data[c]
    return rows @ profiles.dense(c)


@dataclass(frozen=True)
class Transform:
    """An orthogonal transform U given by its action and adjoint."""

    name: str
    forward: Callable[[np.ndarray], np.ndarray]
    adjoint: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class MeasurementOperator:
    """The stacked operator ``A = scale * [A_1; ...; A_C]`` (optionally ``A U``).

    ``rows`` holds one row stack per sensor; for identical sampling all
    entries are the same array.  Operators are immutable once built.
    """

    scenario: str
    profiles: SensorProfileSet
    rows: tuple
    scale: float
    laws: tuple
    seed: Optional[int] = None
    transform: Optional[Transform] = None
    matrix: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def N(self) -> int:
        return self.profiles.N

    @property
    def C(self) -> int:
        return self.profiles.C

    @property
    def block_sizes(self) -> list:
        return [r.shape[0] for r in self.rows]

    @property
    def m(self) -> int:
        return sum(self.block_sizes)

    @property
    def shape(self) -> tuple:
        return (self.m, self.N)

    def block(self, c: int) -> np.ndarray:
        """Unscaled block ``A_c = rows_c H_c`` (before any transform)."""
        return _block(self.rows[c], self.profiles, c)

    def apply(self, x) -> np.ndarray:
        return apply(self, x)

    def adjoint_apply(self, y) -> np.ndarray:
        return adjoint_apply(self, y)

    def to_dense(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix
        return _densify(self)

    def spec_json(self, profile_ref: Optional[str] = None) -> dict:
        laws = list(self.laws)
        return {
            "scenario": self.scenario,
            "law": laws[0] if len(set(laws)) == 1 else laws,
            "m": self.m,
            "C": self.C,
            "N": self.N,
            "seed": self.seed,
            "profile": profile_ref,
            "transform": None if self.transform is None else self.transform.name,
        }


def _densify(op: MeasurementOperator) -> np.ndarray:
    eye = np.eye(op.N, dtype=complex)
    return np.stack([apply(op, e) for e in eye], axis=1)


def _build_matrix(op: MeasurementOperator) -> Optional[np.ndarray]:
    if op.N > DENSE_LIMIT:
        return None
    A = op.scale * np.vstack([op.block(c) for c in range(op.C)])
    if op.transform is not None:
        # A U = (U^* A^*)^*
        A = op.transform.adjoint(A.conj().T).conj().T
    return A


def _finish(op: MeasurementOperator) -> MeasurementOperator:
    A = _build_matrix(op)
    if A is not None:
        A.setflags(write=False)
    return replace(op, matrix=A)


def _as_dists(dists, C: int, N: int) -> list:
    if isinstance(dists, (RowDistribution, str)):
        dists = [dists] * C
    out = [RowDistribution(d, N) if isinstance(d, str) else d for d in dists]
    if len(out) != C:
        raise ValueError(f"need one row law per sensor ({C}), got {len(out)}")
    if any(d.N != N for d in out):
        raise ValueError("row law dimension does not match the profiles")
    return out


def assemble_distinct(
    profiles: SensorProfileSet,
    dists: Union[RowDistribution, str, Sequence],
    m: int,
    seed=None,
) -> MeasurementOperator:
    """Distinct sampling: independent rows per sensor, ``A = m^{-1/2} [A_c]``.

    Sensor ``c`` draws ``m/C`` rows from its own substream of ``seed``.
    """
    if profiles.scenario != "distinct":
        raise ValueError("distinct assembly needs profiles normalized for the distinct scenario")
    C = profiles.C
    if m < C or m % C:
        raise ValueError(f"m={m} must be a positive multiple of C={C}")
    laws = _as_dists(dists, C, profiles.N)
    rows = tuple(draw_rows(laws[c], m // C, make_rng(seed, c)) for c in range(C))
    op = MeasurementOperator(
        "distinct", profiles, rows, 1.0 / np.sqrt(m), tuple(d.law for d in laws), seed
    )
    return _finish(op)


def assemble_identical(
    profiles: SensorProfileSet,
    dist: Union[RowDistribution, str],
    m: int,
    seed=None,
) -> MeasurementOperator:
    """Identical sampling: one shared row stack, ``A = sqrt(C/m) [Ã H_c]``."""
    if profiles.scenario != "identical":
        raise ValueError("identical assembly needs profiles normalized for the identical scenario")
    C = profiles.C
    if m < C or m % C:
        raise ValueError(f"m={m} must be a positive multiple of C={C}")
    law = _as_dists(dist, 1, profiles.N)[0]
    shared = draw_rows(law, m // C, make_rng(seed, 0))
    shared.setflags(write=False)
    op = MeasurementOperator(
        "identical", profiles, (shared,) * C, np.sqrt(C / m), (law.law,) * C, seed
    )
    return _finish(op)


def assemble(profiles: SensorProfileSet, law, m: int, seed=None) -> MeasurementOperator:
    """Dispatch on the profiles' scenario."""
    if profiles.scenario == "distinct":
        return assemble_distinct(profiles, law, m, seed)
    return assemble_identical(profiles, law, m, seed)


def apply(op: MeasurementOperator, x) -> np.ndarray:
    """``y = A x``."""
    x = np.asarray(x)
    if x.shape[0] != op.N:
        raise ValueError(f"expected length-{op.N} input, got {x.shape[0]}")
    if op.matrix is not None:
        return op.matrix @ x
    if op.transform is not None:
        x = op.transform.forward(x)
    parts = [op.rows[c] @ apply_profile(op.profiles, c, x) for c in range(op.C)]
    return op.scale * np.concatenate(parts)


def adjoint_apply(op: MeasurementOperator, y) -> np.ndarray:
    """``x = A^* y``."""
    y = np.asarray(y)
    if y.shape[0] != op.m:
        raise ValueError(f"expected length-{op.m} input, got {y.shape[0]}")
    if op.matrix is not None:
        return op.matrix.conj().T @ y
    out = np.zeros(op.N, dtype=complex)
    start = 0
    for c, r in enumerate(op.rows):
        seg = y[start : start + r.shape[0]]
        out += apply_profile(op.profiles, c, r.conj().T @ seg, adjoint=True)
        start += r.shape[0]
    out *= op.scale
    if op.transform is not None:
        out = op.transform.adjoint(out)
    return out


def _haar_analysis(v: np.ndarray) -> np.ndarray:
    out = np.array(v, dtype=complex)
    n = out.shape[-1]
    while n > 1:
        a = out[..., 0:n:2].copy()
        b = out[..., 1:n:2].copy()
        out[..., : n // 2] = (a + b) / np.sqrt(2)
        out[..., n // 2 : n] = (a - b) / np.sqrt(2)
        n //= 2
    return out


def _haar_synthesis(w: np.ndarray) -> np.ndarray:
    out = np.array(w, dtype=complex)
    N = out.shape[-1]
    n = 2
    while n <= N:
        s = out[..., : n // 2].copy()
        d = out[..., n // 2 : n].copy()
        out[..., 0:n:2] = (s + d) / np.sqrt(2)
        out[..., 1:n:2] = (s - d) / np.sqrt(2)
        n *= 2
    return out


def _axis0(f):
    # transforms act on axis 0 (vectors or column stacks)
    return lambda v: np.moveaxis(f(np.moveaxis(np.asarray(v), 0, -1)), -1, 0)


def named_transform(tag: str, N: int) -> Transform:
    """Synthesis transform U for a coefficient-sparse signal model.

    ``dct``: orthonormal inverse DCT-II; ``haar``: orthonormal Haar wavelet
    synthesis (N must be a power of two).
    """
    if tag == "identity":
        return Transform("identity", lambda v: np.asarray(v), lambda v: np.asarray(v))
    if tag == "dct":
        return Transform(
            "dct",
            _axis0(lambda v: scipy.fft.idct(v, norm="ortho", axis=-1)),
            _axis0(lambda v: scipy.fft.dct(v, norm="ortho", axis=-1)),
        )
    if tag == "haar":
        if N & (N - 1):
            raise ValueError("haar transform needs N to be a power of two")
        return Transform("haar", _axis0(_haar_synthesis), _axis0(_haar_analysis))
    raise ValueError(f"unknown transform {tag!r}")


class NonOrthogonalTransformError(ValueError):
    pass


def check_orthogonal(U: Transform, N: int, probes: int = 4, tol: float = 1e-8, seed=0):
    rng = make_rng(seed)
    for _ in range(probes):
        v = rng.standard_normal(N) + 1j * rng.standard_normal(N)
        Uv = U.forward(v)
        if abs(np.linalg.norm(Uv) - np.linalg.norm(v)) > tol * np.linalg.norm(v):
            raise NonOrthogonalTransformError(f"transform {U.name!r} does not preserve norms")
        if np.linalg.norm(U.adjoint(Uv) - v) > tol * np.linalg.norm(v):
            raise NonOrthogonalTransformError(f"transform {U.name!r}: U^* U != I")


def sparsify_in_transform(op: MeasurementOperator, U: Union[str, Transform]) -> MeasurementOperator:
    """Compose the operator with an orthogonal synthesis transform: ``A U``."""
    if op.transform is not None:
        raise ValueError("operator already carries a transform")
    if isinstance(U, str):
        U = named_transform(U, op.N)
    check_orthogonal(U, op.N)
    if U.name == "identity":
        return op
    return _finish(replace(op, transform=U, matrix=None))
