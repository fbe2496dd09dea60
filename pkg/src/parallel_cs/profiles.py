"""Sensor profile matrices H_c in compact form.

Two structures are supported.  ``diagonal`` profiles store the diagonal
h_c of H_c = diag(h_c).  ``circulant`` profiles store the symbol h_c (first
column) of the circulant H_c, whose eigenvalues are ``fft(h_c)``, i.e. the
sqrt(N)-scaled unitary DFT of the symbol.

Sensors are indexed from 0.  The scenario fixes the joint isometry target:

* ``distinct``:  (1/C) sum_c H_c^* H_c = I
* ``identical``: sum_c H_c^* H_c = I
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import circulant

from ._util import make_rng
from .signals import LevelPartition, complex_from_json, complex_to_json

KINDS = ("diagonal", "circulant")
SCENARIOS = ("distinct", "identical")
FAMILIES = ("banded", "piecewise_constant", "oscillatory", "circulant_unit_modulus", "custom")


class DegenerateProfileError(ValueError):
    """Some column (or eigenvalue) is zero for every sensor; no rescaling exists."""


@dataclass(frozen=True)
class SensorProfileSet:
    kind: str
    data: np.ndarray
    scenario: str = "distinct"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        data = np.array(self.data, dtype=complex, copy=True)
        if data.ndim == 1:
            data = data[None, :]
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("profile data must be a nonempty C x N array")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def C(self) -> int:
        return self.data.shape[0]

    @property
    def N(self) -> int:
        return self.data.shape[1]

    @property
    def M(self) -> int:
        """Normalization divisor: 1 for distinct, C for identical."""
        return 1 if self.scenario == "distinct" else self.C

    @property
    def is_real(self) -> bool:
        return bool(np.all(self.data.imag == 0))

    def eigenvalues(self) -> np.ndarray:
        """Diagonal of each H_c in the basis where the Gram sum is diagonal.

        For diagonal profiles that is h_c itself; for circulant profiles it is
        the eigenvalue vector ``fft(h_c)``.
        """
        if self.kind == "diagonal":
            return self.data
        return np.fft.fft(self.data, axis=1)

    def dense(self, c: int) -> np.ndarray:
        h = self.data[c]
        if self.kind == "diagonal":
            return np.diag(h)
        return circulant(h)

    def with_scenario(self, scenario: str) -> "SensorProfileSet":
        return SensorProfileSet(self.kind, self.data, scenario)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "scenario": self.scenario,
            "C": self.C,
            "N": self.N,
            "vectors": [complex_to_json(h) for h in self.data],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "SensorProfileSet":
        data = np.array([complex_from_json(v) for v in doc["vectors"]])
        out = cls(doc["kind"], data, doc.get("scenario", "distinct"))
        if "C" in doc and doc["C"] != out.C or "N" in doc and doc["N"] != out.N:
            raise ValueError("declared C/N do not match the stored vectors")
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json())


@dataclass(frozen=True)
class ProfileFamilySpec:
    """Parameters for one of the built-in profile families.

    ``r1``/``r2`` are band radii in level units (banded), ``window`` is
    ``"raised_cosine"`` or ``"boxcar"``.  ``V`` is a C x D isometry
    (piecewise_constant; default: the first D columns of the unitary C-point
    DFT).  ``phase_law`` is ``"uniform"`` or ``"uniform_real"`` (conjugate
    symmetric phases, giving a real symbol).  ``vectors``/``kind`` describe a
    custom set.
    """

    family: str
    r1: int = 1
    r2: int = 1
    window: str = "raised_cosine"
    V: Optional[np.ndarray] = field(default=None, repr=False)
    phase_law: str = "uniform"
    seed: Optional[int] = None
    kind: str = "diagonal"
    vectors: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown profile family {self.family!r}")
        if self.r1 < 0 or self.r2 < 0:
            raise ValueError("band radii must be nonnegative")
        if self.window not in ("raised_cosine", "boxcar"):
            raise ValueError(f"unknown window {self.window!r}")
        if self.phase_law not in ("uniform", "uniform_real"):
            raise ValueError(f"unknown phase law {self.phase_law!r}")

    @classmethod
    def from_json(cls, doc: dict) -> "ProfileFamilySpec":
        doc = dict(doc)
        if doc.get("V") is not None:
            doc["V"] = np.array([complex_from_json(row) for row in doc["V"]])
        if doc.get("vectors") is not None:
            doc["vectors"] = np.array([complex_from_json(v) for v in doc["vectors"]])
        return cls(**doc)

    def to_json(self) -> dict:
        doc = {
            "family": self.family,
            "r1": self.r1,
            "r2": self.r2,
            "window": self.window,
            "phase_law": self.phase_law,
            "seed": self.seed,
            "kind": self.kind,
        }
        if self.V is not None:
            doc["V"] = [complex_to_json(row) for row in np.asarray(self.V)]
        if self.vectors is not None:
            doc["vectors"] = [complex_to_json(v) for v in np.asarray(self.vectors)]
        return doc


def dft_isometry(C: int, D: int) -> np.ndarray:
    """First D columns of the unitary C-point DFT: an incoherent C x D isometry."""
    c = np.arange(C)[:, None]
    d = np.arange(D)[None, :]
    return np.exp(-2j * np.pi * c * d / C) / np.sqrt(C)


def isometry_coherence(V) -> float:
    """max |V_cd|^2."""
    return float(np.max(np.abs(np.asarray(V)) ** 2))


def _taper(pos: np.ndarray, length: int, window: str) -> np.ndarray:
    if window == "boxcar":
        return np.ones(pos.size)
    return np.sin(np.pi * (pos + 1) / (length + 1)) ** 2


def _banded(spec, partition, C, N):
    # The window spans the nominal band I_{c-r1} .. I_{c+r2}; levels outside
    # the level range get the size of the nearest real level and are then cut away, so
    # edge sensors keep a one-sided taper instead of a squeezed one.
    D = partition.D
    sizes = partition.sizes
    data = np.zeros((C, N), dtype=complex)
    for c in range(C):
        band = range(c - spec.r1, c + spec.r2 + 1)
        virt = [int(sizes[min(max(d, 0), D - 1)]) for d in band]
        length = sum(virt)
        offset = 0
        for d, size in zip(band, virt):
            if 0 <= d < D:
                idx = np.sort(partition.levels[d])
                data[c, idx] = _taper(offset + np.arange(size), length, spec.window)
            offset += size
    return data


def _piecewise_constant(spec, partition, C, M):
    D = partition.D
    V = dft_isometry(C, D) if spec.V is None else np.asarray(spec.V, dtype=complex)
    if V.shape != (C, D):
        raise ValueError(f"V must be C x D = {C} x {D}, got {V.shape}")
    if D > C:
        raise ValueError(f"piecewise constant profiles need D <= C, got D={D}, C={C}")
    if not np.allclose(V.conj().T @ V, np.eye(D), atol=1e-10):
        raise ValueError("V is not an isometry (V^* V != I)")
    level = partition.level_of()
    return np.sqrt(C / M) * V[:, level]


def _oscillatory(C, N, M):
    c = np.arange(1, C + 1)[:, None]
    i = np.arange(1, N + 1)[None, :]
    return np.exp(2j * np.pi * c * i / N) / np.sqrt(M)


def _unit_modulus_eigs(spec, C, N, M):
    rng = make_rng(spec.seed)
    theta = 2 * np.pi * rng.random((C, N))
    if spec.phase_law == "uniform_real":
        k = np.arange(1, (N + 1) // 2)
        theta[:, N - k] = -theta[:, k]
        theta[:, 0] = np.pi * rng.integers(0, 2, C)
        if N % 2 == 0:
            theta[:, N // 2] = np.pi * rng.integers(0, 2, C)
    lam = np.exp(1j * theta) / np.sqrt(M)
    h = np.fft.ifft(lam, axis=1)
    if spec.phase_law == "uniform_real":
        h = h.real.astype(complex)
    return h


def make_profiles(
    spec: ProfileFamilySpec,
    partition: Optional[LevelPartition],
    C: int,
    N: int,
    scenario: str = "distinct",
) -> SensorProfileSet:
    """Build a profile set from ``spec`` satisfying the scenario's joint
    isometry condition.

    ``partition`` is required by the level-based families (banded and
    piecewise_constant) and ignored by the others.
    """
    if C < 1 or N < 1:
        raise ValueError("need C >= 1 and N >= 1")
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}")
    M = 1 if scenario == "distinct" else C
    fam = spec.family
    if fam in ("banded", "piecewise_constant"):
        if partition is None or partition.N != N:
            raise ValueError(f"{fam} profiles need a partition of 0..{N - 1}")

    if fam == "oscillatory":
        return SensorProfileSet("diagonal", _oscillatory(C, N, M), scenario)
    if fam == "piecewise_constant":
        return SensorProfileSet("diagonal", _piecewise_constant(spec, partition, C, M), scenario)
    if fam == "circulant_unit_modulus":
        return SensorProfileSet("circulant", _unit_modulus_eigs(spec, C, N, M), scenario)
    if fam == "banded":
        raw = SensorProfileSet("diagonal", _banded(spec, partition, C, N), scenario)
        return normalize_joint_isometry(raw)
    # custom
    vectors = np.asarray(spec.vectors, dtype=complex)
    if vectors.ndim == 1:
        vectors = vectors[None, :]
    if vectors.shape != (C, N):
        raise ValueError(f"custom vectors must be {C} x {N}, got {vectors.shape}")
    return normalize_joint_isometry(SensorProfileSet(spec.kind, vectors, scenario))


def _gram_diagonal(profiles: SensorProfileSet) -> np.ndarray:
    # sum_c |lambda_{c,k}|^2 scaled so that the target is all-ones
    scale = 1.0 / profiles.C if profiles.scenario == "distinct" else 1.0
    return scale * np.sum(np.abs(profiles.eigenvalues()) ** 2, axis=0)


def normalize_joint_isometry(profiles: SensorProfileSet) -> SensorProfileSet:
    """Rescale each column (diagonal) or eigenvalue (circulant) stack so the
    scenario's joint isometry condition holds.

    The direction of every stack across sensors is kept; only its length
    changes.
    """
    g = _gram_diagonal(profiles)
    bad = np.flatnonzero(g <= 0)
    if bad.size:
        what = "column" if profiles.kind == "diagonal" else "eigenvalue"
        raise DegenerateProfileError(
            f"{what} stack is zero across all sensors at indices {bad[:10].tolist()}"
        )
    factor = 1.0 / np.sqrt(g)
    if profiles.kind == "diagonal":
        data = profiles.data * factor
    else:
        data = np.fft.ifft(profiles.eigenvalues() * factor, axis=1)
        if profiles.is_real:
            # rescaling is conjugate-symmetric, so the symbol stays real
            data = data.real.astype(complex)
    return SensorProfileSet(profiles.kind, data, profiles.scenario)


def verify_joint_isometry(profiles: SensorProfileSet) -> float:
    """Largest deviation of the scenario's Gram sum from the identity.

    The Gram sum is diagonal (in the standard basis, or the Fourier basis for
    circulant profiles), so only its diagonal is compared.
    """
    return float(np.max(np.abs(_gram_diagonal(profiles) - 1.0)))


@dataclass(frozen=True)
class ProfileNorms:
    norm_1to1: np.ndarray
    norm_2to2: np.ndarray


def profile_norms(profiles: SensorProfileSet) -> ProfileNorms:
    """Induced 1->1 and 2->2 norms of every H_c, from their closed forms."""
    h = np.abs(profiles.data)
    if profiles.kind == "diagonal":
        n1 = h.max(axis=1)
        n2 = n1.copy()
    else:
        n1 = h.sum(axis=1)
        n2 = np.abs(profiles.eigenvalues()).max(axis=1)
    return ProfileNorms(n1, n2)


def apply_profile(profiles: SensorProfileSet, c: int, x, adjoint: bool = False) -> np.ndarray:
    """Compute ``H_c x`` (or ``H_c^* x`` with ``adjoint=True``).

    Works on a single vector or on the last axis of a stack.
    """
    if not 0 <= c < profiles.C:
        raise IndexError(f"sensor index {c} out of range for C={profiles.C}")
    x = np.asarray(x)
    if x.shape[-1] != profiles.N:
        raise ValueError(f"expected length-{profiles.N} input, got {x.shape[-1]}")
    h = profiles.data[c]
    if profiles.kind == "diagonal":
        return (h.conj() if adjoint else h) * x
    lam = np.fft.fft(h)
    if adjoint:
        lam = lam.conj()
    return np.fft.ifft(lam * np.fft.fft(x, axis=-1), axis=-1)
