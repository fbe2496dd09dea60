"""Theoretical quantities behind the measurement conditions, and empirical
probes (coherence, concentration, restricted isometry) that check them.

The measurement conditions are stated up to an unknown absolute constant.
The ``condition_*`` evaluators therefore return the scaling quantity on the
right-hand side together with a flag saying so; they never claim a usable
threshold for ``m``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ._util import make_rng, seed_sequence
from .profiles import SensorProfileSet, isometry_coherence, profile_norms
from .sampling import RowDistribution, _as_dists, _block, assemble, draw_rows
from .signals import LevelPartition


class BoundInputError(ValueError):
    pass


def default_log_factor(N: int) -> float:
    """log(N)^2, the default for the unspecified log factor L."""
    return math.log(N) ** 2


def zeta(alpha_min: float, alpha_max: float, Xi_dist: float) -> float:
    """Exponent constant of the concentration inequality for distinct
    subgaussian sensing:

        (32 a_max^2 Xi^2 max{2, exp(1/(4 a_min))} + 8 a_max Xi)^{-1}
    """
    if alpha_min <= 0 or alpha_max <= 0 or Xi_dist <= 0:
        raise BoundInputError("alpha_min, alpha_max and Xi_dist must be positive")
    if alpha_min > alpha_max:
        raise BoundInputError("alpha_min exceeds alpha_max")
    beta = max(2.0, math.exp(1.0 / (4.0 * alpha_min)))
    return 1.0 / (32.0 * alpha_max**2 * Xi_dist**2 * beta + 8.0 * alpha_max * Xi_dist)


def _require_diagonal(profiles: SensorProfileSet, what: str):
    if profiles.kind != "diagonal":
        raise BoundInputError(f"{what} is defined for diagonal profiles only")


def upsilon_dist(profiles: SensorProfileSet, partition: LevelPartition) -> float:
    """D^{-1} max_c sum_d ||h_c||_inf ||P_{I_d} h_c||_inf."""
    _require_diagonal(profiles, "Upsilon_dist")
    h = np.abs(profiles.data)
    full = h.max(axis=1)
    per_level = np.stack([h[:, lv].max(axis=1) for lv in partition.levels], axis=1)
    return float((full[:, None] * per_level).sum(axis=1).max() / partition.D)


def cross_sensor_gram(profiles: SensorProfileSet) -> np.ndarray:
    """g[i, j] = sum_c conj(h_{c,i}) h_{c,j}."""
    h = profiles.data
    return h.conj().T @ h


def upsilon_idt(profiles: SensorProfileSet, partition: LevelPartition) -> float:
    """(C/D) max_i sum_d max_{j in I_d} |sum_c conj(h_{c,i}) h_{c,j}|."""
    _require_diagonal(profiles, "Upsilon_idt")
    g = np.abs(cross_sensor_gram(profiles))
    level_max = np.stack([g[:, lv].max(axis=1) for lv in partition.levels], axis=1)
    return float(profiles.C / partition.D * level_max.sum(axis=1).max())


def gaussian_coherence_proxy(N: int, m: int) -> float:
    """High-probability bound on the squared sup-norm of gaussian rows.

    Not an almost-sure bound: every entry of an m x N standard gaussian stack
    stays below sqrt(2 log(2 N m)) with probability about 1 - 1/N.
    """
    return 2.0 * math.log(2.0 * N * m)


@dataclass
class BoundReport:
    """All computed quantities for one profile set and row-law choice.

    Fields are ``None`` where a quantity does not apply (for example
    ``Upsilon_idt`` for distinct profiles).
    """

    C: int
    N: int
    scenario: str
    kind: str
    mu_max: Optional[float]
    mu_is_proxy: bool
    norm1_max: float
    Xi_dist: float
    zeta: Optional[float]
    alpha_min: Optional[float]
    alpha_max: Optional[float]
    Upsilon_dist: Optional[float]
    Upsilon_idt: Optional[float]
    mu_V: Optional[float]
    log_factor: float
    D: Optional[int] = None
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)


def bound_report(
    profiles: SensorProfileSet,
    laws=None,
    partition: Optional[LevelPartition] = None,
    m: Optional[int] = None,
    V=None,
    log_factor: Optional[float] = None,
) -> BoundReport:
    """Evaluate every profile-dependent quantity that applies.

    ``laws`` is one row law or one per sensor (distinct sampling).  For the
    gaussian law the coherence is replaced by :func:`gaussian_coherence_proxy`
    when ``m`` is known, and flagged.
    """
    norms = profile_norms(profiles)
    notes = []
    L = default_log_factor(profiles.N) if log_factor is None else float(log_factor)
    if log_factor is None:
        notes.append("log factor L defaults to log(N)^2")

    mu, proxy = None, False
    alphas = []
    if laws is not None:
        n_laws = profiles.C if not isinstance(laws, (str, RowDistribution)) else 1
        dists = _as_dists(laws, n_laws, profiles.N)
        cohs = [d.coherence for d in dists]
        if all(c is not None for c in cohs):
            mu = max(cohs)
        elif m is not None:
            mu = max(gaussian_coherence_proxy(profiles.N, m) if c is None else c for c in cohs)
            proxy = True
            notes.append("gaussian coherence replaced by a high-probability proxy (non-rigorous)")
        alphas = [d.alpha for d in dists]

    Xi = float(np.max(norms.norm_2to2) ** 2)
    z = a_min = a_max = None
    if alphas and all(a is not None for a in alphas) and profiles.scenario == "distinct":
        a_min, a_max = min(alphas), max(alphas)
        z = zeta(a_min, a_max, Xi)

    u_dist = u_idt = None
    if partition is not None and profiles.kind == "diagonal":
        if profiles.scenario == "distinct":
            u_dist = upsilon_dist(profiles, partition)
        else:
            u_idt = upsilon_idt(profiles, partition)

    return BoundReport(
        C=profiles.C,
        N=profiles.N,
        scenario=profiles.scenario,
        kind=profiles.kind,
        mu_max=mu,
        mu_is_proxy=proxy,
        norm1_max=float(np.max(norms.norm_1to1) ** 2),
        Xi_dist=Xi,
        zeta=z,
        alpha_min=a_min,
        alpha_max=a_max,
        Upsilon_dist=u_dist,
        Upsilon_idt=u_idt,
        mu_V=None if V is None else isometry_coherence(V),
        log_factor=L,
        D=None if partition is None else partition.D,
        notes=notes,
    )


@dataclass(frozen=True)
class ScalingCondition:
    """Right-hand side of a measurement condition ``m >~ value``.

    The absolute constant hidden by ``>~`` is unknown, so ``value`` is a
    scaling quantity, not a threshold.
    """

    name: str
    value: float
    absolute_constant: str = "unknown"
    rigorous: bool = True
    notes: tuple = ()


def _mu(report: BoundReport) -> float:
    if report.mu_max is None:
        raise BoundInputError("coherence unavailable (gaussian law without a proxy)")
    return report.mu_max


def _notes(report):
    return ("coherence is a high-probability proxy",) if report.mu_is_proxy else ()


def condition_thm1(report: BoundReport, s: int, L: Optional[float] = None) -> ScalingCondition:
    """Nonuniform recovery, distinct sampling: ``s * mu * max_c ||H_c||_{1->1}^2 * L``."""
    L = report.log_factor if L is None else L
    val = s * _mu(report) * report.norm1_max * L
    return ScalingCondition("nonuniform_distinct", val, rigorous=not report.mu_is_proxy, notes=_notes(report))


def condition_thm2(report: BoundReport, s: int, delta: float, epsilon: float, N: Optional[int] = None) -> ScalingCondition:
    """Uniform recovery (RIP) for subgaussian distinct sampling:

    ``delta^{-2} Xi_dist^2 (s log(2N/s) + log(2/epsilon))``.
    """
    if not (0 < delta < 1 and 0 < epsilon < 1):
        raise BoundInputError("delta and epsilon must lie in (0, 1)")
    N = report.N if N is None else N
    if not 1 <= s <= N:
        raise BoundInputError("need 1 <= s <= N")
    val = report.Xi_dist**2 * (s * math.log(2 * N / s) + math.log(2 / epsilon)) / delta**2
    return ScalingCondition("uniform_rip_distinct", val)


def condition_cor1(report: BoundReport, s: int, lam: float, L: Optional[float] = None) -> ScalingCondition:
    """Sparse and distributed, distinct sampling: ``lam * s * mu * Upsilon_dist * L``."""
    if report.Upsilon_dist is None:
        raise BoundInputError("Upsilon_dist unavailable (needs diagonal distinct profiles and a partition)")
    L = report.log_factor if L is None else L
    val = lam * s * _mu(report) * report.Upsilon_dist * L
    return ScalingCondition("distributed_distinct", val, rigorous=not report.mu_is_proxy, notes=_notes(report))


def condition_cor2(report: BoundReport, s: int, lam: float, L: Optional[float] = None) -> ScalingCondition:
    """Sparse and distributed, identical sampling: ``lam * s * mu * Upsilon_idt * L``."""
    if report.Upsilon_idt is None:
        raise BoundInputError("Upsilon_idt unavailable (needs diagonal identical profiles and a partition)")
    L = report.log_factor if L is None else L
    val = lam * s * _mu(report) * report.Upsilon_idt * L
    return ScalingCondition("distributed_identical", val, rigorous=not report.mu_is_proxy, notes=_notes(report))


@dataclass(frozen=True)
class CoherenceCheck:
    empirical: np.ndarray  # per sensor: max over draws of ||a_c||_inf^2
    bound: np.ndarray  # per sensor: mu(G_c) ||H_c||_{1->1}^2
    violations: int
    draws: int

    @property
    def holds(self) -> bool:
        return self.violations == 0


def coherence_bound_check(profiles: SensorProfileSet, dist, trials: int, seed=None, rtol: float = 1e-12) -> CoherenceCheck:
    """Sample ``a_c = H_c^* ã_c`` and compare ``||a_c||_inf^2`` with
    ``mu(G_c) ||H_c||_{1->1}^2`` draw by draw.

    ``rtol`` absorbs floating-point rounding in the equality cases.
    """
    dists = _as_dists(dist, profiles.C, profiles.N)
    if any(d.coherence is None for d in dists):
        raise BoundInputError("coherence check needs a bounded row law (not gaussian)")
    n1 = profile_norms(profiles).norm_1to1
    bound = np.array([d.coherence for d in dists]) * n1**2
    emp = np.zeros(profiles.C)
    violations = 0
    for c in range(profiles.C):
        rows = draw_rows(dists[c], trials, make_rng(seed, c))
        # a_c^* = ã_c^* H_c, so |a_c| is the modulus of rows @ H_c
        sup2 = np.max(np.abs(_block(rows, profiles, c)) ** 2, axis=1)
        emp[c] = sup2.max()
        violations += int(np.sum(sup2 > bound[c] * (1 + rtol)))
    return CoherenceCheck(emp, bound, violations, trials * profiles.C)


@dataclass(frozen=True)
class OperatorSpec:
    """Recipe for drawing fresh operators: profiles, row law(s) and ``m``."""

    profiles: SensorProfileSet
    law: object
    m: int

    def draw(self, seed):
        return assemble(self.profiles, self.law, self.m, seed)

    def dists(self) -> list:
        n = self.profiles.C if self.profiles.scenario == "distinct" else 1
        return _as_dists(self.law, n, self.profiles.N)


@dataclass(frozen=True)
class ConcentrationResult:
    t: float
    m: int
    trials: int
    tail: float
    bound: float
    zeta: float

    @property
    def within_bound(self) -> bool:
        return self.tail <= self.bound


def empirical_concentration(opspec: OperatorSpec, x, t: float, trials: int, seed=None) -> ConcentrationResult:
    """Fraction of fresh operators with ``| ||Ax||^2 - ||x||^2 | >= t ||x||^2``,
    next to the bound ``2 exp(-zeta t^2 m)``.
    """
    if not 0 < t < 1:
        raise BoundInputError("t must lie in (0, 1)")
    prof = opspec.profiles
    if prof.scenario != "distinct":
        raise BoundInputError("the concentration inequality is stated for distinct sampling")
    if not prof.is_real:
        raise BoundInputError("complex profiles: the concentration inequality assumes real H_c")
    dists = opspec.dists()
    if any(d.alpha is None for d in dists):
        raise BoundInputError("concentration probe needs a subgaussian law (gaussian or bernoulli_pm1)")
    x = np.asarray(x)
    if np.iscomplexobj(x) and np.any(x.imag != 0):
        raise BoundInputError("x must be real")
    x = x.real.astype(float)
    xx = float(x @ x)
    if xx == 0:
        raise BoundInputError("x must be nonzero")
    Xi = float(np.max(profile_norms(prof).norm_2to2) ** 2)
    alphas = [d.alpha for d in dists]
    z = zeta(min(alphas), max(alphas), Xi)
    hits = 0
    for k in range(trials):
        A = opspec.draw(seed_sequence(seed, k))
        e = np.linalg.norm(A.apply(x)) ** 2
        hits += abs(e - xx) >= t * xx
    return ConcentrationResult(t, opspec.m, trials, hits / trials, 2 * math.exp(-z * t * t * opspec.m), z)


RIC_MAX_N = 24


def _supports(N: int, s: int, chunk: int):
    it = itertools.combinations(range(N), s)
    while True:
        block = list(itertools.islice(it, chunk))
        if not block:
            return
        yield np.array(block, dtype=np.intp)


def ric_exact(A, s: int, chunk: int = 20000) -> float:
    """Restricted isometry constant of order ``s`` by exhaustive search.

    Supports are enumerated lexicographically; each restricted Gram matrix is
    diagonalized exactly.
    """
    A = np.asarray(A)
    N = A.shape[1]
    if N > RIC_MAX_N:
        raise BoundInputError(f"exhaustive RIC limited to N <= {RIC_MAX_N}")
    if not 1 <= s <= N:
        raise BoundInputError("need 1 <= s <= N")
    G = A.conj().T @ A
    delta = 0.0
    for S in _supports(N, s, chunk):
        sub = G[S[:, :, None], S[:, None, :]]
        ev = np.linalg.eigvalsh(sub)
        delta = max(delta, float(np.max(np.abs(ev[:, [0, -1]] - 1.0))))
    return delta


@dataclass(frozen=True)
class RicEstimate:
    mean: float
    max: float
    values: np.ndarray


def empirical_ric(opspec: OperatorSpec, s: int, trials: int, seed=None) -> RicEstimate:
    """Exact ``delta_s`` for ``trials`` fresh operators."""
    if opspec.profiles.N > RIC_MAX_N:
        raise BoundInputError(f"exhaustive RIC limited to N <= {RIC_MAX_N}")
    vals = np.array([ric_exact(opspec.draw(seed_sequence(seed, k)).to_dense(), s) for k in range(trials)])
    return RicEstimate(float(vals.mean()), float(vals.max()), vals)
