"""Experiment harness: phase transitions, bound sweeps, concentration grids.

Every random draw is addressed by a counter-based substream of the master
seed, so a rerun with the same configuration reproduces its output exactly,
independent of how the work is scheduled.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import isotonic_regression

from ._util import make_rng, seed_sequence
from .bounds import OperatorSpec, empirical_concentration, upsilon_dist, upsilon_idt
from .profiles import ProfileFamilySpec, make_profiles
from .sampling import assemble
from .signals import LevelPartition, draw_sparse, draw_sparse_distributed
from .solver import BpConfig, solve_bp_batch

log = logging.getLogger(__name__)

EXPERIMENTS = ("phase", "bounds_sweep", "concentration", "solve", "profile-check")


class ConfigError(ValueError):
    """Invalid or infeasible experiment configuration."""


@dataclass
class ExperimentConfig:
    """Settings shared by all experiments; unused fields are ignored.

    ``D`` is either an integer or ``"C"`` (one level per sensor).  The grid
    axes default to ``m = k N / resolution`` (rounded to a multiple of every
    C) and ``s/m = k / resolution`` for ``k = 1..resolution``; ``m_values``
    and ``rho_fracs`` override them.
    """

    experiment: str = "phase"
    N: int = 64
    C_list: list = field(default_factory=lambda: [1, 2, 4])
    scenarios: list = field(default_factory=lambda: ["distinct"])
    profile: dict = field(default_factory=lambda: {"family": "banded", "r1": 1, "r2": 1})
    law: str = "subsampled_dft"
    D: object = "C"
    resolution: int = 16
    m_values: Optional[list] = None
    rho_fracs: Optional[list] = None
    trials: int = 50
    threshold: float = 1e-3
    seed: int = 0
    signal_model: str = "plain"
    lam: float = 1.0
    value_law: str = "unit_complex_phase"
    solver: dict = field(default_factory=lambda: {"max_iterations": 5000, "tol_rel": 1e-7})
    batch_size: int = 400
    threads: int = 1
    # concentration grid
    t_values: list = field(default_factory=lambda: [0.3, 0.5, 0.7])
    quantities: list = field(default_factory=lambda: ["Upsilon_idt"])
    out: Optional[str] = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.threshold <= 0:
            raise ConfigError("threshold must be positive")
        if not self.C_list or any(int(c) < 1 for c in self.C_list):
            raise ConfigError("C_list must be a nonempty list of positive integers")
        if self.resolution < 1:
            raise ConfigError("resolution must be positive")
        for sc in self.scenarios:
            if sc not in ("distinct", "identical"):
                raise ConfigError(f"unknown scenario {sc!r}")

    @classmethod
    def from_json(cls, doc: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_json(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def levels(self, C: int) -> int:
        return C if self.D == "C" else int(self.D)

    def grid_m(self) -> list:
        if self.m_values is not None:
            ms = [int(m) for m in self.m_values]
        else:
            step = math.lcm(*[int(c) for c in self.C_list])
            ms = []
            for k in range(1, self.resolution + 1):
                m = int(round(k * self.N / self.resolution / step)) * step
                ms.append(max(m, step))
        if not ms:
            raise ConfigError("m grid is empty")
        for m in ms:
            for C in self.C_list:
                if m % int(C):
                    raise ConfigError(f"m={m} is not divisible by C={C}")
        return ms

    def grid_rho(self) -> list:
        if self.rho_fracs is not None:
            rho = [float(r) for r in self.rho_fracs]
        else:
            rho = [k / self.resolution for k in range(1, self.resolution + 1)]
        if not rho:
            raise ConfigError("s/m grid is empty")
        return rho


def success_criterion(x_hat, x, threshold: float) -> bool:
    """``||x_hat - x|| <= threshold ||x||``; for ``x = 0`` compare ``||x_hat||``
    with ``threshold`` itself."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    x = np.asarray(x)
    nx = np.linalg.norm(x)
    if nx == 0:
        return bool(np.linalg.norm(x_hat) <= threshold)
    return bool(np.linalg.norm(np.asarray(x_hat) - x) <= threshold * nx)


@dataclass
class PhaseGrid:
    """Success counts over (m/N, s/m) for one sensor count and scenario.

    ``successes[i, j]`` counts recoveries at ``m_values[i]`` and sparsity
    ``s_values[i, j] = round(rho[j] * m_values[i])``.
    """

    label: str
    C: int
    scenario: str
    N: int
    m_values: np.ndarray
    rho: np.ndarray
    s_values: np.ndarray
    successes: np.ndarray
    trials: int
    metadata: dict = field(default_factory=dict)

    @property
    def probability(self) -> np.ndarray:
        return self.successes / self.trials

    def rows(self):
        for i, m in enumerate(self.m_values):
            for j, r in enumerate(self.rho):
                yield {
                    "series": self.label,
                    "C": self.C,
                    "scenario": self.scenario,
                    "m": int(m),
                    "m_over_N": float(m) / self.N,
                    "s": int(self.s_values[i, j]),
                    "s_over_m": float(r),
                    "successes": int(self.successes[i, j]),
                    "trials": self.trials,
                }


def _series_profiles(cfg: ExperimentConfig, C: int, scenario: str, series_key: int) -> tuple:
    doc = dict(cfg.profile)
    if doc.get("seed") is None and doc.get("family") == "circulant_unit_modulus":
        doc["seed"] = int(seed_sequence(cfg.seed, series_key, 999).generate_state(1)[0])
    spec = ProfileFamilySpec.from_json(doc)
    partition = LevelPartition.contiguous(cfg.N, cfg.levels(C))
    return make_profiles(spec, partition, C, cfg.N, scenario), partition


def _draw_signal(cfg, partition, s, seed):
    if s == 0:
        return np.zeros(cfg.N, dtype=complex)
    if cfg.signal_model == "distributed":
        return draw_sparse_distributed(partition, s, cfg.lam, seed, cfg.value_law).x
    return draw_sparse(cfg.N, s, seed, cfg.value_law).x


def _phase_column(args) -> np.ndarray:
    cfg, C, scenario, series_key, i_m = args
    profiles, partition = _series_profiles(cfg, C, scenario, series_key)
    m = cfg.grid_m()[i_m]
    rho = cfg.grid_rho()
    solver_cfg = BpConfig(eta=0.0, **cfg.solver)
    succ = np.zeros(len(rho), dtype=int)

    jobs = []
    for j, r in enumerate(rho):
        s = int(round(r * m))
        if s > cfg.N:
            raise ConfigError(f"s={s} exceeds N={cfg.N}")
        for k in range(cfg.trials):
            jobs.append((j, s, k))

    for start in range(0, len(jobs), cfg.batch_size):
        chunk = jobs[start : start + cfg.batch_size]
        As, Ys, Xs = [], [], []
        for j, s, k in chunk:
            ss = seed_sequence(cfg.seed, series_key, i_m, j, k)
            op = assemble(profiles, cfg.law, m, seed_sequence(ss, 0))
            x = _draw_signal(cfg, partition, s, seed_sequence(ss, 1))
            As.append(op.matrix)
            Ys.append(op.matrix @ x)
            Xs.append(x)
        results = solve_bp_batch(np.stack(As), np.stack(Ys), solver_cfg)
        for (j, s, k), res, x in zip(chunk, results, Xs):
            succ[j] += success_criterion(res.x, x, cfg.threshold)
    return succ


def _series(cfg: ExperimentConfig) -> list:
    out = []
    for sc_i, scenario in enumerate(cfg.scenarios):
        for C in cfg.C_list:
            out.append((f"{scenario}/C={int(C)}", int(C), scenario, sc_i * 1000 + int(C)))
    return out


def run_phase_transition(cfg: ExperimentConfig) -> dict:
    """Empirical success counts for every (scenario, C) series.

    Each cell draws fresh operators and signals and solves equality-
    constrained basis pursuit.  Returns ``{label: PhaseGrid}``.
    """
    ms = cfg.grid_m()
    rho = cfg.grid_rho()
    if any(m > cfg.N for m in ms):
        log.warning("grid contains m > N; those columns are overdetermined")
    tasks = [(cfg, C, sc, key, i) for (_, C, sc, key) in _series(cfg) for i in range(len(ms))]
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            cols = list(pool.map(_phase_column, tasks))
    else:
        cols = [_phase_column(t) for t in tasks]

    grids = {}
    s_tab = np.array([[int(round(r * m)) for r in rho] for m in ms])
    for n, (label, C, sc, key) in enumerate(_series(cfg)):
        succ = np.stack(cols[n * len(ms) : (n + 1) * len(ms)])
        grids[label] = PhaseGrid(
            label, C, sc, cfg.N, np.array(ms), np.array(rho), s_tab, succ, cfg.trials,
            {"config_digest": cfg.digest(), "seed": cfg.seed, "threshold": cfg.threshold,
             "law": cfg.law, "profile": cfg.profile},
        )
    return grids


@dataclass(frozen=True)
class CurvePoint:
    m_over_N: float
    s_over_m: float
    status: str  # "crossing", "above" (never below 50%), "below" (never reaches 50%)


def extract_half_curve(grid: PhaseGrid, level: float = 0.5) -> list:
    """50% success contour, one point per m-column.

    Each column's success profile is first made nonincreasing in s/m by
    isotonic regression, then linearly interpolated at ``level``.  The
    resulting curve is finally made nondecreasing in m/N the same way.
    """
    rho = np.asarray(grid.rho, dtype=float)
    points = []
    for i, m in enumerate(grid.m_values):
        p = grid.probability[i]
        smooth = isotonic_regression(p, increasing=False).x
        below = np.flatnonzero(smooth < level)
        if below.size == 0:
            points.append([m / grid.N, rho[-1], "above"])
            continue
        j = below[0]
        if j == 0:
            points.append([m / grid.N, 0.0 if smooth[0] < level else rho[0], "below"])
            continue
        p0, p1 = smooth[j - 1], smooth[j]
        r = rho[j - 1] + (p0 - level) / (p0 - p1) * (rho[j] - rho[j - 1])
        points.append([m / grid.N, float(r), "crossing"])
    ys = isotonic_regression(np.array([p[1] for p in points]), increasing=True).x
    return [CurvePoint(float(p[0]), float(y), p[2]) for p, y in zip(points, ys)]


def dominance_fraction(upper: list, lower: list, atol: float = 1e-12) -> float:
    """Fraction of m-columns where curve ``upper`` is at or above ``lower``."""
    if len(upper) != len(lower):
        raise ValueError("curves must share the m grid")
    hits = sum(u.s_over_m >= l.s_over_m - atol for u, l in zip(upper, lower))
    return hits / len(upper)


def run_bounds_sweep(cfg: ExperimentConfig) -> list:
    """Evaluate Upsilon_idt (and optionally Upsilon_dist) for each C.

    Rows are ``{"C", "D", "quantity", "value"}``.
    """
    rows = []
    for C in cfg.C_list:
        C = int(C)
        D = cfg.levels(C)
        partition = LevelPartition.contiguous(cfg.N, D)
        spec = ProfileFamilySpec.from_json(dict(cfg.profile))
        for q in cfg.quantities:
            if q == "Upsilon_idt":
                prof = make_profiles(spec, partition, C, cfg.N, "identical")
                if prof.kind != "diagonal":
                    raise ConfigError("bound sweeps need a diagonal profile family")
                val = upsilon_idt(prof, partition)
            elif q == "Upsilon_dist":
                prof = make_profiles(spec, partition, C, cfg.N, "distinct")
                if prof.kind != "diagonal":
                    raise ConfigError("bound sweeps need a diagonal profile family")
                val = upsilon_dist(prof, partition)
            else:
                raise ConfigError(f"unknown quantity {q!r}")
            rows.append({"C": C, "D": D, "quantity": q, "value": val})
    return rows


def run_concentration(cfg: ExperimentConfig) -> list:
    """Empirical tail vs. the concentration bound over a (t, m) grid.

    Uses the first entry of ``C_list``, distinct sampling, and a fixed real
    unit vector drawn from the master seed.
    """
    C = int(cfg.C_list[0])
    D = cfg.levels(C)
    partition = LevelPartition.contiguous(cfg.N, D)
    spec = ProfileFamilySpec.from_json(dict(cfg.profile))
    prof = make_profiles(spec, partition, C, cfg.N, "distinct")
    x = make_rng(cfg.seed, 7).standard_normal(cfg.N)
    x /= np.linalg.norm(x)
    rows = []
    ms = cfg.m_values if cfg.m_values is not None else [cfg.N, 2 * cfg.N]
    for i, m in enumerate(ms):
        for j, t in enumerate(cfg.t_values):
            res = empirical_concentration(
                OperatorSpec(prof, cfg.law, int(m)), x, float(t), cfg.trials, seed_sequence(cfg.seed, i, j)
            )
            rows.append({"t": float(t), "m": int(m), "empirical_tail": res.tail,
                         "theoretical_bound": res.bound, "zeta": res.zeta, "trials": cfg.trials})
    return rows


def _cell(v):
    # shortest round-trip text for floats, plain ints for numpy integers
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def rows_to_csv(rows: list) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: _cell(v) for k, v in r.items()})
    return buf.getvalue()


def curves_long_format(grids: dict) -> list:
    """Plot-ready rows ``(x, y, series)`` of every 50% curve."""
    rows = []
    for label, g in grids.items():
        for p in extract_half_curve(g):
            rows.append({"x": p.m_over_N, "y": p.s_over_m, "series": label, "status": p.status})
    return rows
