"""Basis pursuit (denoising) for complex data.

    minimize ||z||_1  subject to  ||A z - y||_2 <= eta

The default method is ADMM (Douglas-Rachford splitting).  With ``eta = 0``
each step is a projection onto the affine set ``{z : A z = y}`` through a
cached pseudo-inverse, then a complex soft-threshold.  With ``eta > 0`` the
splitting is of ``||x||_1 + indicator_{||w - y|| <= eta}(w)`` under the
coupling ``w = A x``: soft-threshold, projection onto the residual ball, and
projection onto the graph of ``A`` through a cached inverse of ``I + A^* A``.
Many instances of the same shape can be solved in lock-step with
:func:`solve_bp_batch`, which is how the phase-transition harness uses it.

For operators too large to densify, ``method="pdhg"`` runs the
Chambolle-Pock primal-dual iteration using only ``apply``/``adjoint_apply``,
with step sizes from a power-method estimate of ``||A||``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .signals import best_distributed_error, best_s_term_error


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class BpConfig:
    """Solver settings.

    ``tol_feas`` defaults to ``1e-8 * ||y||``.  ``rho`` is the ADMM penalty
    relative to the problem scale; ``relax`` the over-relaxation factor.
    """

    eta: float = 0.0
    max_iterations: int = 20000
    tol_rel: float = 1e-8
    tol_feas: Optional[float] = None
    method: str = "admm"
    rho: float = 10.0
    relax: float = 1.0
    check_every: int = 10

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")
        if self.tol_rel <= 0 or (self.tol_feas is not None and self.tol_feas <= 0):
            raise ValueError("tolerances must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.method not in ("admm", "pdhg"):
            raise ValueError(f"unknown method {self.method!r}")

    @property
    def mode(self) -> str:
        return "equality" if self.eta == 0 else "denoising"


@dataclass
class BpResult:
    x: np.ndarray
    objective: float
    residual: float
    iterations: int
    converged: bool
    dual_residual: float = float("nan")
    info: dict = field(default_factory=dict)


def soft_threshold(v: np.ndarray, t) -> np.ndarray:
    """Complex soft-threshold: shrink magnitudes by ``t``, keep phases.

    Entries with magnitude at or below ``t`` become exactly zero.
    """
    mag = np.abs(v)
    keep = mag > t
    scale = np.zeros_like(mag)
    np.divide(mag - t, mag, out=scale, where=keep)
    return v * scale


def project_ball(w: np.ndarray, center: np.ndarray, radius) -> np.ndarray:
    """Project the rows of ``w`` onto l2 balls around the rows of ``center``."""
    d = w - center
    nrm = np.linalg.norm(d, axis=-1, keepdims=True)
    radius = np.reshape(radius, nrm.shape) if np.ndim(radius) else radius
    factor = np.ones_like(nrm)
    np.divide(radius, nrm, out=factor, where=nrm > radius)
    return center + d * factor


def _bmv(M: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.matmul(M, v[..., None])[..., 0]


def _as_matrix(op) -> np.ndarray:
    if isinstance(op, np.ndarray):
        return op
    M = getattr(op, "matrix", None)
    if M is None:
        raise SolverError("ADMM needs a dense operator; use method='pdhg' for matrix-free ones")
    return M


def _dual_residual(x: np.ndarray, q: np.ndarray) -> np.ndarray:
    # distance of q from the l1 subdifferential at x, per instance
    over = np.maximum(np.abs(q).max(axis=-1) - 1.0, 0.0)
    mag = np.abs(x)
    on = mag > 0
    phase = np.zeros_like(x)
    np.divide(x, mag, out=phase, where=on)
    mismatch = np.where(on, np.abs(q - phase), 0.0).max(axis=-1)
    return np.maximum(over, mismatch)


def solve_bp_batch(A: np.ndarray, Y: np.ndarray, config: BpConfig = BpConfig(), eta=None) -> list:
    """Solve a stack of independent problems ``(A[b], Y[b])`` with ADMM.

    ``A`` has shape ``(B, m, N)`` and ``Y`` shape ``(B, m)``.  ``eta`` may be
    a scalar or a length-B array and defaults to ``config.eta``.  Each
    instance stops on its own criterion and is frozen from then on, so its
    result does not depend on the rest of the batch.

    Instances with ``eta == 0`` use projection onto the affine set
    ``{z : A z = y}`` through the pseudo-inverse, which stays well behaved
    when ``A`` is rank deficient (repeated Fourier rows, for instance).
    The others use graph projection with a residual-ball constraint.
    """
    A = np.asarray(A)
    Y = np.asarray(Y, dtype=complex)
    if A.ndim != 3 or Y.shape != A.shape[:2]:
        raise ValueError("need A of shape (B, m, N) and Y of shape (B, m)")
    B = A.shape[0]
    eta = np.broadcast_to(np.asarray(config.eta if eta is None else eta, dtype=float), (B,)).copy()
    if np.any(eta < 0):
        raise ValueError("eta must be nonnegative")
    A = A.astype(complex)

    results = [None] * B
    for mask, setup in ((eta == 0, _AffineAdmm), (eta > 0, _GraphAdmm)):
        sel = np.flatnonzero(mask)
        if sel.size:
            for b, r in zip(sel, _lockstep(setup(A[sel], Y[sel], eta[sel], config), config)):
                results[b] = r
    return results


class _AffineAdmm:
    """z-split ADMM for ``min ||z||_1 + indicator(A x = y)`` subject to ``x = z``."""

    name = "admm_affine"

    def __init__(self, A, Y, eta, config):
        B, m, N = A.shape
        AH = np.conj(np.swapaxes(A, 1, 2))
        pinv = np.linalg.pinv(A, rcond=1e-10)
        self.static = {
            "A": A,
            "Y": Y,
            "P": np.eye(N) - pinv @ A,
            "q": _bmv(pinv, Y),
            "eta": eta,
        }
        self.static["t"] = _threshold(AH, Y, config.rho)
        self.state = {"z": np.zeros((B, N), dtype=complex), "u": np.zeros((B, N), dtype=complex)}

    @staticmethod
    def step(P, S, relax):
        x = _bmv(P["P"], S["z"] - S["u"]) + P["q"]
        if relax != 1.0:
            x = relax * x + (1 - relax) * S["z"]
        S["z"] = soft_threshold(x + S["u"], P["t"])
        S["u"] += x - S["z"]
        return S["z"]

    @staticmethod
    def certificate(P, S):
        return S["u"] / P["t"]


class _GraphAdmm:
    """Graph-projection ADMM: ``||x||_1 + indicator(||w - y|| <= eta)`` with
    ``w = A x`` enforced by projecting onto the graph of ``A``."""

    name = "admm_graph"

    def __init__(self, A, Y, eta, config):
        B, m, N = A.shape
        AH = np.conj(np.swapaxes(A, 1, 2))
        # graph projection: x = K c + K A^* d, w = A x, with K = (I + A^* A)^{-1}
        K = np.linalg.inv(np.eye(N) + AH @ A)
        self.static = {"A": A, "Y": Y, "K": K, "KAH": K @ AH, "eta": eta, "t": _threshold(AH, Y, config.rho)}
        self.state = {
            "x": np.zeros((B, N), dtype=complex),
            "w": np.zeros((B, m), dtype=complex),
            "ux": np.zeros((B, N), dtype=complex),
            "uw": np.zeros((B, m), dtype=complex),
        }

    @staticmethod
    def step(P, S, relax):
        xh = soft_threshold(S["x"] - S["ux"], P["t"])
        wh = project_ball(S["w"] - S["uw"], P["Y"], P["eta"])
        if relax != 1.0:
            xh_r = relax * xh + (1 - relax) * S["x"]
            wh = relax * wh + (1 - relax) * S["w"]
        else:
            xh_r = xh
        S["x"] = _bmv(P["K"], xh_r + S["ux"]) + _bmv(P["KAH"], wh + S["uw"])
        S["w"] = _bmv(P["A"], S["x"])
        S["ux"] += xh_r - S["x"]
        S["uw"] += wh - S["w"]
        return xh

    @staticmethod
    def certificate(P, S):
        return -S["ux"] / P["t"]


def _threshold(AH, Y, rho):
    # problem scale; iterates then scale exactly with (y, eta)
    scale = np.abs(np.einsum("bnm,bm->bn", AH, Y)).max(axis=1)
    return (np.where(scale > 0, scale, 1.0) / rho)[:, None]


def _lockstep(solver, config: BpConfig) -> list:
    P, S = solver.static, solver.state
    A, Y, eta = P["A"], P["Y"], P["eta"]
    B, m, N = A.shape
    ynorm = np.linalg.norm(Y, axis=1)
    tol_feas = 1e-8 * ynorm if config.tol_feas is None else np.full(B, config.tol_feas)
    trivial = (ynorm <= eta) | (np.abs(np.einsum("bmn,bm->bn", A.conj(), Y)).max(axis=1) == 0)

    out_x = np.zeros((B, N), dtype=complex)
    out_q = np.zeros((B, N), dtype=complex)
    iters = np.zeros(B, dtype=int)
    conv = trivial.copy()
    done = trivial.copy()

    # working set: instances still iterating (finished ones are dropped lazily;
    # their outputs are recorded at the moment they stop)
    idx = np.flatnonzero(~done)
    P = {k: v[idx] for k, v in P.items()}
    S = {k: v[idx] for k, v in S.items()}
    tol = tol_feas[idx]
    ce = config.check_every
    prev = None
    it = 0
    while idx.size and it < config.max_iterations:
        it += 1
        xh = solver.step(P, S, config.relax)
        if it % ce == 0 or it >= config.max_iterations:
            nx = np.linalg.norm(xh, axis=1)
            change = np.linalg.norm(xh - prev, axis=1) if prev is not None else nx
            res = np.linalg.norm(_bmv(P["A"], xh) - P["Y"], axis=1)
            ok = (change <= config.tol_rel * np.maximum(nx, 1e-300)) & (res <= P["eta"] + tol)
            fin = (ok | (it >= config.max_iterations)) & ~done[idx]
            if np.any(fin):
                g = idx[fin]
                out_x[g] = xh[fin]
                out_q[g] = solver.certificate(P, S)[fin]
                iters[g] = it
                conv[g] = ok[fin]
                done[g] = True
            live = ~done[idx]
            # compact once enough of the working set has finished
            if live.sum() <= 0.75 * idx.size:
                idx, tol = idx[live], tol[live]
                P = {k: v[live] for k, v in P.items()}
                S = {k: v[live] for k, v in S.items()}
        if (it + 1) % ce == 0:
            prev = xh.copy()

    results = []
    for b in range(B):
        xb = out_x[b]
        res = float(np.linalg.norm(A[b] @ xb - Y[b]))
        info = {"method": solver.name, "eta": float(eta[b])}
        dual = float(_dual_residual(xb[None], out_q[b][None])[0]) if not trivial[b] else 0.0
        results.append(
            BpResult(xb, float(np.abs(xb).sum()), res, int(iters[b]), bool(conv[b]), dual, info)
        )
    return results


def power_norm(op, iterations: int = 20, rtol: float = 1e-4, seed: int = 0) -> float:
    """Estimate ``||A||_2`` by power iteration on ``A^* A``."""
    rng = np.random.default_rng(seed)
    N = op.N
    v = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iterations):
        u = op.adjoint_apply(op.apply(v))
        new = float(np.sqrt(np.linalg.norm(u)))
        if new == 0:
            return 0.0
        v = u / np.linalg.norm(u)
        if est and abs(new - est) <= rtol * new:
            est = new
            break
        est = new
    return est


def _solve_pdhg(op, y: np.ndarray, config: BpConfig) -> BpResult:
    y = np.asarray(y, dtype=complex)
    eta = config.eta
    ynorm = float(np.linalg.norm(y))
    tol_feas = 1e-8 * ynorm if config.tol_feas is None else config.tol_feas
    Aty = op.adjoint_apply(y)
    scale = float(np.abs(Aty).max())
    if ynorm <= eta or scale == 0:
        x = np.zeros(op.N, dtype=complex)
        return BpResult(x, 0.0, ynorm, 0, True, 0.0, {"method": "pdhg"})
    L = power_norm(op) * 1.01
    # tau * sigma * L^2 < 1, primal step proportional to the problem scale
    tau = scale / (L * L) * config.rho
    sigma = 0.99 / (tau * L * L)

    x = np.zeros(op.N, dtype=complex)
    xbar = x.copy()
    v = np.zeros_like(y)
    converged = False
    it = 0
    for it in range(1, config.max_iterations + 1):
        z = v + sigma * op.apply(xbar)
        # prox of sigma * (indicator of the eta-ball around y)^* via Moreau
        v = z - sigma * project_ball(z / sigma, y, eta)
        xn = soft_threshold(x - tau * op.adjoint_apply(v), tau)
        xbar = 2 * xn - x
        change = np.linalg.norm(xn - x)
        x = xn
        if it % config.check_every == 0:
            res = np.linalg.norm(op.apply(x) - y)
            if change <= config.tol_rel * max(np.linalg.norm(x), 1e-300) and res <= eta + tol_feas:
                converged = True
                break
    res = float(np.linalg.norm(op.apply(x) - y))
    q = -op.adjoint_apply(v)
    dual = float(_dual_residual(x[None], q[None])[0])
    return BpResult(x, float(np.abs(x).sum()), res, it, converged, dual, {"method": "pdhg", "norm_estimate": L})


def solve_bp(op, y, config: BpConfig = BpConfig()) -> BpResult:
    """Solve basis pursuit for one instance.

    ``op`` is a :class:`~parallel_cs.sampling.MeasurementOperator` or a dense
    array.  A result with ``converged=False`` carries the last iterate.
    """
    y = np.asarray(y, dtype=complex)
    if config.method == "pdhg":
        if isinstance(op, np.ndarray):
            op = DenseOperator(op)
        if y.shape != (op.shape[0],):
            raise ValueError("y does not match the operator's row count")
        return _solve_pdhg(op, y, config)
    A = _as_matrix(op)
    if y.shape != (A.shape[0],):
        raise ValueError("y does not match the operator's row count")
    return solve_bp_batch(A[None], y[None], config)[0]


class DenseOperator:
    """Minimal apply/adjoint wrapper around a dense matrix."""

    def __init__(self, A):
        self.matrix = np.asarray(A)
        self.shape = self.matrix.shape
        self.N = self.shape[1]

    def apply(self, x):
        return self.matrix @ x

    def adjoint_apply(self, y):
        return self.matrix.conj().T @ y


def reference_solve(op, y, eta: float = 0.0, budget: int = 100000) -> BpResult:
    """Independent high-accuracy solve through a conic interior-point solver.

    Used as a test oracle only.  ``budget`` caps the interior-point
    iterations.
    """
    try:
        import cvxpy as cp
    except ImportError as exc:  # optional dependency
        raise ImportError("reference_solve needs cvxpy: pip install 'artifact[test]'") from exc

    A = op if isinstance(op, np.ndarray) else op.to_dense()
    y = np.asarray(y, dtype=complex)
    m, N = A.shape
    if N > 256:
        raise ValueError("reference_solve is meant for desk-scale problems (N <= 256)")
    z = cp.Variable(N, complex=True)
    cons = [cp.norm(A @ z - y, 2) <= eta] if eta > 0 else [A @ z == y]
    prob = cp.Problem(cp.Minimize(cp.norm(z, 1)), cons)
    try:
        prob.solve(solver=cp.CLARABEL, max_iter=min(budget, 10000), tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10)
    except cp.error.SolverError as exc:
        raise SolverError(f"reference solver failed: {exc}") from exc
    if z.value is None:
        raise SolverError(f"reference solver ended with status {prob.status}")
    x = np.asarray(z.value)
    ok = prob.status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE)
    return BpResult(x, float(np.abs(x).sum()), float(np.linalg.norm(A @ x - y)), 0, ok, float("nan"), {"method": "clarabel", "status": prob.status})


@dataclass(frozen=True)
class RecoveryError:
    l2_error: float
    bound_rhs: float
    best_approx_error: float

    @property
    def ratio(self) -> float:
        if self.bound_rhs == 0:
            return 0.0 if self.l2_error == 0 else float("inf")
        return self.l2_error / self.bound_rhs


def recovery_error(x_hat, x, s: int, lam=None, partition=None, eta: float = 0.0) -> RecoveryError:
    """Observed l2 error next to the bound's right-hand side
    ``sigma + sqrt(s) * eta`` (absolute constant omitted).

    With ``lam`` and ``partition`` the best approximation is taken over the
    sparse-and-distributed set instead of all s-sparse vectors.
    """
    x_hat = np.asarray(x_hat)
    x = np.asarray(x)
    if x_hat.shape != x.shape:
        raise ValueError("dimension mismatch")
    if lam is None:
        sigma = best_s_term_error(x, s)
    else:
        sigma = best_distributed_error(x, s, lam, partition)
    return RecoveryError(
        float(np.linalg.norm(x - x_hat)), sigma + np.sqrt(s) * eta, sigma
    )
