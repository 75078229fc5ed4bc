"""Conic back-ends for :class:`lpvp.lmi.SdpProblem`.

Two back-ends are wired in: Clarabel (default) and CVXOPT. Both receive
the problem in the primal form ``min c'x  s.t.  h - G x in K`` with K a
product of a nonnegative orthant and PSD cones.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .lmi import PsdConstraint, SdpProblem

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_FAILURE = "numerical-failure"

DEFAULT_TOL = 1e-9
CHECK_TOL = 1e-6


class SolverUnavailable(RuntimeError):
    pass


@dataclass
class SdpSolution:
    status: str
    x: np.ndarray | None
    objective: float
    backend: str
    iterations: int = 0
    raw_status: str = ""
    violations: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def solver_tolerance() -> float:
    """Solver tolerance; the ``LPVP_SOLVER_TOL`` environment variable overrides it."""
    raw = os.environ.get("LPVP_SOLVER_TOL")
    if raw:
        try:
            tol = float(raw)
        except ValueError:
            raise ValueError(f"LPVP_SOLVER_TOL must be a float, got {raw!r}") from None
        if not tol > 0:
            raise ValueError("LPVP_SOLVER_TOL must be positive")
        return tol
    return DEFAULT_TOL


def _svec_index(n):
    """Upper triangle, column-major, with sqrt(2) on off-diagonals (Clarabel layout)."""
    rows, cols = [], []
    for j in range(n):
        for i in range(j + 1):
            rows.append(i)
            cols.append(j)
    rows, cols = np.array(rows), np.array(cols)
    scale = np.where(rows == cols, 1.0, np.sqrt(2.0))
    return rows, cols, scale


def _stack_rows(problem: SdpProblem):
    """Rows of ``(G, h)`` for the nonneg part and each PSD block, in order."""
    lin_G, lin_h = [], []
    for i in problem.nonneg_indices:
        row = np.zeros(problem.n_vars)
        row[i] = -1.0
        lin_G.append(row)
        lin_h.append(-problem.lower_bound)
    for row, bound in problem.linear_constraints:
        lin_G.append(np.asarray(row, dtype=float))
        lin_h.append(float(bound))
    return np.array(lin_G).reshape(-1, problem.n_vars), np.array(lin_h)


def _solve_clarabel(problem: SdpProblem, tol: float, max_iter: int):
    try:
        import clarabel
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise SolverUnavailable("clarabel is not installed") from exc

    lin_G, lin_h = _stack_rows(problem)
    blocks_A, blocks_b, cones = [], [], []
    if lin_G.shape[0]:
        blocks_A.append(lin_G)
        blocks_b.append(lin_h)
        cones.append(clarabel.NonnegativeConeT(lin_G.shape[0]))
    for blk in problem.psd_blocks:
        n = blk.size
        r, c, s = _svec_index(n)
        # s = -margin I - G0 - sum x_k G_k  must be PSD
        H = -blk.G0 - blk.margin * np.eye(n)
        blocks_A.append((blk.G[:, r, c] * s).T)
        blocks_b.append(H[r, c] * s)
        cones.append(clarabel.PSDTriangleConeT(n))
    A = sp.csc_matrix(np.vstack(blocks_A))
    b = np.concatenate(blocks_b)
    P = sp.csc_matrix((problem.n_vars, problem.n_vars))
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = max_iter
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_feas = tol
    settings.tol_infeas_abs = tol
    settings.tol_infeas_rel = tol
    solver = clarabel.DefaultSolver(P, np.asarray(problem.objective, float), A, b, cones, settings)
    sol = solver.solve()
    raw = str(sol.status)
    if raw in ("Solved", "AlmostSolved"):
        status = OPTIMAL
    elif "PrimalInfeasible" in raw:
        status = INFEASIBLE
    elif "DualInfeasible" in raw:
        status = UNBOUNDED
    else:
        status = NUMERICAL_FAILURE
    x = np.array(sol.x) if status == OPTIMAL else None
    return status, x, raw, int(sol.iterations)


def _solve_cvxopt(problem: SdpProblem, tol: float, max_iter: int):
    try:
        from cvxopt import matrix, solvers
    except ImportError as exc:  # pragma: no cover
        raise SolverUnavailable("cvxopt is not installed") from exc

    lin_G, lin_h = _stack_rows(problem)
    Gs, hs = [], []
    for blk in problem.psd_blocks:
        n = blk.size
        # column-major vec of each slope matrix
        Gs.append(matrix(blk.G.transpose(0, 2, 1).reshape(problem.n_vars, n * n).T.copy()))
        hs.append(matrix(-blk.G0 - blk.margin * np.eye(n)))
    kw = {}
    if lin_G.shape[0]:
        kw["Gl"] = matrix(lin_G)
        kw["hl"] = matrix(lin_h)
    opts = {"show_progress": False, "abstol": tol, "reltol": tol,
            "feastol": min(tol, 1e-7), "maxiters": max_iter}
    try:
        sol = solvers.sdp(matrix(np.asarray(problem.objective, float)), Gs=Gs, hs=hs,
                          options=opts, **kw)
    except (ArithmeticError, ValueError) as exc:
        # cvxopt gives up with an exception when a scaling degenerates
        log.warning("cvxopt failed: %s", exc)
        return NUMERICAL_FAILURE, None, f"{type(exc).__name__}: {exc}", 0
    raw = sol["status"]
    x = None
    if raw == "optimal" or (raw == "unknown" and sol["x"] is not None
                            and sol.get("primal infeasibility", 1) is not None
                            and sol["primal infeasibility"] < 1e-6):
        status = OPTIMAL
        x = np.array(sol["x"]).ravel()
    elif raw == "primal infeasible":
        status = INFEASIBLE
    elif raw == "dual infeasible":
        status = UNBOUNDED
    else:
        status = NUMERICAL_FAILURE
    return status, x, raw, int(sol.get("iterations", 0))


BACKENDS = {"clarabel": _solve_clarabel, "cvxopt": _solve_cvxopt}


def _used_columns(problem: SdpProblem) -> np.ndarray:
    """Decision entries that appear in at least one constraint."""
    used = np.zeros(problem.n_vars, dtype=bool)
    used[problem.nonneg_indices] = True
    for row, _ in problem.linear_constraints:
        used |= np.asarray(row) != 0
    for blk in problem.psd_blocks:
        used |= np.any(blk.G != 0, axis=(1, 2))
    return used


def _restrict(problem: SdpProblem, keep: np.ndarray) -> SdpProblem:
    """The same problem over the columns in ``keep``; the rest are fixed at 0."""
    pos = np.cumsum(keep) - 1
    blocks = [PsdConstraint(b.name, b.G0, b.G[keep], b.margin) for b in problem.psd_blocks]
    return SdpProblem(int(keep.sum()), problem.objective[keep], blocks,
                      pos[problem.nonneg_indices],
                      [(np.asarray(r)[keep], bd) for r, bd in problem.linear_constraints],
                      problem.strictness_epsilon, problem.lower_bound)


def solve(problem: SdpProblem, backend: str = "clarabel", tol: float | None = None,
          max_iter: int = 200, check_tol: float = CHECK_TOL) -> SdpSolution:
    """Solve ``problem`` and verify the returned point.

    The status is one of ``optimal``, ``infeasible``, ``unbounded`` or
    ``numerical-failure``. An ``optimal`` answer whose PSD blocks exceed
    ``check_tol`` (largest eigenvalue of ``G0 + sum x_k G_k``) or whose
    scalar constraints are off by more than ``check_tol`` is downgraded to
    ``numerical-failure``.

    Entries of ``x`` that no constraint touches are set to zero before the
    back-end sees the problem (a free direction makes interior-point KKT
    systems singular); if the objective uses one, the problem is unbounded.
    """
    try:
        fn = BACKENDS[backend]
    except KeyError:
        raise SolverUnavailable(f"unknown SDP back-end {backend!r}") from None
    tol = solver_tolerance() if tol is None else tol
    keep = _used_columns(problem)
    if np.any(problem.objective[~keep] != 0):
        return SdpSolution(UNBOUNDED, None, -np.inf, backend, 0, "free objective direction")
    if keep.all():
        status, x, raw, iters = fn(problem, tol, max_iter)
    elif keep.any():
        status, xr, raw, iters = fn(_restrict(problem, keep), tol, max_iter)
        x = None
        if xr is not None:
            x = np.zeros(problem.n_vars)
            x[keep] = xr
    else:
        # nothing to decide: the constant data either satisfies the constraints or not
        x = np.zeros(problem.n_vars)
        v = problem.violations(x)
        status = OPTIMAL if max(v.values()) <= 0 else INFEASIBLE
        raw, iters = "constant", 0
    viol = {}
    obj = float("nan")
    if status == OPTIMAL:
        viol = problem.violations(x)
        obj = float(problem.objective @ x)
        psd_raw = max((blk.max_eig(x) for blk in problem.psd_blocks), default=-np.inf)
        if psd_raw > check_tol or viol["nonneg"] > check_tol or viol["linear"] > check_tol:
            log.warning("back-end %s reported %s but the point violates constraints: %s",
                        backend, raw, viol)
            status = NUMERICAL_FAILURE
    return SdpSolution(status, x, obj, backend, iters, raw, viol)
