import numpy as np
import pytest

from lpvp.lmi import NEG, POS, LmiProgram, extract, trace
from lpvp.sdp import (INFEASIBLE, OPTIMAL, SolverUnavailable, solve, solver_tolerance)

BACKENDS = ["clarabel", "cvxopt"]


@pytest.mark.parametrize("backend", BACKENDS)
def test_trivial_feasibility(backend):
    prog = LmiProgram()
    prog.scalar("t")
    prog.add_lmi([-np.eye(2)], NEG, True)
    sol = solve(prog.vectorize(eps=1e-8), backend)
    assert sol.status == OPTIMAL


@pytest.mark.parametrize("backend", BACKENDS)
def test_scalar_shift(backend):
    prog = LmiProgram()
    x = prog.scalar("x")
    prog.add_lmi([x - np.eye(1)], POS, False)
    sol = solve(prog.vectorize(x.expr()), backend)
    assert sol.status == OPTIMAL
    assert abs(sol.x[0] - 1.0) < 1e-6


@pytest.mark.parametrize("backend", BACKENDS)
def test_min_trace_identity(backend):
    prog = LmiProgram()
    Q = prog.symmetric("Q", 2)
    prog.add_lmi([Q - np.eye(2)], POS, False)
    sol = solve(prog.vectorize(trace(Q)), backend)
    assert sol.status == OPTIMAL
    assert abs(sol.objective - 2.0) < 1e-6
    np.testing.assert_allclose(extract(sol.x, Q), np.eye(2), atol=1e-6)


@pytest.mark.parametrize("backend", BACKENDS)
def test_infeasible(backend):
    prog = LmiProgram()
    x = prog.scalar("x")
    prog.add_lmi([x.expr()], POS, True)
    prog.add_linear(x.expr(), -1.0)
    sol = solve(prog.vectorize(x.expr()), backend)
    assert sol.status == INFEASIBLE


@pytest.mark.parametrize("backend", BACKENDS)
def test_contract_blocks_hold_at_optimum(backend):
    # Lyapunov inequality for a stable 3x3 system
    A = np.array([[-1.0, 2.0, 0.0], [0.0, -1.0, 1.0], [0.5, 0.0, -2.0]])
    prog = LmiProgram()
    P = prog.symmetric("P", 3)
    prog.add_lmi([P @ A + A.T @ P], NEG, True)
    prog.add_lmi([P - np.eye(3)], POS, False)
    pr = prog.vectorize(trace(P))
    sol = solve(pr, backend)
    assert sol.status == OPTIMAL
    assert max(b.max_eig(sol.x) for b in pr.psd_blocks) <= 1e-6


def test_unknown_backend():
    prog = LmiProgram()
    prog.scalar("x")
    with pytest.raises(SolverUnavailable):
        solve(prog.vectorize(), "mosek-but-missing")


def test_tolerance_env(monkeypatch):
    monkeypatch.setenv("LPVP_SOLVER_TOL", "1e-7")
    assert solver_tolerance() == 1e-7
    monkeypatch.setenv("LPVP_SOLVER_TOL", "abc")
    with pytest.raises(ValueError):
        solver_tolerance()
    monkeypatch.delenv("LPVP_SOLVER_TOL")
    assert solver_tolerance() == 1e-9


def test_untouched_variables():
    prog = LmiProgram()
    x = prog.scalar("x")
    prog.scalar("y")  # appears nowhere
    prog.add_lmi([x - np.eye(1)], POS, False)
    sol = solve(prog.vectorize(x.expr()), "cvxopt")
    assert sol.status == OPTIMAL
    assert abs(sol.x[0] - 1.0) < 1e-6 and sol.x[1] == 0.0
    free = LmiProgram()
    a = free.scalar("a")
    free.add_lmi([-np.eye(1)], NEG, True)
    assert solve(free.vectorize(a.expr())).status == "unbounded"
