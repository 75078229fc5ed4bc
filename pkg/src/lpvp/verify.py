"""Frozen-parameter norm oracles and a-posteriori certification of designs.

Nothing here depends on the SDP route: the H2 norm comes from a
Lyapunov equation, the H-infinity norm from Hamiltonian-eigenvalue
bisection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .lpv import LpvPlant, closed_loop, eval_affine, vertices


class NotHurwitzError(ValueError):
    """The state matrix has an eigenvalue with nonnegative real part."""


def _check_hurwitz(A):
    ev = np.linalg.eigvals(A)
    if ev.size and np.max(ev.real) >= 0:
        raise NotHurwitzError(f"A is not Hurwitz (max real part {np.max(ev.real):.3e})")


def lyap(A, Q) -> np.ndarray:
    """Solve ``A X + X A^T + Q = 0`` by complex Schur reduction and back-substitution."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    n = A.shape[0]
    T, U = la.schur(A.astype(complex), output="complex")
    F = -(U.conj().T @ Q @ U)
    X = np.zeros((n, n), dtype=complex)
    # column j of X T^H only involves columns k >= j of X
    for j in range(n - 1, -1, -1):
        rhs = F[:, j] - X[:, j + 1:] @ T[j, j + 1:].conj()
        X[:, j] = la.solve_triangular(T + T[j, j].conj() * np.eye(n), rhs)
    X = (U @ X @ U.conj().T).real
    return 0.5 * (X + X.T)


def h2_norm(A, B, C) -> float:
    """``sqrt(trace(C P C^T))`` with ``A P + P A^T + B B^T = 0``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    C = np.asarray(C, dtype=float).reshape(-1, A.shape[0])
    _check_hurwitz(A)
    P = lyap(A, B @ B.T)
    return float(np.sqrt(max(np.trace(C @ P @ C.T), 0.0)))


def freq_response(A, B, C, D, omega) -> np.ndarray:
    """``sigma_max(C (j w I - A)^-1 B + D)`` for each ``w`` in ``omega``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    C = np.asarray(C, dtype=float).reshape(-1, n)
    D = np.zeros((C.shape[0], B.shape[1])) if D is None else np.atleast_2d(D)
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    M = 1j * w[:, None, None] * np.eye(n) - A
    G = C @ np.linalg.solve(M, np.broadcast_to(B, (len(w),) + B.shape)) + D
    return np.linalg.svd(G, compute_uv=False)[:, 0]


def _imag_frequencies(A, B, C, D, gamma):
    """Frequencies where the gamma-Hamiltonian has imaginary-axis eigenvalues."""
    R = gamma ** 2 * np.eye(D.shape[1]) - D.T @ D
    Ri = np.linalg.inv(R)
    Ah = A + B @ Ri @ D.T @ C
    H = np.block([[Ah, B @ Ri @ B.T],
                  [-C.T @ (np.eye(D.shape[0]) + D @ Ri @ D.T) @ C, -Ah.T]])
    ev = np.linalg.eigvals(H)
    scale = max(1.0, np.abs(ev).max(initial=0.0))
    return np.abs(ev[np.abs(ev.real) <= 1e-7 * scale].imag)


def hinf_norm(A, B, C, D=None, rtol: float = 1e-6) -> float:
    """H-infinity norm by bisection on the Hamiltonian imaginary-eigenvalue test.

    A candidate level is accepted as a lower bound only after the
    corresponding frequency is confirmed by direct evaluation, which
    keeps the test robust to eigenvalues that merely drift near the
    imaginary axis.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    C = np.asarray(C, dtype=float).reshape(-1, n)
    D = np.zeros((C.shape[0], B.shape[1])) if D is None else np.atleast_2d(np.asarray(D, float))
    _check_hurwitz(A)
    sv = lambda w: freq_response(A, B, C, D, [w])[0]  # noqa: E731
    poles = np.abs(np.linalg.eigvals(A))
    probe = np.concatenate([[0.0], poles, np.abs(np.linalg.eigvals(A).imag)])
    lo = max(np.linalg.svd(D, compute_uv=False)[0], max(sv(w) for w in probe))
    if lo == 0.0:
        return 0.0
    hi = 2.0 * lo
    for _ in range(200):
        freqs = _imag_frequencies(A, B, C, D, hi)
        if freqs.size == 0:
            break
        lo = max(lo, max(sv(w) for w in freqs))
        hi = 2.0 * max(hi, lo)
    else:  # pragma: no cover
        raise RuntimeError("could not bracket the H-infinity norm")
    while hi - lo > rtol * lo:
        mid = 0.5 * (lo + hi)
        freqs = _imag_frequencies(A, B, C, D, mid)
        peak = max((sv(w) for w in freqs), default=0.0)
        if peak >= mid * (1 - 1e-12):
            lo = max(mid, peak)
        else:
            hi = mid
    return float(0.5 * (lo + hi))


def system_norm(A, B, C, kind: str) -> float:
    if kind == "h2":
        return h2_norm(A, B, C)
    if kind == "hinf":
        return hinf_norm(A, B, C)
    raise ValueError(f"unknown norm {kind!r}")


@dataclass
class CertificationRow:
    kind: str  # "vertex" or "sample"
    index: int
    rho: np.ndarray
    max_real_eig: float
    norm: float
    hurwitz: bool
    norm_ok: bool

    @property
    def ok(self) -> bool:
        return self.hurwitz and self.norm_ok


@dataclass
class CertificationReport:
    """Frozen-parameter checks of a design; never raises on a failed check."""

    norm: str
    gamma: float
    rows: list = field(default_factory=list)
    lmi_residuals: dict = field(default_factory=dict)
    rel_tol: float = 1e-4
    note: str = ("frozen-parameter checks: each rho is held fixed; the time-varying "
                 "guarantee rests on the shared quadratic certificate (lmi_residuals)")

    @property
    def passed(self) -> bool:
        return bool(self.rows) and all(r.ok for r in self.rows)

    @property
    def hurwitz_ok(self) -> bool:
        return all(r.hurwitz for r in self.rows)

    @property
    def worst_norm(self) -> float:
        return max((r.norm for r in self.rows), default=float("nan"))

    @property
    def margin(self) -> float:
        """Relative slack ``1 - worst_norm / gamma``; negative means violated."""
        return 1.0 - self.worst_norm / self.gamma

    def failures(self) -> list:
        return [r for r in self.rows if not r.ok]

    def summary(self) -> str:
        lines = [f"{self.note}",
                 f"norm={self.norm} gamma={self.gamma:.6g} worst={self.worst_norm:.6g} "
                 f"margin={self.margin:.3e} passed={self.passed}"]
        for r in self.failures():
            what = "not Hurwitz" if not r.hurwitz else "norm bound exceeded"
            lines.append(f"  FAIL {r.kind} {r.index}: {what} "
                         f"(max Re eig {r.max_real_eig:.3e}, norm {r.norm:.6g})")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "norm": self.norm, "gamma": self.gamma, "passed": self.passed,
            "hurwitz_ok": self.hurwitz_ok, "worst_norm": self.worst_norm,
            "margin": self.margin, "note": self.note,
            "lmi_residuals": dict(self.lmi_residuals),
            "rows": [{"kind": r.kind, "index": r.index, "rho": list(map(float, r.rho)),
                      "max_real_eig": r.max_real_eig, "norm": r.norm,
                      "hurwitz": r.hurwitz, "norm_ok": r.norm_ok} for r in self.rows],
        }


def certify(result, plant: LpvPlant, rho_samples=(), rel_tol: float = 1e-4,
            include_vertices: bool = True) -> CertificationReport:
    """Check Hurwitz stability and the frozen-parameter norm bound of a design.

    ``result`` needs ``L``, ``noise_scale`` (the ``S_n`` diagonal),
    ``gamma`` and ``norm`` attributes, as on
    :class:`lpvp.synthesis.SynthesisResult`.
    """
    gamma = float(result.gamma)
    report = CertificationReport(result.norm, gamma, rel_tol=rel_tol,
                                 lmi_residuals=dict(getattr(result, "residuals", {}) or {}))
    if result.L is None:
        return report
    err = closed_loop(plant, result.L, np.diag(result.noise_scale))
    points = []
    if include_vertices:
        vs = getattr(result, "vertex_set", None)
        vs = vertices(plant.box) if vs is None else vs
        points += [("vertex", i, np.asarray(v, float)) for i, v in enumerate(vs)]
    points += [("sample", i, np.asarray(r, float)) for i, r in enumerate(rho_samples)]
    for kind, i, rho in points:
        A = eval_affine(err.A_cl, rho)
        mre = float(np.max(np.linalg.eigvals(A).real))
        if mre < 0:
            B = eval_affine(err.B_w, rho)
            C = eval_affine(err.C_z, rho)
            val = system_norm(A, B, C, result.norm)
        else:
            val = float("inf")
        report.rows.append(CertificationRow(kind, i, rho, mre, val, mre < 0,
                                            val <= gamma * (1 + rel_tol)))
    return report
