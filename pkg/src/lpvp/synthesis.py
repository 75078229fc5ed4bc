"""Joint synthesis of the observer gain and minimum sensing precision.

For every vertex ``rho_v`` of the parameter box, with shared ``X > 0``,
``Y``, ``beta`` (and ``Q`` for H2):

H2::

    [[M11, M12, Y], [M12^T, -I, 0], [Y^T, 0, -diag(beta)]] < 0
    [[-Q, C_z], [C_z^T, -X]] < 0,   trace(Q) < gamma^2

H-infinity::

    [[M11, M12, C_z^T, Y], [M12^T, -gamma^2 I, 0, 0],
     [C_z, 0, -I, 0], [Y^T, 0, 0, -gamma^2 diag(beta)]] < 0

with ``M11 = sym(X A + Y C_y)``, ``M12 = X B_d S_d + Y D_d S_d`` and the
gain recovered as ``L = X^-1 Y``. The objective is ``||beta||_p``.

Precision mapping. Undoing the Schur step shows that ``diag(beta)``
stands in for ``(S_n S_n^T)^-1``, so the noise amplitude the design
tolerates on channel ``i`` is ``1/sqrt(beta_i)`` and the precision
(inverse noise amplitude) is ``kappa_i = sqrt(beta_i)`` for both norms.
Other mappings are kept selectable so the certification oracle can be
run against them.

Two-stage solve. The minimum of ``||beta||_p`` need not be attained: on
plants where the disturbance enters away from the measured states the
H-infinity infimum is approached only as ``X -> 0``, i.e. with an
unbounded observer gain, and the solver stalls near that boundary. The
first stage solves the problem as stated and yields the optimal value
``J*`` and the channel pattern. The second stage drops the unused
channels (their gain columns become exactly zero) and, among designs with
``||beta||_p <= (1 + slack) J*``, picks the one maximizing
``lambda_min(X)``. The returned design is therefore within ``slack`` of
optimal and well conditioned. ``polish=False`` returns the first stage.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .lmi import NEG, POS, LmiProgram, NormObjective, extract, scaled, sym, trace
from .lpv import LpvPlant, eval_affine, vertices
from .sdp import INFEASIBLE, NUMERICAL_FAILURE, OPTIMAL, solve

log = logging.getLogger(__name__)

H2 = "h2"
HINF = "hinf"
NORMS = (H2, HINF)
SPARSITY_THRESHOLD = 1e-6
# channels below this fraction of max(beta) after the first stage are dropped
DETECT_THRESHOLD = 1e-3
X_SCALE_CAP = 1e6

KAPPA_POLICIES = {
    "sqrt": lambda beta, gamma: np.sqrt(beta),
    "sqrt_over_gamma": lambda beta, gamma: np.sqrt(beta / gamma),
    "inverse_sqrt": lambda beta, gamma: 1.0 / np.sqrt(beta),
}
# "inverse": S_n = diag(1/kappa) (kappa is a precision); "direct": S_n = diag(kappa)
NOISE_ORIENTATIONS = ("inverse", "direct")
DEFAULT_POLICY = ("sqrt", "inverse")


def kappa_from_beta(beta, gamma, policy: str = DEFAULT_POLICY[0]) -> np.ndarray:
    try:
        fn = KAPPA_POLICIES[policy]
    except KeyError:
        raise ValueError(f"unknown kappa policy {policy!r}") from None
    return fn(np.asarray(beta, dtype=float), float(gamma))


def noise_scale_from_kappa(kappa, orientation: str = DEFAULT_POLICY[1]) -> np.ndarray:
    """Diagonal of ``S_n`` implied by ``kappa``."""
    kappa = np.asarray(kappa, dtype=float)
    if orientation == "inverse":
        with np.errstate(divide="ignore"):
            return 1.0 / kappa
    if orientation == "direct":
        return kappa.copy()
    raise ValueError(f"unknown noise orientation {orientation!r}")


def parse_norm(norm) -> str:
    key = str(norm).lower().replace("-", "").replace("_", "").replace("∞", "inf")
    out = {"h2": H2, "hinf": HINF, "hinfinity": HINF}.get(key)
    if out is None:
        raise ValueError(f"norm must be one of {NORMS}, got {norm!r}")
    return out


def parse_p(p) -> float:
    if isinstance(p, str):
        p = p.strip().lower()
        if p in ("inf", "infinity", "oo", "∞"):
            return math.inf
        p = float(p)
    if p in (1, 2, math.inf):
        return float(p)
    raise ValueError(f"p must be 1, 2 or inf, got {p!r}")


@dataclass(frozen=True)
class SynthesisRequest:
    """Inputs of one synthesis run.

    Parameters
    ----------
    plant : LpvPlant
    norm : {"h2", "hinf"}
    gamma : float
        Performance bound on the disturbance/noise-to-error norm.
    p : {1, 2, inf}
        Order of the precision cost ``||beta||_p``.
    eps : float
        Strictness margin: ``< 0`` is imposed as ``<= -eps I``.
    vertex_set : sequence of arrays, optional
        Points at which the LMIs are enforced; the box vertices by default.
    beta_max : float, optional
        Cap on every entry of ``beta`` (best sensor available).
    active : sequence of bool, optional
        Channels allowed to carry observer gain; the others get
        identically zero columns in ``L``.
    polish : bool
        Run the second (conditioning) stage.
    polish_slack : float
        Relative cost increase the second stage may spend.
    """

    plant: LpvPlant
    norm: str
    gamma: float
    p: float = 1
    eps: float = 1e-8
    vertex_set: tuple | None = None
    beta_max: float | None = None
    active: tuple | None = None
    backend: str = "clarabel"
    kappa_policy: tuple = DEFAULT_POLICY
    polish: bool = True
    polish_slack: float = 0.02

    def __post_init__(self):
        object.__setattr__(self, "norm", parse_norm(self.norm))
        g = self.gamma
        if isinstance(g, bool) or not isinstance(g, (int, float)) or not (g > 0 and math.isfinite(g)):
            raise ValueError(f"gamma must be positive and finite (got {g!r})")
        object.__setattr__(self, "gamma", float(g))
        object.__setattr__(self, "p", parse_p(self.p))
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        vs = vertices(self.plant.box) if self.vertex_set is None else self.vertex_set
        vs = tuple(np.asarray(v, dtype=float) for v in vs)
        if not vs:
            raise ValueError("vertex_set must not be empty")
        if any(v.shape != (self.plant.n_rho,) for v in vs):
            raise ValueError(f"vertices must have {self.plant.n_rho} entries")
        object.__setattr__(self, "vertex_set", vs)
        if self.active is not None:
            act = tuple(bool(a) for a in self.active)
            if len(act) != self.plant.n_y:
                raise ValueError("active mask length must equal the number of outputs")
            if not any(act):
                raise ValueError("at least one channel must be active")
            object.__setattr__(self, "active", act)
        if self.beta_max is not None and not self.beta_max > 0:
            raise ValueError("beta_max must be positive")
        kp, orient = self.kappa_policy
        if kp not in KAPPA_POLICIES or orient not in NOISE_ORIENTATIONS:
            raise ValueError(f"unknown kappa policy {self.kappa_policy!r}")
        if not self.polish_slack > 0:
            raise ValueError("polish_slack must be positive")

    @property
    def mask(self) -> np.ndarray:
        return np.ones(self.plant.n_y, bool) if self.active is None else np.array(self.active)

    def floor(self) -> float:
        """Smallest ``beta`` entry compatible with a strict diagonal entry."""
        scale = 1.0 if self.norm == H2 else self.gamma ** 2
        return max(self.eps, self.eps / scale)


@dataclass
class SynthesisResult:
    norm: str
    gamma: float
    status: str
    p: float
    eps: float
    L: np.ndarray | None = None
    X: np.ndarray | None = None
    Y: np.ndarray | None = None
    Q: np.ndarray | None = None
    beta: np.ndarray | None = None
    kappa: np.ndarray | None = None
    noise_scale: np.ndarray | None = None
    objective_value: float = float("nan")
    optimal_value: float = float("nan")
    residuals: dict = field(default_factory=dict)
    vertex_set: tuple | None = None
    active: tuple | None = None
    kappa_policy: tuple = DEFAULT_POLICY
    margin: float = float("nan")
    polished: bool = False
    backend: str = ""
    solver_status: str = ""
    channel_names: tuple = ()
    advisory_gamma: float | None = None

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL

    def active_channels(self, threshold: float = SPARSITY_THRESHOLD) -> np.ndarray:
        """Boolean mask of channels whose ``beta`` exceeds ``threshold * max(beta)``."""
        if self.beta is None:
            return np.zeros(0, dtype=bool)
        return self.beta > threshold * np.max(self.beta)

    def beta_norm(self) -> float:
        return float(np.linalg.norm(self.beta, ord=self.p)) if self.beta is not None else math.nan

    def max_residual(self) -> float:
        return max(self.residuals.values(), default=math.nan)


def theorem_blocks(plant: LpvPlant, norm: str, gamma: float, X, Y, beta, rho, Q=None) -> dict:
    """Numeric LMI blocks of the theorems at one ``rho`` (``< 0`` orientation).

    Assembled with plain numpy, independently of :mod:`lpvp.lmi`.
    """
    norm = parse_norm(norm)
    A = eval_affine(plant.A, rho)
    C = eval_affine(plant.C_y, rho)
    Bs = eval_affine(plant.B_d, rho) @ plant.S_d
    Ds = eval_affine(plant.D_d, rho) @ plant.S_d
    Cz = eval_affine(plant.C_z, rho)
    n_d, n_y, n_z = plant.n_d, plant.n_y, plant.n_z
    XA = X @ A + Y @ C
    M11 = XA + XA.T
    M12 = X @ Bs + Y @ Ds
    B = np.diag(beta)
    if norm == H2:
        main = np.block([[M11, M12, Y],
                         [M12.T, -np.eye(n_d), np.zeros((n_d, n_y))],
                         [Y.T, np.zeros((n_y, n_d)), -B]])
        out = {"main": main}
        if Q is not None:
            out["output"] = np.block([[-Q, Cz], [Cz.T, -X]])
        return out
    g2 = gamma ** 2
    Z = np.zeros
    main = np.block([[M11, M12, Cz.T, Y],
                     [M12.T, -g2 * np.eye(n_d), Z((n_d, n_z)), Z((n_d, n_y))],
                     [Cz, Z((n_z, n_d)), -np.eye(n_z), Z((n_z, n_y))],
                     [Y.T, Z((n_y, n_d)), Z((n_y, n_z)), -g2 * B]])
    return {"main": main}


def certificate_residuals(plant: LpvPlant, res: SynthesisResult, vertex_set=None) -> dict:
    """Largest eigenvalue of every strict condition at every vertex.

    Keys are ``"vertex{k}"`` / ``"output{k}"`` for the per-vertex blocks,
    ``"X_pos"``, ``"Q_pos"`` and ``"trace"`` (``trace(Q) - gamma^2``).
    All should be ``<= -eps/2`` for a certified design.
    """
    vs = res.vertex_set if vertex_set is None else vertex_set
    out = {}
    for k, rho in enumerate(vs):
        for name, M in theorem_blocks(plant, res.norm, res.gamma, res.X, res.Y, res.beta,
                                      rho, res.Q).items():
            key = f"vertex{k}" if name == "main" else f"output{k}"
            out[key] = float(np.linalg.eigvalsh(0.5 * (M + M.T))[-1])
    out["X_pos"] = float(-np.linalg.eigvalsh(res.X)[0])
    if res.Q is not None:
        out["Q_pos"] = float(-np.linalg.eigvalsh(res.Q)[0])
        out["trace"] = float(np.trace(res.Q) - res.gamma ** 2)
    return out


def _build(req: SynthesisRequest, mask, margin, budget=None):
    """LMI program over the channels in ``mask``.

    Without ``budget`` the objective is ``||beta||_p``; with it, the cost
    is capped at ``budget`` and ``lambda_min(X)`` is maximized.

    Both blocks are posed in ``gamma^2 beta`` after the congruence that
    divides the disturbance row by ``gamma``, so every constant diagonal
    block is ``-I``. For H2 the variables are also ``gamma^2 X``,
    ``gamma^2 Y`` and ``Q / gamma^2``, which makes the trace bound 1. The
    feasible set is unchanged and small ``gamma`` stays well scaled.
    """
    plant = req.plant
    n_x, n_d, n_z = plant.n_x, plant.n_d, plant.n_z
    n_a = int(mask.sum())
    prog = LmiProgram()
    X = prog.symmetric("X", n_x)
    Y = prog.rectangular("Y", n_x, n_a)
    beta = prog.diagonal("beta", n_a)
    Q = prog.symmetric("Q", n_z) if req.norm == H2 else None
    g2 = req.gamma ** 2
    # beta variable = unit * beta, X variable = xs * X
    unit = g2
    xs = g2 if req.norm == H2 else 1.0
    cz_const = not plant.C_z.basis
    for k, rho in enumerate(req.vertex_set):
        A = eval_affine(plant.A, rho)
        C = eval_affine(plant.C_y, rho)[mask]
        Bs = eval_affine(plant.B_d, rho) @ plant.S_d
        Ds = (eval_affine(plant.D_d, rho) @ plant.S_d)[mask]
        Cz = eval_affine(plant.C_z, rho)
        M11 = sym(X @ A + Y @ C)
        M12 = X @ Bs + Y @ Ds
        if req.norm == H2:
            grid = [[M11, M12 * (1.0 / req.gamma), Y],
                    [None, -np.eye(n_d), None],
                    [None, None, -1.0 * beta]]
        else:
            grid = [[M11, M12 * (1.0 / req.gamma), Cz.T, Y],
                    [None, -np.eye(n_d), None, None],
                    [None, None, -np.eye(n_z), None],
                    [None, None, None, -1.0 * beta]]
        prog.add_lmi(grid, NEG, True, f"vertex{k}")
        if Q is not None and (k == 0 or not cz_const):
            prog.add_lmi([[-1.0 * Q, Cz], [None, -1.0 * X]], NEG, True, f"output{k}")
    prog.add_lmi([X.expr()], POS, True, "X_pos")
    if Q is not None:
        prog.add_lmi([Q.expr()], POS, True, "Q_pos")
        prog.add_linear(trace(Q), 1.0 - margin / g2)
    for i in range(n_a):
        e = np.zeros((1, n_a))
        e[0, i] = 1.0
        if req.beta_max is not None:
            prog.add_linear(e @ beta @ e.T, unit * req.beta_max)
        if unit > 1.0:
            # keep beta itself >= eps
            prog.add_linear(-1.0 * (e @ beta @ e.T), -unit * req.eps)
    if budget is None:
        objective = NormObjective(beta, req.p)
    else:
        cost = NormObjective(beta, req.p).install(prog)
        prog.add_linear(cost, unit * budget)
        s = prog.scalar("s")
        prog.add_lmi([X - scaled(s, np.eye(n_x))], POS, False, "X_floor")
        prog.add_linear(s.expr(), X_SCALE_CAP)
        objective = -1.0 * s.expr()
    problem = prog.vectorize(objective, eps=req.eps, positive=[beta])
    for blk in problem.psd_blocks:
        if blk.margin > 0:
            blk.margin = margin
    return problem, {"X": X, "Y": Y, "beta": beta, "Q": Q, "unit": unit, "xs": xs}


def _assemble(req: SynthesisRequest, mask, var, x) -> SynthesisResult:
    plant = req.plant
    X = extract(x, var["X"]) / var["xs"]
    Y = np.zeros((plant.n_x, plant.n_y))
    Y[:, mask] = extract(x, var["Y"]) / var["xs"]
    beta = np.full(plant.n_y, req.floor())
    beta[mask] = np.diag(extract(x, var["beta"])) / var["unit"]
    kappa = kappa_from_beta(beta, req.gamma, req.kappa_policy[0])
    return SynthesisResult(
        req.norm, req.gamma, OPTIMAL, req.p, req.eps,
        L=np.linalg.solve(X, Y), X=X, Y=Y,
        Q=None if var["Q"] is None else extract(x, var["Q"]) * var["xs"],
        beta=beta, kappa=kappa,
        noise_scale=noise_scale_from_kappa(kappa, req.kappa_policy[1]),
        vertex_set=req.vertex_set, active=tuple(bool(m) for m in mask),
        kappa_policy=req.kappa_policy, backend=req.backend,
        channel_names=plant.channel_names)


def _failed(req: SynthesisRequest, status: str, raw: str = "") -> SynthesisResult:
    return SynthesisResult(req.norm, req.gamma, status, req.p, req.eps, vertex_set=req.vertex_set,
                           active=req.active, kappa_policy=req.kappa_policy, backend=req.backend,
                           solver_status=raw, channel_names=req.plant.channel_names)


def structurally_infeasible(req: SynthesisRequest, margin: float | None = None) -> bool:
    """True when ``gamma`` alone rules out strict feasibility.

    H-infinity carries a ``-gamma^2 I`` diagonal block that must sit below
    ``-margin I``; H2 needs ``trace(Q) <= gamma^2 - margin`` with
    ``Q >= margin I``.
    """
    margin = req.eps if margin is None else margin
    g2 = req.gamma ** 2
    if req.norm == HINF:
        return g2 <= margin
    return g2 - margin <= req.plant.n_z * margin


def _certified_solve(req, mask, budget=None, max_backoff=6):
    """Solve, re-check the certificate, and raise the solver margin on a miss.

    Solver round-off can leave a block a hair short of ``-eps``. When the
    re-evaluated certificate misses ``-eps/2`` the strictness margin handed
    to the solver is raised tenfold, at most ``max_backoff`` times; the
    reported ``eps`` stays the requested one.
    """
    margin = req.eps
    status, raw = NUMERICAL_FAILURE, ""
    for _ in range(max_backoff + 1):
        if structurally_infeasible(req, margin):
            status = INFEASIBLE if margin == req.eps else status
            break
        problem, var = _build(req, mask, margin, budget)
        sol = solve(problem, backend=req.backend)
        status, raw = sol.status, sol.raw_status
        if sol.status == OPTIMAL:
            res = _assemble(req, mask, var, sol.x)
            res.residuals = certificate_residuals(req.plant, res)
            if res.max_residual() <= -req.eps / 2:
                res.margin, res.solver_status = margin, raw
                return res
            log.info("certificate misses -eps/2 (worst %.3e) at margin %.1e",
                     res.max_residual(), margin)
            status = NUMERICAL_FAILURE
        elif sol.status == INFEASIBLE:
            break
        margin *= 10.0
    return _failed(req, status, raw)


def _first_stage(req: SynthesisRequest):
    """Plain solve of the theorem; returns ``(status, optimal value, beta, raw)``."""
    if structurally_infeasible(req):
        return INFEASIBLE, math.nan, None, "gamma below the strictness margin"
    mask = req.mask
    margin = req.eps
    for _ in range(4):
        problem, var = _build(req, mask, margin)
        sol = solve(problem, backend=req.backend)
        if sol.status != NUMERICAL_FAILURE:
            break
        margin *= 10.0
    if sol.status != OPTIMAL:
        return sol.status, math.nan, None, sol.raw_status
    beta = np.zeros(req.plant.n_y)
    beta[mask] = np.diag(extract(sol.x, var["beta"])) / var["unit"]
    return OPTIMAL, float(sol.objective) / var["unit"], beta, sol.raw_status


def synthesize(req: SynthesisRequest) -> SynthesisResult:
    """Solve the synthesis LMIs for ``req`` (both stages unless ``polish`` is off)."""
    if not req.polish:
        res = _certified_solve(req, req.mask)
        res.objective_value = res.optimal_value = res.beta_norm()
        return res
    status, j_opt, beta1, raw = _first_stage(req)
    if status != OPTIMAL:
        return _failed(req, status, raw)
    mask = req.mask & (beta1 > DETECT_THRESHOLD * beta1.max())
    slack = req.polish_slack
    for _ in range(3):
        res = _certified_solve(req, mask, budget=(1.0 + slack) * j_opt)
        if res.ok:
            res.polished = True
            break
        slack *= 3.0
    else:
        log.info("conditioning stage failed; returning the plain solution")
        res = _certified_solve(req, req.mask)
    res.optimal_value = j_opt
    res.objective_value = res.beta_norm()
    return res


def synth_h2(req: SynthesisRequest) -> SynthesisResult:
    if req.norm != H2:
        raise ValueError("synth_h2 needs an H2 request")
    return synthesize(req)


def synth_hinf(req: SynthesisRequest) -> SynthesisResult:
    if req.norm != HINF:
        raise ValueError("synth_hinf needs an H-infinity request")
    return synthesize(req)


def is_feasible(req: SynthesisRequest) -> bool:
    """Feasibility of the theorem LMIs at ``req.gamma`` (first stage only)."""
    return _first_stage(req)[0] == OPTIMAL


def min_feasible_gamma(req: SynthesisRequest, lo: float | None = None, hi: float | None = None,
                       iters: int = 20, expand: int = 3) -> float | None:
    """Geometric bisection for the smallest feasible ``gamma``.

    The bracket defaults to ``[req.gamma, 1e3 * req.gamma]``; an infeasible
    upper end is pushed up by ``1e3`` at most ``expand`` times. Returns the
    smallest level found feasible, or ``None`` when no upper end is.
    """
    lo = req.gamma if lo is None else float(lo)
    hi = 1e3 * req.gamma if hi is None else float(hi)
    for _ in range(expand + 1):
        if is_feasible(replace(req, gamma=hi)):
            break
        lo, hi = hi, 1e3 * hi
    else:
        return None
    if is_feasible(replace(req, gamma=lo)):
        return lo
    for _ in range(iters):
        mid = math.sqrt(lo * hi)
        if is_feasible(replace(req, gamma=mid)):
            hi = mid
        else:
            lo = mid
    return hi


def synthesize_with_advisory(req: SynthesisRequest) -> SynthesisResult:
    """Like :func:`synthesize`, attaching the smallest feasible gamma on infeasibility."""
    res = synthesize(req)
    if res.status == INFEASIBLE:
        res.advisory_gamma = min_feasible_gamma(req)
    return res


@dataclass
class SweepResult:
    gammas: list
    results: list
    monotone: bool
    violations: list = field(default_factory=list)


def sweep_gamma(plant: LpvPlant, norm: str, gammas, workers: int = 1, **kw) -> SweepResult:
    """Synthesize at each ``gamma`` (ascending) and check the optimal cost is non-increasing.

    The check uses the first-stage optimum ``J*(gamma)``, which is the
    quantity the feasible-set nesting argument applies to.
    """
    gammas = [float(g) for g in gammas]
    if not gammas:
        raise ValueError("empty gamma list")
    if any(b < a for a, b in zip(gammas, gammas[1:])):
        raise ValueError("gammas must be sorted ascending")

    def run(g):
        try:
            return synthesize(SynthesisRequest(plant, norm, g, **kw))
        except Exception as exc:  # keep sweeping past a bad level
            log.warning("synthesis at gamma=%g failed: %s", g, exc)
            return SynthesisResult(parse_norm(norm), g, NUMERICAL_FAILURE,
                                   parse_p(kw.get("p", 1)), kw.get("eps", 1e-8))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, gammas))
    else:
        results = [run(g) for g in gammas]
    violations = []
    prev = None
    for g, r in zip(gammas, results):
        if not r.ok:
            continue
        val = r.optimal_value
        # relative slack for solver tolerance
        if prev is not None and val > prev[1] * (1 + 1e-5) + 1e-8:
            violations.append((prev[0], g, prev[1], val))
        prev = (g, val)
    return SweepResult(gammas, results, not violations, violations)


@dataclass(frozen=True)
class NoiseAngle:
    from_sin_deg: float
    from_cos_deg: float

    @property
    def discrepancy_deg(self) -> float:
        return abs(self.from_sin_deg - self.from_cos_deg)


def noise_angle(kappa_sin: float, kappa_cos: float | None = None) -> NoiseAngle:
    """Allowable bearing noise from the sin/cos channel precisions, in degrees.

    ``asin(1/kappa_sin)`` and ``pi/2 - acos(1/kappa_cos)``.
    """
    kappa_cos = kappa_sin if kappa_cos is None else kappa_cos
    for k in (kappa_sin, kappa_cos):
        if not k > 0:
            raise ValueError("precision must be positive")
        if 1.0 / k > 1.0:
            raise ValueError(f"precision {k:.4g} < 1: noise exceeds the unit range of sin/cos")
    s = math.degrees(math.asin(1.0 / kappa_sin))
    c = math.degrees(math.pi / 2 - math.acos(1.0 / kappa_cos))
    return NoiseAngle(s, c)
