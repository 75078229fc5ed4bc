"""Block LMI assembly and vectorization to a standard-form SDP.

Decision variables are matrices packed into one flat vector ``x`` in
declaration order. Symmetric variables use row-major upper-triangular
packing: ``(0,0), (0,1), ..., (0,n-1), (1,1), ..., (n-1,n-1)``.
Rectangular variables are packed row-major; diagonal variables store
their diagonal.

Every PSD constraint of the resulting :class:`SdpProblem` reads

    G0 + sum_k x[k] * G[k]  <=  -margin * I     (in the Loewner order)

with ``margin = eps`` for strict inequalities and ``0`` otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from numbers import Real

import numpy as np

SYMMETRIC = "symmetric"
RECTANGULAR = "rectangular"
DIAGONAL = "diagonal"
SCALAR = "scalar"

NEG = "neg"  # block < 0
POS = "pos"  # block > 0


class LmiError(ValueError):
    """Malformed LMI data (shapes, unknown variables, bad options)."""


@dataclass(frozen=True)
class MatrixVar:
    """A matrix-valued decision variable occupying ``x[offset:offset+dim]``."""

    name: str
    kind: str
    shape: tuple
    offset: int
    dim: int

    __array_ufunc__ = None  # make numpy defer to our reflected operators

    def basis(self) -> np.ndarray:
        """Matrices ``E_k`` with ``M = sum_k x[offset+k] * E_k``; shape ``(dim, r, c)``."""
        r, c = self.shape
        out = np.zeros((self.dim, r, c))
        if self.kind == SYMMETRIC:
            k = 0
            for i in range(r):
                for j in range(i, r):
                    out[k, i, j] = out[k, j, i] = 1.0
                    k += 1
        elif self.kind == RECTANGULAR:
            for k in range(self.dim):
                out[k, k // c, k % c] = 1.0
        elif self.kind == DIAGONAL:
            for k in range(self.dim):
                out[k, k, k] = 1.0
        else:
            out[0, 0, 0] = 1.0
        return out

    def expr(self) -> "Expr":
        return Expr(np.zeros(self.shape), {self.name: (self, self.basis())})

    # arithmetic delegates to Expr
    def __matmul__(self, other):
        return self.expr() @ other

    def __rmatmul__(self, other):
        return other @ self.expr()

    def __add__(self, other):
        return self.expr() + other

    __radd__ = __add__

    def __sub__(self, other):
        return self.expr() - other

    def __rsub__(self, other):
        return (-self.expr()) + other

    def __neg__(self):
        return -self.expr()

    def __mul__(self, s):
        return self.expr() * s

    __rmul__ = __mul__

    @property
    def T(self):
        return self.expr().T


def pack(var: MatrixVar, M) -> np.ndarray:
    """Inverse of :func:`extract` for a single variable."""
    M = np.asarray(M, dtype=float).reshape(var.shape)
    if var.kind == SYMMETRIC:
        return M[np.triu_indices(var.shape[0])].copy()
    if var.kind == DIAGONAL:
        return np.diag(M).copy()
    return M.ravel().copy()


def extract(x, var: MatrixVar) -> np.ndarray:
    """Reshape the slice of ``x`` belonging to ``var`` back into a matrix."""
    x = np.asarray(x, dtype=float)
    if var.offset + var.dim > x.shape[0]:
        raise LmiError(f"variable {var.name!r} is not part of this solution vector")
    v = x[var.offset:var.offset + var.dim]
    if var.kind == SYMMETRIC:
        n = var.shape[0]
        M = np.zeros((n, n))
        M[np.triu_indices(n)] = v
        return M + np.triu(M, 1).T
    if var.kind == DIAGONAL:
        return np.diag(v)
    return v.reshape(var.shape).copy()


class Expr:
    """Affine matrix expression ``C + sum_v sum_k x_v[k] * F_v[k]``."""

    __slots__ = ("const", "coefs")
    __array_ufunc__ = None

    def __init__(self, const, coefs=None):
        self.const = np.atleast_2d(np.asarray(const, dtype=float))
        self.coefs = dict(coefs or {})

    @property
    def shape(self):
        return self.const.shape

    @classmethod
    def lift(cls, other) -> "Expr":
        if isinstance(other, Expr):
            return other
        if isinstance(other, MatrixVar):
            return other.expr()
        return cls(other)

    def _merge(self, other, sign):
        other = Expr.lift(other)
        if other.shape != self.shape:
            raise LmiError(f"shape mismatch: {self.shape} vs {other.shape}")
        coefs = dict(self.coefs)
        for name, (var, F) in other.coefs.items():
            if name in coefs:
                if coefs[name][0] != var:
                    raise LmiError(f"two different variables named {name!r}")
                coefs[name] = (var, coefs[name][1] + sign * F)
            else:
                coefs[name] = (var, sign * F)
        return Expr(self.const + sign * other.const, coefs)

    def __add__(self, other):
        return self._merge(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self._merge(other, -1.0)

    def __rsub__(self, other):
        return (-self)._merge(other, 1.0)

    def __neg__(self):
        return self * -1.0

    def __mul__(self, s):
        if not isinstance(s, Real):
            raise LmiError("only scalar multiplication is supported; use @")
        return Expr(self.const * s, {k: (v, F * s) for k, (v, F) in self.coefs.items()})

    __rmul__ = __mul__

    def __matmul__(self, m):
        if isinstance(m, (Expr, MatrixVar)):
            raise LmiError("product of two decision variables is not affine")
        m = np.atleast_2d(np.asarray(m, dtype=float))
        if m.shape[0] != self.shape[1]:
            raise LmiError(f"cannot multiply {self.shape} by {m.shape}")
        return Expr(self.const @ m, {k: (v, F @ m) for k, (v, F) in self.coefs.items()})

    def __rmatmul__(self, m):
        m = np.atleast_2d(np.asarray(m, dtype=float))
        if m.shape[1] != self.shape[0]:
            raise LmiError(f"cannot multiply {m.shape} by {self.shape}")
        return Expr(m @ self.const, {k: (v, m @ F) for k, (v, F) in self.coefs.items()})

    @property
    def T(self):
        return Expr(self.const.T, {k: (v, F.swapaxes(1, 2)) for k, (v, F) in self.coefs.items()})

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = self.const.copy()
        for var, F in self.coefs.values():
            out += np.tensordot(x[var.offset:var.offset + var.dim], F, axes=1)
        return out

    def is_symmetric(self) -> bool:
        if self.shape[0] != self.shape[1]:
            return False
        if not np.array_equal(self.const, self.const.T):
            return False
        return all(np.array_equal(F, F.swapaxes(1, 2)) for _, F in self.coefs.values())


def trace(e) -> Expr:
    """Trace of a square expression as a 1x1 expression."""
    e = Expr.lift(e)
    if e.shape[0] != e.shape[1]:
        raise LmiError("trace of a non-square expression")
    return Expr([[np.trace(e.const)]],
                {k: (v, np.trace(F, axis1=1, axis2=2)[:, None, None]) for k, (v, F) in e.coefs.items()})


def scaled(var: MatrixVar, M) -> Expr:
    """``var * M`` for a scalar variable and a constant matrix ``M``."""
    if var.kind != SCALAR:
        raise LmiError("scaled() needs a scalar variable")
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return Expr(np.zeros(M.shape), {var.name: (var, M[None].copy())})


def sym(e) -> Expr:
    """``e + e^T``."""
    e = Expr.lift(e)
    return e + e.T


def _grid_shapes(grid):
    nb = len(grid)
    if any(len(row) != nb for row in grid):
        raise LmiError("block grid must be square")
    sizes = [None] * nb
    for i in range(nb):
        for j in range(nb):
            item = grid[i][j]
            if item is None or (isinstance(item, Real) and item == 0):
                continue
            e = Expr.lift(item)
            r, c = e.shape
            for idx, s in ((i, r), (j, c)):
                if sizes[idx] is None:
                    sizes[idx] = s
                elif sizes[idx] != s:
                    raise LmiError(f"inconsistent size for block row/col {idx}")
    if any(s is None for s in sizes):
        raise LmiError("cannot infer size of an all-empty block row")
    return sizes


def bmat(grid) -> Expr:
    """Assemble a block expression; ``None`` or ``0`` entries are zero blocks."""
    sizes = _grid_shapes(grid)
    starts = np.concatenate([[0], np.cumsum(sizes)])
    n_r = n_c = int(starts[-1])
    const = np.zeros((n_r, n_c))
    coefs = {}
    for i, row in enumerate(grid):
        for j, item in enumerate(row):
            if item is None or (isinstance(item, Real) and item == 0):
                continue
            e = Expr.lift(item)
            rs, cs = slice(starts[i], starts[i + 1]), slice(starts[j], starts[j + 1])
            const[rs, cs] = e.const
            for name, (var, F) in e.coefs.items():
                if name not in coefs:
                    coefs[name] = (var, np.zeros((var.dim, n_r, n_c)))
                coefs[name][1][:, rs, cs] += F
    return Expr(const, coefs)


@dataclass(frozen=True)
class LmiBlock:
    """A symmetric affine matrix constrained to be negative or positive definite."""

    name: str
    expr: Expr
    sense: str = NEG
    strict: bool = True

    @property
    def size(self) -> int:
        return self.expr.shape[0]

    def value(self, x) -> np.ndarray:
        return self.expr.value(x)


def assemble_block(terms, sense: str = NEG, strict: bool = True, name: str = "") -> LmiBlock:
    """Build a symmetric LMI block.

    ``terms`` is either a square grid of blocks or a list of affine terms
    that are summed. In a grid, entries strictly below the diagonal may be
    ``None``; they are filled with the transpose of their mirror. A list of
    terms is summed and each asymmetric term is paired with its transpose
    unless the sum is already symmetric.
    """
    if sense not in (NEG, POS):
        raise LmiError(f"sense must be {NEG!r} or {POS!r}")
    if isinstance(terms, (list, tuple)) and terms and isinstance(terms[0], (list, tuple)):
        grid = [list(row) for row in terms]
        nb = len(grid)
        for i in range(nb):
            for j in range(i):
                if grid[i][j] is not None:
                    raise LmiError("give only the upper block triangle; lower is filled in")
                up = grid[j][i]
                grid[i][j] = None if up is None else Expr.lift(up).T
        expr = bmat(grid)
    elif isinstance(terms, (list, tuple)):
        if not terms:
            raise LmiError("empty term list")
        expr = Expr.lift(terms[0])
        for t in terms[1:]:
            expr = expr + t
    else:
        expr = Expr.lift(terms)
    if expr.shape[0] != expr.shape[1]:
        raise LmiError(f"LMI block must be square, got {expr.shape}")
    if not expr.is_symmetric():
        # pair each asymmetric contribution with its transpose
        expr = (expr + expr.T) * 0.5
    return LmiBlock(name, expr, sense, strict)


@dataclass
class PsdConstraint:
    """``G0 + sum_k x[k] G[k] <= -margin I``; ``G`` has shape ``(n_vars, n, n)``."""

    name: str
    G0: np.ndarray
    G: np.ndarray
    margin: float

    @property
    def size(self) -> int:
        return self.G0.shape[0]

    def value(self, x) -> np.ndarray:
        return self.G0 + np.tensordot(np.asarray(x, dtype=float), self.G, axes=1)

    def max_eig(self, x) -> float:
        return float(np.linalg.eigvalsh(self.value(x))[-1])


@dataclass
class SdpProblem:
    """Solver-neutral SDP: minimize ``objective @ x`` subject to

    * every :class:`PsdConstraint`,
    * ``x[i] >= lower_bound`` for ``i in nonneg_indices``,
    * ``row @ x <= bound`` for each ``(row, bound)`` in ``linear_constraints``.
    """

    n_vars: int
    objective: np.ndarray
    psd_blocks: list
    nonneg_indices: np.ndarray
    linear_constraints: list
    strictness_epsilon: float
    lower_bound: float = 0.0
    variables: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.strictness_epsilon > 0:
            raise LmiError("strictness_epsilon must be positive")

    def violations(self, x) -> dict:
        """Worst constraint residuals at ``x`` (positive means violated)."""
        x = np.asarray(x, dtype=float)
        out = {"psd": -np.inf, "nonneg": -np.inf, "linear": -np.inf}
        for blk in self.psd_blocks:
            out["psd"] = max(out["psd"], blk.max_eig(x) + blk.margin)
        if len(self.nonneg_indices):
            out["nonneg"] = float(np.max(self.lower_bound - x[self.nonneg_indices]))
        for row, bound in self.linear_constraints:
            out["linear"] = max(out["linear"], float(row @ x - bound))
        return out


class LmiProgram:
    """Collects decision variables and LMI blocks, then vectorizes them."""

    def __init__(self):
        self.variables: dict[str, MatrixVar] = {}
        self.blocks: list[LmiBlock] = []
        self.linear: list[tuple[Expr, float]] = []
        self.n_vars = 0

    def _declare(self, name, kind, shape, dim) -> MatrixVar:
        if name in self.variables:
            raise LmiError(f"variable {name!r} already declared")
        var = MatrixVar(name, kind, tuple(shape), self.n_vars, dim)
        self.variables[name] = var
        self.n_vars += dim
        return var

    def declare_var(self, name: str, kind: str, *dims: int) -> MatrixVar:
        """Declare ``symmetric(n)``, ``rectangular(r, c)``, ``diagonal(n)`` or ``scalar``."""
        if kind == SYMMETRIC:
            (n,) = dims
            return self._declare(name, kind, (n, n), n * (n + 1) // 2)
        if kind == RECTANGULAR:
            r, c = dims
            return self._declare(name, kind, (r, c), r * c)
        if kind == DIAGONAL:
            (n,) = dims
            return self._declare(name, kind, (n, n), n)
        if kind == SCALAR:
            return self._declare(name, kind, (1, 1), 1)
        raise LmiError(f"unknown variable kind {kind!r}")

    def symmetric(self, name, n):
        return self.declare_var(name, SYMMETRIC, n)

    def rectangular(self, name, r, c):
        return self.declare_var(name, RECTANGULAR, r, c)

    def diagonal(self, name, n):
        return self.declare_var(name, DIAGONAL, n)

    def scalar(self, name):
        return self.declare_var(name, SCALAR)

    def add(self, block: LmiBlock) -> LmiBlock:
        for name, (var, _) in block.expr.coefs.items():
            if self.variables.get(name) != var:
                raise LmiError(f"block {block.name!r} uses undeclared variable {name!r}")
        self.blocks.append(block)
        return block

    def add_lmi(self, terms, sense=NEG, strict=True, name="") -> LmiBlock:
        return self.add(assemble_block(terms, sense, strict, name or f"lmi{len(self.blocks)}"))

    def add_linear(self, expr, bound: float):
        """Scalar constraint ``expr <= bound`` (``expr`` must be 1x1)."""
        expr = Expr.lift(expr)
        if expr.shape != (1, 1):
            raise LmiError("linear constraint must be scalar")
        self.linear.append((expr, float(bound)))

    def _flat(self, expr: Expr) -> tuple[np.ndarray, np.ndarray]:
        """Constant and slopes of ``expr`` against the full decision vector."""
        r, c = expr.shape
        G = np.zeros((self.n_vars, r, c))
        for name, (var, F) in expr.coefs.items():
            if self.variables.get(name) != var:
                raise LmiError(f"undeclared variable {name!r}")
            G[var.offset:var.offset + var.dim] = F
        return expr.const.copy(), G

    def vectorize(self, objective=None, eps: float = 1e-8, positive=None) -> SdpProblem:
        """Emit the standard-form problem.

        Parameters
        ----------
        objective : Expr, NormObjective or None
            A 1x1 affine expression to minimize, or a norm objective.
            ``None`` gives a feasibility problem.
        eps : float
            Strictness margin for strict blocks and the lower bound for
            entries listed in ``positive``.
        positive : iterable of MatrixVar
            Variables whose entries are constrained ``>= eps`` (e.g. the
            diagonal precision variable).
        """
        if not eps > 0:
            raise LmiError("eps must be positive")
        nonneg = []
        for var in positive or ():
            if self.variables.get(var.name) != var:
                raise LmiError(f"undeclared variable {var.name!r}")
            nonneg.extend(range(var.offset, var.offset + var.dim))
        if isinstance(objective, NormObjective):
            objective = objective.install(self)
        c = np.zeros(self.n_vars)
        if objective is not None:
            obj = Expr.lift(objective)
            if obj.shape != (1, 1):
                raise LmiError("objective must be scalar")
            c = self._flat(obj)[1][:, 0, 0]
        psd = []
        for blk in self.blocks:
            G0, G = self._flat(blk.expr)
            if blk.sense == POS:
                G0, G = -G0, -G
            psd.append(PsdConstraint(blk.name, G0, G, eps if blk.strict else 0.0))
        lin = []
        for expr, bound in self.linear:
            k0, G = self._flat(expr)
            lin.append((G[:, 0, 0].copy(), bound - k0[0, 0]))
        return SdpProblem(self.n_vars, c, psd, np.array(sorted(set(nonneg)), dtype=int),
                          lin, eps, eps, dict(self.variables))


@dataclass(frozen=True)
class NormObjective:
    """``||diag(var)||_p`` for a diagonal variable, with p in {1, 2, inf}.

    p=1 sums the entries (they are kept nonnegative). p=inf adds an
    auxiliary ``t`` with ``var_i <= t``; p=2 adds ``t`` and the arrow LMI
    ``[[t I, v], [v^T, t]] >= 0``.
    """

    var: MatrixVar
    p: float = 1

    def install(self, prog: LmiProgram) -> Expr:
        n = self.var.dim
        ones = np.ones((1, n))
        if self.p == 1:
            return _diag_vector(self.var, prog).T @ ones.T
        t = prog.scalar(f"_t_{self.var.name}")
        v = _diag_vector(self.var, prog)
        if self.p == np.inf:
            for i in range(n):
                e = np.zeros((1, n))
                e[0, i] = 1.0
                prog.add_linear(e @ v - t, 0.0)
            return t.expr()
        if self.p == 2:
            tI = scaled(t, np.eye(n))
            prog.add_lmi([[tI, v], [None, t]], sense=POS, strict=False, name=f"_soc_{self.var.name}")
            return t.expr()
        raise LmiError(f"unsupported norm order {self.p!r}")


def _diag_vector(var: MatrixVar, prog: LmiProgram) -> Expr:
    """Column vector of the free entries of a diagonal variable."""
    if var.kind != DIAGONAL:
        raise LmiError("norm objective needs a diagonal variable")
    F = np.zeros((var.dim, var.dim, 1))
    F[np.arange(var.dim), np.arange(var.dim), 0] = 1.0
    return Expr(np.zeros((var.dim, 1)), {var.name: (var, F)})
