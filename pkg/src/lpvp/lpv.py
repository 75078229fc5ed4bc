"""Affine parameter-varying plants and the observer error system."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    """Raised when matrix dimensions are inconsistent."""


def _as_matrix(m, name="matrix") -> np.ndarray:
    a = np.array(m, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class AffineMatrixFunction:
    """Matrix-valued map ``M(rho) = M0 + sum_i rho[i] * M_i``.

    Parameters
    ----------
    constant : array_like
        The matrix ``M0``; also fixes the shape.
    basis : dict or sequence of (int, array_like)
        Parameter index to slope matrix. Indices must be unique.
    n_params : int, optional
        Declared parameter dimension. Defaults to one past the largest
        basis index.
    """

    constant: np.ndarray
    basis: tuple = ()
    n_params: int | None = None

    def __post_init__(self):
        const = _as_matrix(self.constant, "constant")
        items = self.basis.items() if isinstance(self.basis, dict) else self.basis
        terms = []
        seen = set()
        for idx, mat in items:
            idx = int(idx)
            if idx < 0:
                raise ShapeError(f"negative parameter index {idx}")
            if idx in seen:
                raise ShapeError(f"duplicate parameter index {idx}")
            seen.add(idx)
            m = _as_matrix(mat, f"basis[{idx}]")
            if m.shape != const.shape:
                raise ShapeError(
                    f"basis[{idx}] has shape {m.shape}, expected {const.shape}")
            terms.append((idx, m))
        terms.sort(key=lambda t: t[0])
        n_params = self.n_params
        if n_params is None:
            n_params = terms[-1][0] + 1 if terms else 0
        elif terms and terms[-1][0] >= n_params:
            raise ShapeError(
                f"parameter index {terms[-1][0]} outside declared dimension {n_params}")
        object.__setattr__(self, "constant", const)
        object.__setattr__(self, "basis", tuple(terms))
        object.__setattr__(self, "n_params", int(n_params))

    @classmethod
    def const(cls, m, n_params: int = 0) -> "AffineMatrixFunction":
        return cls(m, (), n_params)

    @classmethod
    def zeros(cls, rows: int, cols: int, n_params: int = 0) -> "AffineMatrixFunction":
        return cls(np.zeros((rows, cols)), (), n_params)

    @property
    def shape(self) -> tuple[int, int]:
        return self.constant.shape

    @property
    def rows(self) -> int:
        return self.constant.shape[0]

    @property
    def cols(self) -> int:
        return self.constant.shape[1]

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.basis)

    def __call__(self, rho) -> np.ndarray:
        return eval_affine(self, rho)

    def with_params(self, n_params: int) -> "AffineMatrixFunction":
        return AffineMatrixFunction(self.constant, self.basis, n_params)

    def _combine(self, other, fn) -> "AffineMatrixFunction":
        n = max(self.n_params, other.n_params)
        terms = dict(self.basis)
        for idx, m in other.basis:
            terms[idx] = fn(terms.get(idx, np.zeros(self.shape)), m)
        return AffineMatrixFunction(fn(self.constant, other.constant), terms, n)

    def __add__(self, other) -> "AffineMatrixFunction":
        other = _lift(other, self.shape)
        if other.shape != self.shape:
            raise ShapeError(f"cannot add {self.shape} and {other.shape}")
        return self._combine(other, np.add)

    __radd__ = __add__

    def lmul(self, m) -> "AffineMatrixFunction":
        """Left-multiply by a constant matrix: ``m @ M(rho)``."""
        m = _as_matrix(m)
        if m.shape[1] != self.rows:
            raise ShapeError(f"cannot left-multiply {self.shape} by {m.shape}")
        return AffineMatrixFunction(
            m @ self.constant, [(i, m @ b) for i, b in self.basis], self.n_params)

    def rmul(self, m) -> "AffineMatrixFunction":
        """Right-multiply by a constant matrix: ``M(rho) @ m``."""
        m = _as_matrix(m)
        if m.shape[0] != self.cols:
            raise ShapeError(f"cannot right-multiply {self.shape} by {m.shape}")
        return AffineMatrixFunction(
            self.constant @ m, [(i, b @ m) for i, b in self.basis], self.n_params)

    def hstack(self, other) -> "AffineMatrixFunction":
        other = _lift(other, None)
        if other.rows != self.rows:
            raise ShapeError(f"cannot hstack {self.shape} and {other.shape}")
        zl = np.zeros(self.shape)
        zr = np.zeros(other.shape)
        left, right = dict(self.basis), dict(other.basis)
        terms = {i: np.hstack([left.get(i, zl), right.get(i, zr)])
                 for i in set(left) | set(right)}
        return AffineMatrixFunction(
            np.hstack([self.constant, other.constant]), terms,
            max(self.n_params, other.n_params))


def _lift(m, shape) -> AffineMatrixFunction:
    if isinstance(m, AffineMatrixFunction):
        return m
    return AffineMatrixFunction.const(m)


def eval_affine(f: AffineMatrixFunction, rho) -> np.ndarray:
    """Evaluate ``f`` at the parameter vector ``rho``."""
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    if rho.ndim != 1:
        raise ShapeError("rho must be a vector")
    if f.basis and rho.shape[0] <= f.basis[-1][0]:
        raise ShapeError(
            f"rho has length {rho.shape[0]} but f uses parameter {f.basis[-1][0]}")
    out = np.array(f.constant, copy=True)
    for idx, m in f.basis:
        out += rho[idx] * m
    return out


@dataclass(frozen=True)
class ParameterBox:
    """Axis-aligned box ``lower <= rho <= upper``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ShapeError(f"box bounds have shapes {lo.shape} and {hi.shape}")
        if np.any(lo > hi):
            raise ValueError("box lower bound exceeds upper bound")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def n_vertices(self) -> int:
        return 2 ** int(np.count_nonzero(self.lower < self.upper))

    def contains(self, rho, tol: float = 0.0) -> bool:
        rho = np.asarray(rho, dtype=float)
        return bool(np.all(rho >= self.lower - tol) and np.all(rho <= self.upper + tol))

    def sample(self, n: int, rng=None) -> np.ndarray:
        """Uniform random points inside the box, shape ``(n, dim)``."""
        rng = np.random.default_rng(rng)
        return self.lower + rng.random((n, self.dim)) * (self.upper - self.lower)


def vertices(box: ParameterBox) -> list[np.ndarray]:
    """Corners of ``box`` in binary-counting order (coordinate 0 fastest).

    Degenerate coordinates stay at their single value and do not double
    the vertex count.
    """
    free = np.flatnonzero(box.lower < box.upper)
    out = []
    for k in range(2 ** len(free)):
        v = np.array(box.lower, copy=True)
        for bit, j in enumerate(free):
            if (k >> bit) & 1:
                v[j] = box.upper[j]
        out.append(v)
    return out


def _affine(m, n_params) -> AffineMatrixFunction:
    f = m if isinstance(m, AffineMatrixFunction) else AffineMatrixFunction.const(m)
    return f.with_params(max(n_params, f.n_params))


@dataclass(frozen=True)
class LpvPlant:
    """Affine LPV plant with disturbance and measurement offsets.

    ``dx = A(rho) x + b(rho) + B_d(rho) S_d dbar``,
    ``y = C_y(rho) x + d(rho) + D_d(rho) S_d dbar + n``, ``z = C_z x``.

    Plain arrays are accepted wherever an affine function is expected.
    ``C_z`` may itself be affine; the CR3BP model uses a constant one.
    """

    A: AffineMatrixFunction
    B_d: AffineMatrixFunction
    C_y: AffineMatrixFunction
    C_z: AffineMatrixFunction
    S_d: np.ndarray
    box: ParameterBox
    b: AffineMatrixFunction | None = None
    d: AffineMatrixFunction | None = None
    D_d: AffineMatrixFunction | None = None
    channel_names: tuple = field(default=())

    def __post_init__(self):
        n_rho = self.box.dim
        A = _affine(self.A, n_rho)
        n_x = A.rows
        if A.cols != n_x:
            raise ShapeError(f"A must be square, got {A.shape}")
        B_d = _affine(self.B_d, n_rho)
        C_y = _affine(self.C_y, n_rho)
        C_z = _affine(self.C_z, n_rho)
        n_d, n_y = B_d.cols, C_y.rows
        b = _affine(np.zeros((n_x, 1)) if self.b is None else self.b, n_rho)
        d = _affine(np.zeros((n_y, 1)) if self.d is None else self.d, n_rho)
        D_d = _affine(np.zeros((n_y, n_d)) if self.D_d is None else self.D_d, n_rho)
        S_d = np.asarray(self.S_d, dtype=float)
        if S_d.ndim < 2:
            S_d = np.diag(np.atleast_1d(S_d))
        checks = [
            (B_d.rows == n_x, f"B_d has {B_d.rows} rows, expected {n_x}"),
            (C_y.cols == n_x, f"C_y has {C_y.cols} cols, expected {n_x}"),
            (C_z.cols == n_x, f"C_z has {C_z.cols} cols, expected {n_x}"),
            (b.shape == (n_x, 1), f"b has shape {b.shape}, expected {(n_x, 1)}"),
            (d.shape == (n_y, 1), f"d has shape {d.shape}, expected {(n_y, 1)}"),
            (D_d.shape == (n_y, n_d), f"D_d has shape {D_d.shape}, expected {(n_y, n_d)}"),
            (S_d.shape == (n_d, n_d), f"S_d has shape {S_d.shape}, expected {(n_d, n_d)}"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ShapeError(msg)
        for f in (A, B_d, C_y, C_z, b, d, D_d):
            if f.n_params > n_rho:
                raise ShapeError(
                    f"affine term uses {f.n_params} parameters, box has {n_rho}")
        if not np.allclose(S_d, np.diag(np.diag(S_d)), rtol=0, atol=0):
            raise ValueError("S_d must be diagonal")
        if np.any(np.diag(S_d) <= 0):
            raise ValueError("S_d diagonal entries must be strictly positive")
        S_d = S_d.copy()
        S_d.setflags(write=False)
        names = tuple(self.channel_names) or tuple(f"y{i + 1}" for i in range(n_y))
        if len(names) != n_y:
            raise ShapeError(f"{len(names)} channel names for {n_y} outputs")
        for k, v in dict(A=A, B_d=B_d, C_y=C_y, C_z=C_z, b=b, d=d, D_d=D_d,
                         S_d=S_d, channel_names=names).items():
            object.__setattr__(self, k, v)

    @property
    def n_x(self) -> int:
        return self.A.rows

    @property
    def n_y(self) -> int:
        return self.C_y.rows

    @property
    def n_d(self) -> int:
        return self.B_d.cols

    @property
    def n_z(self) -> int:
        return self.C_z.rows

    @property
    def n_rho(self) -> int:
        return self.box.dim

    def at(self, rho) -> dict:
        """Frozen-parameter matrices as a dict keyed by name."""
        return {k: eval_affine(getattr(self, k), rho)
                for k in ("A", "b", "B_d", "C_y", "d", "D_d", "C_z")}

    def with_scaling(self, S_d) -> "LpvPlant":
        return LpvPlant(self.A, self.B_d, self.C_y, self.C_z, S_d, self.box,
                        self.b, self.d, self.D_d, self.channel_names)

    def with_box(self, box: ParameterBox) -> "LpvPlant":
        return LpvPlant(self.A, self.B_d, self.C_y, self.C_z, self.S_d, box,
                        self.b, self.d, self.D_d, self.channel_names)


@dataclass(frozen=True)
class ObserverErrorSystem:
    """Error dynamics ``de = A_cl(rho) e + B_w(rho) wbar``, ``eps = C_z e``.

    ``B_w = [B_d S_d, 0] + L [D_d S_d, S_n]`` and ``D_w = [D_d S_d, S_n]``.
    """

    A_cl: AffineMatrixFunction
    B_w: AffineMatrixFunction
    D_w: AffineMatrixFunction
    C_z: AffineMatrixFunction
    L: np.ndarray
    S_n: np.ndarray

    def at(self, rho) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Frozen-parameter ``(A, B, C)`` of the error system."""
        return (eval_affine(self.A_cl, rho), eval_affine(self.B_w, rho),
                eval_affine(self.C_z, rho))


def closed_loop(plant: LpvPlant, L, S_n) -> ObserverErrorSystem:
    """Build the observer error system for gain ``L`` and noise scaling ``S_n``."""
    L = _as_matrix(L, "L")
    if L.shape != (plant.n_x, plant.n_y):
        raise ShapeError(f"L has shape {L.shape}, expected {(plant.n_x, plant.n_y)}")
    S_n = np.asarray(S_n, dtype=float)
    if S_n.ndim < 2:
        S_n = np.diag(np.broadcast_to(S_n, (plant.n_y,)))
    if S_n.shape != (plant.n_y, plant.n_y):
        raise ShapeError(f"S_n has shape {S_n.shape}, expected {(plant.n_y, plant.n_y)}")
    if np.any(np.diag(S_n) < 0):
        raise ValueError("S_n entries must be nonnegative")
    A_cl = plant.A + plant.C_y.lmul(L)
    bw_plant = plant.B_d.rmul(plant.S_d).hstack(np.zeros((plant.n_x, plant.n_y)))
    D_w = plant.D_d.rmul(plant.S_d).hstack(S_n)
    B_w = bw_plant + D_w.lmul(L)
    return ObserverErrorSystem(A_cl, B_w, D_w, plant.C_z, L, S_n)

