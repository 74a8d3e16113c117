"""Solver-agnostic conic programs over Hermitian matrix variables.

A program owns a flat real coordinate vector. Every variable and every
expression built from variables is affine in those coordinates and is stored
as a sparse complex coefficient matrix (one row per matrix entry, row-major)
plus a constant. Complex PSD constraints are embedded as real symmetric ones
via H = A + iB -> [[A, -B], [B, A]] when the backend is called.

Backends see the standard form  min c.x  s.t.  A x + s = b,  s in K.
"""
from __future__ import annotations

import contextlib
import json
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ExtractionError, SolverError, ValidationError
from .operators import HermitianOperator

SQRT2 = np.sqrt(2.0)


# ---------------------------------------------------------------------------
# index maps (cached; all are small)

@lru_cache(maxsize=None)
def _transpose_perm(r: int, c: int) -> np.ndarray:
    # vec_r(E^T)[j*r + i] = vec_r(E)[i*c + j]
    i, j = np.meshgrid(np.arange(r), np.arange(c), indexing="ij")
    out = np.empty(r * c, dtype=np.int64)
    out[(j * r + i).ravel()] = (i * c + j).ravel()
    return out


@lru_cache(maxsize=None)
def _ptranspose_perm(dims: tuple, on: tuple) -> np.ndarray:
    n = len(dims)
    side = int(np.prod(dims))
    idx = np.arange(side * side).reshape(dims + dims)
    for k in on:
        idx = np.swapaxes(idx, k, n + k)
    return idx.reshape(-1).copy()


@lru_cache(maxsize=None)
def _ptrace_map(dims: tuple, over: tuple) -> sp.csr_matrix:
    n = len(dims)
    side = int(np.prod(dims))
    keep = [k for k in range(n) if k not in over]
    kd = tuple(dims[k] for k in keep)
    kside = int(np.prod(kd)) if kd else 1
    rows = np.array(np.unravel_index(np.arange(side), dims))  # (n, side)
    R, C = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    R, C = R.ravel(), C.ravel()
    mask = np.ones(R.shape, dtype=bool)
    for k in over:
        mask &= rows[k][R] == rows[k][C]
    R, C = R[mask], C[mask]
    if kd:
        rk = np.ravel_multi_index(tuple(rows[k][R] for k in keep), kd)
        ck = np.ravel_multi_index(tuple(rows[k][C] for k in keep), kd)
    else:
        rk = ck = np.zeros(R.shape, dtype=np.int64)
    out = rk * kside + ck
    src = R * side + C
    return sp.csr_matrix((np.ones(len(out)), (out, src)), shape=(kside * kside, side * side))


# ---------------------------------------------------------------------------

class Expr:
    """Affine matrix-valued expression: vec(E(x)) = coef @ x + const (row-major)."""

    __array_priority__ = 100
    __array_ufunc__ = None

    def __init__(self, prog: "ConicProgram", shape, coef, const, dims=None):
        self.prog = prog
        self.shape = tuple(shape)
        self.coef = sp.csr_matrix(coef, dtype=complex)
        self.const = np.asarray(const, dtype=complex).reshape(-1)
        self.dims = tuple(dims) if dims is not None else (self.shape[0],)

    # -- helpers
    def _width(self, n):
        if self.coef.shape[1] < n:
            self.coef = sp.csr_matrix((self.coef.data, self.coef.indices, self.coef.indptr),
                                      shape=(self.coef.shape[0], n))
        return self.coef

    def _map(self, L, shape, dims=None):
        L = sp.csr_matrix(L)
        return Expr(self.prog, shape, L @ self.coef, L @ self.const, dims)

    def _lift(self, other):
        if isinstance(other, Expr):
            if other.prog is not self.prog:
                raise ValidationError("expressions belong to different programs")
            return other
        arr = np.asarray(other, dtype=complex)
        if arr.ndim == 0:
            if self.shape != (1, 1):
                raise ValidationError("adding a scalar to a matrix expression is ambiguous; use a matrix")
            arr = arr.reshape(1, 1)
        if arr.shape != self.shape:
            raise ValidationError(f"shape mismatch {arr.shape} vs {self.shape}")
        return Expr(self.prog, self.shape, sp.csr_matrix((arr.size, self.prog.n)), arr.reshape(-1), self.dims)

    # -- arithmetic
    def __add__(self, other):
        if isinstance(other, (int, float)) and other == 0 and self.shape != (1, 1):
            return self
        o = self._lift(other)
        if o.shape != self.shape:
            raise ValidationError(f"shape mismatch {o.shape} vs {self.shape}")
        n = self.prog.n
        return Expr(self.prog, self.shape, self._width(n) + o._width(n), self.const + o.const, self.dims)

    __radd__ = __add__

    def __neg__(self):
        return Expr(self.prog, self.shape, -self.coef, -self.const, self.dims)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if np.isscalar(other):
            return Expr(self.prog, self.shape, self.coef * other, self.const * other, self.dims)
        arr = np.asarray(other, dtype=complex)
        if self.shape != (1, 1):
            raise ValidationError("only scalar expressions can multiply a constant matrix")
        v = arr.reshape(-1, 1)
        return Expr(self.prog, arr.shape, sp.csr_matrix(v) @ self.coef, (v * self.const).reshape(-1),
                    (arr.shape[0],))

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1.0 / c)

    def __matmul__(self, B):
        B = np.asarray(B, dtype=complex)
        r, c = self.shape
        L = sp.kron(sp.identity(r), sp.csr_matrix(B.T))
        return self._map(L, (r, B.shape[1]), self.dims if B.shape[1] == c else None)

    def __rmatmul__(self, A):
        A = np.asarray(A, dtype=complex)
        r, c = self.shape
        L = sp.kron(sp.csr_matrix(A), sp.identity(c))
        return self._map(L, (A.shape[0], c), self.dims if A.shape[0] == r else None)

    # -- structure
    @property
    def T(self):
        r, c = self.shape
        perm = _transpose_perm(r, c)
        L = sp.csr_matrix((np.ones(r * c), (np.arange(r * c), perm)), shape=(r * c, r * c))
        return self._map(L, (c, r), self.dims)

    def trace(self):
        r, c = self.shape
        diag = np.arange(min(r, c)) * (c + 1)
        L = sp.csr_matrix((np.ones(len(diag)), (np.zeros(len(diag), dtype=int), diag)), shape=(1, r * c))
        return self._map(L, (1, 1), (1,))

    def real(self):
        return Expr(self.prog, self.shape, sp.csr_matrix(self.coef.real), self.const.real, self.dims)

    def __getitem__(self, k):
        """Select entry k of a column vector (or (i, j) of a matrix) as a scalar."""
        r, c = self.shape
        if isinstance(k, tuple):
            flat = k[0] * c + k[1]
        else:
            flat = k * c if c == 1 or r > 1 else k
        L = sp.csr_matrix(([1.0], ([0], [flat])), shape=(1, r * c))
        return self._map(L, (1, 1), (1,))

    def value(self, x) -> np.ndarray:
        n = self.coef.shape[1]
        v = self.coef @ x[:n] + self.const
        return v.reshape(self.shape)


def _as_dims(e: Expr, dims):
    dims = tuple(int(d) for d in (dims if dims is not None else e.dims))
    if int(np.prod(dims)) != e.shape[0] or e.shape[0] != e.shape[1]:
        raise ValidationError(f"dims {dims} incompatible with expression of shape {e.shape}")
    return dims


def ptrace(e: Expr, over, dims=None) -> Expr:
    dims = _as_dims(e, dims)
    over = tuple(sorted({int(over)} if np.isscalar(over) else {int(k) for k in over}))
    for k in over:
        if not 0 <= k < len(dims):
            raise IndexError(f"subsystem {k} out of range")
    L = _ptrace_map(dims, over)
    kd = tuple(d for k, d in enumerate(dims) if k not in over) or (1,)
    side = int(np.prod(kd))
    return e._map(L, (side, side), kd)


def ptranspose(e: Expr, on, dims=None) -> Expr:
    dims = _as_dims(e, dims)
    on = tuple(sorted({int(on)} if np.isscalar(on) else {int(k) for k in on}))
    for k in on:
        if not 0 <= k < len(dims):
            raise IndexError(f"subsystem {k} out of range")
    perm = _ptranspose_perm(dims, on)
    m = len(perm)
    L = sp.csr_matrix((np.ones(m), (np.arange(m), perm)), shape=(m, m))
    return e._map(L, e.shape, dims)


def kron(a, b) -> Expr:
    """Tensor product where exactly one factor is an expression."""
    if isinstance(a, Expr) and isinstance(b, Expr):
        raise ValidationError("product of two expressions is not affine")
    if isinstance(a, Expr):
        e, C, left = a, np.asarray(b, dtype=complex), True
    else:
        e, C, left = b, np.asarray(a, dtype=complex), False
    r, c = e.shape
    p, q = C.shape
    ii, jj, kk, ll = np.meshgrid(np.arange(r), np.arange(c), np.arange(p), np.arange(q), indexing="ij")
    ii, jj, kk, ll = (t.ravel() for t in (ii, jj, kk, ll))
    vals = C[kk, ll]
    nz = vals != 0
    ii, jj, kk, ll, vals = ii[nz], jj[nz], kk[nz], ll[nz], vals[nz]
    if left:
        out = (ii * p + kk) * (c * q) + (jj * q + ll)
        dims = e.dims + (p,) if r == c and p == q else None
    else:
        out = (kk * r + ii) * (q * c) + (ll * c + jj)
        dims = (p,) + e.dims if r == c and p == q else None
    L = sp.csr_matrix((vals, (out, ii * c + jj)), shape=(r * p * c * q, r * c))
    return e._map(L, (r * p, c * q), dims)


def realify(x):
    """Real symmetric embedding [[A, -B], [B, A]] of a Hermitian matrix or expression."""
    if isinstance(x, Expr):
        n = x.shape[0]
        _check_hermitian(x, "realify")
        re = x.real()
        im = Expr(x.prog, x.shape, sp.csr_matrix(x.coef.imag), x.const.imag, x.dims)
        top = kron(np.array([[1, 0], [0, 1]]), re) + kron(np.array([[0, -1], [1, 0]]), im)
        return top
    m = np.asarray(x.matrix if isinstance(x, HermitianOperator) else x, dtype=complex)
    if np.abs(m - m.conj().T).max() > 1e-12:
        raise ValidationError("realify needs a Hermitian matrix")
    a, b = m.real, m.imag
    return np.block([[a, -b], [b, a]])


def unrealify(S: np.ndarray) -> np.ndarray:
    """Complex Y with tr(Y H) = <S, realify(H)> for every Hermitian H."""
    n = S.shape[0] // 2
    P, Q, R = S[:n, :n], S[:n, n:], S[n:, n:]
    return (P + R) + 1j * (Q.T - Q)


def _check_hermitian(e: Expr, what):
    r, c = e.shape
    if r != c:
        raise ValidationError(f"{what}: expression is not square ({e.shape})")
    perm = _transpose_perm(r, c)
    cm = e._width(e.prog.n)
    diff = cm - cm[perm].conj()
    dev = abs(diff).max() if diff.nnz else 0.0
    dev = max(dev, float(np.abs(e.const - e.const[perm].conj()).max()) if e.const.size else 0.0)
    if dev > 1e-12:
        raise ValidationError(f"{what}: expression is not Hermitian-valued (deviation {dev:.2e})")


# ---------------------------------------------------------------------------

@dataclass
class Constraint:
    name: str
    kind: str  # psd | eq | nonneg
    expr: Expr


@dataclass
class Variable:
    name: str
    kind: str  # hermitian | real
    shape: tuple
    offset: int
    size: int
    dims: tuple


class ConicProgram:
    """Hermitian/real variables, PSD, equality and nonnegativity constraints, linear objective."""

    def __init__(self, label: str = ""):
        self.label = label
        self.n = 0
        self.variables: dict[str, Variable] = {}
        self.constraints: list[Constraint] = []
        self.objective: Expr | None = None
        self.sense = "min"

    def _alloc(self, name, size):
        if name in self.variables:
            raise ValidationError(f"variable {name!r} declared twice")
        off = self.n
        self.n += size
        return off

    def hermitian(self, name: str, dim: int, dims: Sequence[int] | None = None) -> Expr:
        dim = int(dim)
        off = self._alloc(name, dim * dim)
        rows, cols, vals = [], [], []
        k = off
        for i in range(dim):
            rows.append(i * dim + i); cols.append(k); vals.append(1.0); k += 1
        for i in range(dim):
            for j in range(i + 1, dim):
                rows += [i * dim + j, j * dim + i]; cols += [k, k]; vals += [1.0, 1.0]; k += 1
                rows += [i * dim + j, j * dim + i]; cols += [k, k]; vals += [1j, -1j]; k += 1
        coef = sp.csr_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(dim * dim, self.n))
        dims = tuple(dims) if dims is not None else (dim,)
        self.variables[name] = Variable(name, "hermitian", (dim, dim), off, dim * dim, dims)
        return Expr(self, (dim, dim), coef, np.zeros(dim * dim), dims)

    def real(self, name: str, size: int = 1) -> Expr:
        off = self._alloc(name, size)
        coef = sp.csr_matrix((np.ones(size), (np.arange(size), off + np.arange(size))), shape=(size, self.n))
        self.variables[name] = Variable(name, "real", (size, 1), off, size, (size,))
        return Expr(self, (size, 1), coef, np.zeros(size))

    def constant(self, value) -> Expr:
        arr = np.atleast_2d(np.asarray(value, dtype=complex))
        return Expr(self, arr.shape, sp.csr_matrix((arr.size, self.n)), arr.reshape(-1))

    def add_psd(self, name: str, expr: Expr):
        _check_hermitian(expr, f"psd constraint {name!r}")
        self.constraints.append(Constraint(name, "psd", expr))

    def add_eq(self, name: str, expr: Expr):
        if expr.shape[0] == expr.shape[1] and expr.shape[0] > 1:
            _check_hermitian(expr, f"equality {name!r}")
        self.constraints.append(Constraint(name, "eq", expr))

    def add_nonneg(self, name: str, expr: Expr):
        if np.abs(expr.const.imag).max(initial=0) > 1e-12 or (expr.coef.nnz and abs(expr.coef.imag).max() > 1e-12):
            raise ValidationError(f"nonnegativity {name!r} needs a real-valued expression")
        self.constraints.append(Constraint(name, "nonneg", expr))

    def minimize(self, expr: Expr):
        self._set_objective(expr, "min")

    def maximize(self, expr: Expr):
        self._set_objective(expr, "max")

    def _set_objective(self, expr, sense):
        if expr.shape != (1, 1):
            raise ValidationError("objective must be scalar")
        if abs(expr.const[0].imag) > 1e-12 or (expr.coef.nnz and abs(expr.coef.imag).max() > 1e-12):
            raise ValidationError("objective must be real-valued")
        self.objective = expr.real()
        self.sense = sense

    # -- compilation
    def compile(self) -> "CompiledProgram":
        return CompiledProgram.build(self)

    def to_json(self) -> str:
        """Debug dump: variables plus every constraint in sparse triplet form."""
        out = {"label": self.label, "n": self.n, "sense": self.sense,
               "variables": [{"name": v.name, "kind": v.kind, "shape": list(v.shape), "offset": v.offset,
                              "size": v.size, "dims": list(v.dims)} for v in self.variables.values()],
               "constraints": []}
        for c in self.constraints:
            m = sp.coo_matrix(c.expr._width(self.n))
            out["constraints"].append({
                "name": c.name, "kind": c.kind, "shape": list(c.expr.shape),
                "row": m.row.tolist(), "col": m.col.tolist(),
                "re": m.data.real.tolist(), "im": m.data.imag.tolist(),
                "const": [[z.real, z.imag] for z in c.expr.const]})
        if self.objective is not None:
            m = sp.coo_matrix(self.objective._width(self.n))
            out["objective"] = {"col": m.col.tolist(), "val": m.data.real.tolist(),
                                "const": float(self.objective.const[0].real)}
        return json.dumps(out)


@dataclass
class Block:
    name: str
    kind: str  # zero | nonneg | psd
    start: int
    length: int
    shape: tuple
    dims: tuple
    realified: bool = False
    layout: object = None  # index bookkeeping for dual reassembly


def _svec_rows(n):
    """(i, j) pairs of the upper triangle, column-major, with sqrt(2) scaling."""
    ii, jj, sc = [], [], []
    for j in range(n):
        for i in range(j + 1):
            ii.append(i); jj.append(j); sc.append(1.0 if i == j else SQRT2)
    return np.array(ii), np.array(jj), np.array(sc)


def smat(v, n):
    ii, jj, sc = _svec_rows(n)
    S = np.zeros((n, n))
    S[ii, jj] = v / sc
    S[jj, ii] = v / sc
    return S


@dataclass
class CompiledProgram:
    prog: ConicProgram
    c: np.ndarray
    c0: float
    A: sp.csc_matrix
    b: np.ndarray
    blocks: list

    @classmethod
    def build(cls, prog: ConicProgram):
        if prog.objective is None:
            raise ValidationError("program has no objective")
        n = prog.n
        G_parts, g_parts, blocks = [], [], []
        row = 0
        for con in prog.constraints:
            e = con.expr
            C = e._width(n)
            Cr, Ci = sp.csr_matrix(C.real), sp.csr_matrix(C.imag)
            kr, ki = e.const.real, e.const.imag
            if con.kind == "psd":
                m = e.shape[0]
                is_real = Ci.nnz == 0 or abs(Ci).max() == 0
                is_real = is_real and not np.any(ki)
                if is_real:
                    ii, jj, sc = _svec_rows(m)
                    idx = ii * m + jj
                    G = sp.diags(sc) @ Cr[idx]
                    g = sc * kr[idx]
                    size = m
                else:
                    ii, jj, sc = _svec_rows(2 * m)
                    bi, bj = ii // m, jj // m
                    i0, j0 = ii % m, jj % m
                    idx = i0 * m + j0
                    use_im = bi != bj  # upper-right block holds -Im
                    stack = sp.vstack([Cr, Ci]).tocsr()
                    sel = np.where(use_im, m * m + idx, idx)
                    sign = np.where(use_im, -1.0, 1.0) * sc
                    G = sp.diags(sign) @ stack[sel]
                    g = sign * np.where(use_im, ki[idx], kr[idx])
                    size = 2 * m
                blocks.append(Block(con.name, "psd", row, len(g), e.shape, e.dims, not is_real, size))
            elif con.kind == "eq":
                r, cc = e.shape
                if r == cc and r > 1:
                    iu, ju = np.triu_indices(r)
                    re_idx = iu * r + ju
                    iu2, ju2 = np.triu_indices(r, 1)
                    im_idx = iu2 * r + ju2
                else:
                    re_idx = np.arange(r * cc)
                    im_idx = np.arange(r * cc)
                Gre, gre = Cr[re_idx], kr[re_idx]
                Gim, gim = Ci[im_idx], ki[im_idx]
                keep_im = (np.asarray(abs(Gim).sum(axis=1)).ravel() > 0) | (gim != 0)
                G = sp.vstack([Gre, Gim[np.where(keep_im)[0]]]).tocsr()
                g = np.concatenate([gre, gim[keep_im]])
                layout = (re_idx, im_idx[keep_im], r == cc and r > 1)
                blocks.append(Block(con.name, "zero", row, len(g), e.shape, e.dims, False, layout))
            else:
                G, g = Cr, kr
                blocks.append(Block(con.name, "nonneg", row, len(g), e.shape, e.dims))
            G_parts.append(G)
            g_parts.append(g)
            row += len(g)
        # s = G x + g  and  A x + s = b  =>  A = -G, b = g
        A = -sp.vstack(G_parts).tocsc() if G_parts else sp.csc_matrix((0, n))
        b = np.concatenate(g_parts) if g_parts else np.zeros(0)
        obj = prog.objective
        c = np.asarray(obj._width(n).real.toarray()).ravel()
        c0 = float(obj.const[0].real)
        if prog.sense == "max":
            c = -c
        return cls(prog, c, c0, A, b, blocks)

    def cones(self):
        import clarabel

        out = []
        for blk in self.blocks:
            if blk.kind == "zero":
                out.append(clarabel.ZeroConeT(blk.length))
            elif blk.kind == "nonneg":
                out.append(clarabel.NonnegativeConeT(blk.length))
            else:
                out.append(clarabel.PSDTriangleConeT(blk.layout))
        return out


# ---------------------------------------------------------------------------

@dataclass
class SolverSettings:
    tol_feas: float = 1e-10
    tol_gap_abs: float = 1e-10
    tol_gap_rel: float = 1e-10
    max_iter: int = 400
    verify_feas: float = 1e-8
    verify_gap: float = 1e-7
    verbose: bool = False
    retry: bool = True  # re-solve with the fallback profiles when a result fails verification


@dataclass
class ConicSolution:
    status: str  # optimal | infeasible | unbounded | inaccurate
    primal_value: float
    dual_value: float
    gap: float
    assignments: dict
    duals: dict
    residuals: dict
    backend_status: str = ""
    iterations: int = 0
    solve_time: float = 0.0
    label: str = ""
    x: np.ndarray | None = field(default=None, repr=False)
    violations: dict = field(default_factory=dict)
    attempts: int = 1

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def value(self, expr: Expr) -> np.ndarray:
        return expr.value(self.x)

    def scalar(self, expr: Expr) -> float:
        return float(expr.value(self.x)[0, 0].real)

    def summary(self) -> dict:
        return {"label": self.label, "status": self.status, "backend_status": self.backend_status,
                "primal": self.primal_value, "dual": self.dual_value, "gap": self.gap,
                **{f"residual_{k}": v for k, v in self.residuals.items()}}


class ClarabelBackend:
    """Adapter for the Clarabel interior-point solver."""

    name = "clarabel"
    capabilities = {"psd": True, "max_block": None, "deterministic": True}

    def __init__(self, settings: SolverSettings | None = None):
        self.settings = settings or SolverSettings()

    # tried in order until one verifies; the later ones trade speed for accuracy on badly scaled programs
    _refine = {"iterative_refinement_reltol": 1e-14, "iterative_refinement_abstol": 1e-14,
               "iterative_refinement_max_iter": 50}
    fallback_profiles = (
        {"equilibrate_max_iter": 50, **_refine},
        {"equilibrate_enable": False, **_refine},
        {"equilibrate_max_iter": 50, "max_step_fraction": 0.9, **_refine},
        {"direct_solve_method": "faer"},
        {"equilibrate_enable": False, "static_regularization_constant": 1e-7},
    )

    def run(self, cp: CompiledProgram, profile: dict | None = None):
        import clarabel

        s = clarabel.DefaultSettings()
        s.verbose = self.settings.verbose
        s.tol_feas = self.settings.tol_feas
        s.tol_gap_abs = self.settings.tol_gap_abs
        s.tol_gap_rel = self.settings.tol_gap_rel
        s.max_iter = self.settings.max_iter
        s.chordal_decomposition_enable = False
        s.presolve_enable = False
        for k, v in (profile or {}).items():
            setattr(s, k, v)
        n = len(cp.c)
        P = sp.csc_matrix((n, n))
        solver = clarabel.DefaultSolver(P, cp.c, cp.A, cp.b, cp.cones(), s)
        sol = solver.solve()
        return {"status": str(sol.status), "x": np.array(sol.x), "z": np.array(sol.z), "s": np.array(sol.s),
                "iterations": int(sol.iterations), "time": float(sol.solve_time)}


_LOG: list | None = None


@contextlib.contextmanager
def solve_log():
    """Collect a summary of every solve performed inside the block."""
    global _LOG
    prev = _LOG
    _LOG = entries = []
    try:
        yield entries
    finally:
        _LOG = prev
        if prev is not None:
            prev.extend(entries)


def _cone_residuals(cp: CompiledProgram, v: np.ndarray, dual: bool) -> tuple[float, dict]:
    worst, per = 0.0, {}
    for blk in cp.blocks:
        seg = v[blk.start:blk.start + blk.length]
        if blk.kind == "zero":
            r = 0.0 if dual else (float(np.abs(seg).max()) if seg.size else 0.0)
        elif blk.kind == "nonneg":
            r = max(0.0, -float(seg.min())) if seg.size else 0.0
        else:
            r = max(0.0, -float(np.linalg.eigvalsh(smat(seg, blk.layout))[0]))
        per.setdefault(blk.name, 0.0)
        per[blk.name] = max(per[blk.name], r)
        worst = max(worst, r)
    return worst, per


def _reassemble(blk: Block, z: np.ndarray):
    seg = z[blk.start:blk.start + blk.length]
    if blk.kind == "psd":
        S = smat(seg, blk.layout)
        return unrealify(S) if blk.realified else S.astype(complex)
    if blk.kind == "nonneg":
        return seg.reshape(blk.shape)
    re_idx, im_idx, herm = blk.layout
    r, c = blk.shape
    zr, zi = seg[:len(re_idx)], seg[len(re_idx):]
    if herm:
        Y = np.zeros((r, c), dtype=complex)
        iu, ju = np.divmod(re_idx, c)
        off = iu != ju
        Y[iu[~off], ju[~off]] = zr[~off]
        Y[iu[off], ju[off]] += zr[off] / 2
        Y[ju[off], iu[off]] += zr[off] / 2
        i2, j2 = np.divmod(im_idx, c)
        Y[i2, j2] += 1j * zi / 2
        Y[j2, i2] += -1j * zi / 2
        return Y
    Y = np.zeros(r * c, dtype=complex)
    Y[re_idx] += zr
    Y[im_idx] += 1j * zi
    return Y.reshape(r, c)


def solve(prog: ConicProgram, backend=None, settings: SolverSettings | None = None) -> ConicSolution:
    """Solve, then re-verify feasibility, dual feasibility and the gap independently."""
    settings = settings or (backend.settings if backend is not None else SolverSettings())
    backend = backend or ClarabelBackend(settings)
    cp = prog.compile()
    profiles = [None]
    if settings.retry:
        profiles += list(getattr(backend, "fallback_profiles", ()))
    best = None
    for attempt, profile in enumerate(profiles):
        t0 = time.perf_counter()
        try:
            raw = backend.run(cp, profile) if profile is not None else backend.run(cp)
        except Exception as exc:  # backend crashed: wrap with what we know
            raise SolverError(f"backend {getattr(backend, 'name', '?')} failed: {exc}",
                              {"label": prog.label, "n": prog.n, "rows": len(cp.b)}) from exc
        sol = _evaluate(prog, cp, raw, settings, time.perf_counter() - t0)
        sol.attempts = attempt + 1
        if best is None or _worse(best, sol):
            best = sol
        if sol.status != "inaccurate":
            break
    if _LOG is not None:
        _LOG.append(best.summary())
    return best


def _worse(a: ConicSolution, b: ConicSolution) -> bool:
    """Is a worse than b? Verified statuses win, then smaller residuals."""
    if (a.status == "inaccurate") != (b.status == "inaccurate"):
        return a.status == "inaccurate"
    score = lambda s: max(s.residuals["primal"], s.residuals["dual"], s.gap if np.isfinite(s.gap) else np.inf)
    return score(b) < score(a)


def _evaluate(prog, cp, raw, settings, elapsed) -> ConicSolution:
    x, z = raw["x"], raw["z"]
    bstat = raw["status"]
    sgn = -1.0 if prog.sense == "max" else 1.0
    if bstat in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        status = "infeasible"
    elif bstat in ("DualInfeasible", "AlmostDualInfeasible"):
        status = "unbounded"
    elif bstat in ("Solved", "AlmostSolved"):
        status = "candidate"
    else:
        status = "inaccurate"
    if len(x) != prog.n or not np.all(np.isfinite(x)):
        x = np.zeros(prog.n) if len(x) != prog.n else np.nan_to_num(x)
    s_calc = cp.b - cp.A @ x
    p_res, p_per = _cone_residuals(cp, s_calc, dual=False)
    d_cone, _ = _cone_residuals(cp, z, dual=True) if len(z) == len(cp.b) else (np.inf, {})
    stat = cp.c + cp.A.T @ z if len(z) == len(cp.b) else np.full(prog.n, np.inf)
    d_res = max(float(np.abs(stat).max()) if stat.size else 0.0, d_cone)
    primal = sgn * float(cp.c @ x) + cp.c0
    dual = sgn * float(-cp.b @ z) + cp.c0 if len(z) == len(cp.b) else np.nan
    gap = abs(primal - dual)
    residuals = {"primal": p_res, "dual": d_res}
    if status == "candidate":
        ok = p_res <= settings.verify_feas and d_res <= settings.verify_feas and gap <= settings.verify_gap
        status = "optimal" if ok else "inaccurate"
    assignments, duals = {}, {}
    for v in prog.variables.values():
        seg = x[v.offset:v.offset + v.size]
        if v.kind == "real":
            assignments[v.name] = seg.copy() if v.size > 1 else float(seg[0])
        else:
            e = Expr(prog, v.shape, _var_coef(prog, v), np.zeros(v.size))
            assignments[v.name] = e.value(x)
    if len(z) == len(cp.b):
        for blk in cp.blocks:
            duals.setdefault(blk.name, []).append(_reassemble(blk, z))
    return ConicSolution(status, primal, dual, gap, assignments, duals, residuals, bstat,
                         raw.get("iterations", 0), elapsed, prog.label, x,
                         {k: v for k, v in p_per.items() if v > settings.verify_feas})


def _var_coef(prog, v: Variable):
    d = v.shape[0]
    rows, cols, vals = [], [], []
    k = v.offset
    for i in range(d):
        rows.append(i * d + i); cols.append(k); vals.append(1.0); k += 1
    for i in range(d):
        for j in range(i + 1, d):
            rows += [i * d + j, j * d + i, i * d + j, j * d + i]
            cols += [k, k, k + 1, k + 1]
            vals += [1.0, 1.0, 1j, -1j]
            k += 2
    return sp.csr_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(d * d, prog.n))


def extract_dual_witness(sol: ConicSolution, group: str) -> list[HermitianOperator]:
    """Dual multipliers of a named constraint group as Hermitian operators.

    Multipliers Y pair with the constraint expression E as tr(Y E), in the
    minimisation form of the program.
    """
    if sol.status != "optimal":
        raise ExtractionError(f"no certified multipliers: solution status is {sol.status}")
    if group not in sol.duals:
        raise ExtractionError(f"no constraint group named {group!r}")
    out = []
    for Y in sol.duals[group]:
        if Y.ndim == 2 and Y.shape[0] == Y.shape[1]:
            out.append(HermitianOperator((Y + Y.conj().T) / 2))
        else:
            out.append(Y)
    return out


def require_optimal(sol: ConicSolution, what: str):
    if sol.status != "optimal":
        raise SolverError(f"{what}: solver returned {sol.status} ({sol.backend_status})",
                          {"residuals": sol.residuals, "gap": sol.gap, "violations": sol.violations})
    return sol
