"""Dense complex linear algebra on tensor-product spaces.

Functions accept either a plain ndarray together with ``dims`` or a
:class:`HermitianOperator`, which carries its own subsystem dimensions.
When given an operator they return an operator; arrays come back as
arrays (so non-Hermitian intermediates such as ``|0><1|`` work too).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import DimensionError, DomainError, ValidationError

HERMITIAN_TOL = 1e-12
SYMMETRISE_WARN = 1e-10


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """Hermitian matrix with subsystem dimensions.

    Construction symmetrises ``(M + M^dagger)/2``; a warning is raised when the
    correction is larger than ``SYMMETRISE_WARN``.
    """

    matrix: np.ndarray
    dims: tuple

    def __init__(self, matrix, dims: Sequence[int] | None = None):
        m = np.array(matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"expected a square matrix, got shape {m.shape}")
        if dims is None:
            dims = (m.shape[0],)
        dims = tuple(int(d) for d in dims)
        if any(d < 1 for d in dims):
            raise DimensionError(f"subsystem dimensions must be >= 1, got {dims}")
        if int(np.prod(dims)) != m.shape[0]:
            raise DimensionError(f"dims {dims} do not match matrix side {m.shape[0]}")
        dev = np.abs(m - m.conj().T).max() if m.size else 0.0
        if dev > HERMITIAN_TOL:
            if dev > SYMMETRISE_WARN:
                warnings.warn(f"symmetrising operator, max |M - M^dag| = {dev:.3e}", stacklevel=2)
            m = (m + m.conj().T) / 2
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "dims", dims)

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def side(self) -> int:
        return self.matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def eigvalsh(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def min_eig(self) -> float:
        return float(self.eigvalsh()[0])

    def __add__(self, other):
        if isinstance(other, HermitianOperator):
            if other.dims != self.dims:
                raise DimensionError(f"dims differ: {self.dims} vs {other.dims}")
            other = other.matrix
        return HermitianOperator(self.matrix + other, self.dims)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1.0) * (other.matrix if isinstance(other, HermitianOperator) else other)

    def __mul__(self, c):
        if not np.isscalar(c) or np.iscomplexobj(c) and np.imag(c) != 0:
            return NotImplemented
        return HermitianOperator(float(np.real(c)) * self.matrix, self.dims)

    __rmul__ = __mul__

    def __neg__(self):
        return (-1.0) * self

    def allclose(self, other, atol=1e-10) -> bool:
        o = other.matrix if isinstance(other, HermitianOperator) else np.asarray(other)
        return o.shape == self.shape and bool(np.abs(self.matrix - o).max() <= atol)

    def __repr__(self):
        return f"HermitianOperator(dims={self.dims})"


OperatorLike = Union[HermitianOperator, np.ndarray]


def _unwrap(op, dims):
    if isinstance(op, HermitianOperator):
        return op.matrix, op.dims, True
    m = np.asarray(op, dtype=complex)
    if dims is None:
        dims = (m.shape[0],)
    dims = tuple(int(d) for d in dims)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or int(np.prod(dims)) != m.shape[0]:
        raise DimensionError(f"dims {dims} do not match array of shape {m.shape}")
    return m, dims, False


def _wrap(m, dims, as_op):
    return HermitianOperator(m, dims) if as_op else m


def _check_index(k, n):
    if not isinstance(k, (int, np.integer)) or not 0 <= k < n:
        raise IndexError(f"subsystem index {k} out of range for {n} subsystems")


def kron(a: OperatorLike, b: OperatorLike, *more: OperatorLike) -> OperatorLike:
    """Tensor product, concatenating subsystem dimensions."""
    ops = (a, b) + more
    as_op = all(isinstance(o, HermitianOperator) for o in ops)
    mats = [o.matrix if isinstance(o, HermitianOperator) else np.asarray(o) for o in ops]
    m = reduce(np.kron, mats)
    if as_op:
        return HermitianOperator(m, sum((o.dims for o in ops), ()))
    return m


def partial_trace(op: OperatorLike, over: Iterable[int], dims: Sequence[int] | None = None):
    m, dims, as_op = _unwrap(op, dims)
    n = len(dims)
    over = sorted(set(int(k) for k in over)) if not isinstance(over, (int, np.integer)) else [int(over)]
    if not over:
        raise IndexError("partial_trace needs at least one subsystem")
    for k in over:
        _check_index(k, n)
    t = m.reshape(dims + dims)
    rows = list(range(n))
    cols = [n + k for k in range(n)]
    for k in over:
        cols[k] = rows[k]
    keep = [k for k in range(n) if k not in over]
    out_idx = [rows[k] for k in keep] + [cols[k] for k in keep]
    r = np.einsum(t, rows + cols, out_idx)
    kd = tuple(dims[k] for k in keep)
    side = int(np.prod(kd)) if kd else 1
    r = np.asarray(r).reshape(side, side)
    return _wrap(r, kd if kd else (1,), as_op)


def partial_transpose(op: OperatorLike, on: int | Iterable[int], dims: Sequence[int] | None = None):
    m, dims, as_op = _unwrap(op, dims)
    n = len(dims)
    on = [int(on)] if isinstance(on, (int, np.integer)) else sorted(set(int(k) for k in on))
    for k in on:
        _check_index(k, n)
    t = m.reshape(dims + dims)
    for k in on:
        t = np.swapaxes(t, k, n + k)
    return _wrap(t.reshape(m.shape).copy(), dims, as_op)


def permute_systems(op: OperatorLike, perm: Sequence[int], dims: Sequence[int] | None = None):
    """Reorder tensor factors: output factor ``i`` is input factor ``perm[i]``."""
    m, dims, as_op = _unwrap(op, dims)
    n = len(dims)
    perm = [int(p) for p in perm]
    if sorted(perm) != list(range(n)):
        raise IndexError(f"{perm} is not a permutation of {n} subsystems")
    t = m.reshape(dims + dims).transpose(perm + [n + p for p in perm])
    nd = tuple(dims[p] for p in perm)
    return _wrap(t.reshape(m.shape).copy(), nd, as_op)


def identity(d: int) -> HermitianOperator:
    return HermitianOperator(np.eye(d), (d,))


def max_entangled(d: int) -> HermitianOperator:
    """Normalised projector onto sum_i |ii>/sqrt(d)."""
    if int(d) < 2:
        raise DomainError(f"maximally entangled state needs d >= 2, got {d}")
    v = np.eye(d).reshape(d * d) / np.sqrt(d)
    return HermitianOperator(np.outer(v, v.conj()), (d, d))


def transpose_trick(o: OperatorLike, d: int) -> OperatorLike:
    """Closed form of tr_A[(O (x) 1) phi+] = O^T / d."""
    m, dims, as_op = _unwrap(o, None if not isinstance(o, HermitianOperator) else o.dims)
    if dims != (d,):
        raise DimensionError(f"operator dims {dims} do not match d={d}")
    return _wrap(m.T / d, (d,), as_op)


def transpose_trick_direct(o: OperatorLike, d: int) -> np.ndarray:
    """The same quantity evaluated by an explicit partial trace."""
    m = np.asarray(o.matrix if isinstance(o, HermitianOperator) else o, dtype=complex)
    if m.shape != (d, d):
        raise DimensionError(f"operator shape {m.shape} does not match d={d}")
    phi = max_entangled(d).matrix
    return partial_trace(np.kron(m, np.eye(d)) @ phi, [0], (d, d))


def shift_clock(d: int):
    x = np.roll(np.eye(d), 1, axis=0)  # X|i> = |i+1>
    z = np.diag(np.exp(2j * np.pi * np.arange(d) / d))
    return x, z


def heisenberg_weyl(d: int) -> list[np.ndarray]:
    """The d^2 unitaries X^m Z^n, listed with index b = m*d + n."""
    if int(d) < 2:
        raise DomainError(f"Heisenberg-Weyl operators need d >= 2, got {d}")
    x, z = shift_clock(d)
    out = []
    for m in range(d):
        xm = np.linalg.matrix_power(x, m)
        for n in range(d):
            out.append(xm @ np.linalg.matrix_power(z, n))
    return out


def hw_bell_povm(d: int) -> list[HermitianOperator]:
    """Generalised Bell measurement (1 (x) U_b) phi+ (1 (x) U_b)^dagger on two d-level systems."""
    phi = max_entangled(d).matrix
    out = []
    for u in heisenberg_weyl(d):
        k = np.kron(np.eye(d), u)
        out.append(HermitianOperator(k @ phi @ k.conj().T, (d, d)))
    return out


def _povm_arrays(elements, dims=None):
    mats, dd = [], None
    for e in elements:
        m, d, _ = _unwrap(e, dims if not isinstance(e, HermitianOperator) else None)
        mats.append(m)
        dd = d if dd is None else dd
        if d != dd:
            raise DimensionError("POVM elements have inconsistent dims")
    return mats, dd


def choi_teleportation(Ma, rho, dims_ma=None, dims_rho=None) -> list[HermitianOperator]:
    """Choi operators J_a on V'(x)B of the teleportation experiment.

    J_a = tr_{VA}[(1_{V'} (x) M_a (x) 1_B)(phi+^{V'V} (x) rho^{AB})] with a
    normalised phi+, so that sum_a J_a = (1/d_V) 1 (x) rho^B.
    """
    from .models import Povm, validate_povm_elements  # cycle-free at call time

    if isinstance(Ma, Povm):
        mats, (dv, da) = [e.matrix for e in Ma.elements], Ma.dims
    else:
        mats, dd = _povm_arrays(Ma, dims_ma)
        if len(dd) != 2:
            raise DimensionError("Ma must act on V (x) A")
        dv, da = dd
        findings = validate_povm_elements(mats)
        if any(f.severity == "error" for f in findings):
            raise ValidationError(findings)
    r, rd, _ = _unwrap(rho, dims_rho)
    if len(rd) != 2 or rd[0] != da:
        raise DimensionError(f"state dims {rd} inconsistent with A of dimension {da}")
    db = rd[1]
    phi = max_entangled(dv).matrix
    big_state = np.kron(phi, r)  # V' V A B
    out = []
    for m in mats:
        big = np.kron(np.kron(np.eye(dv), m), np.eye(db)) @ big_state
        out.append(HermitianOperator(partial_trace(big, [1, 2], (dv, dv, da, db)), (dv, db)))
    return out


def linear_map_apply(J, Mb, dims_j=None, dims_mb=None) -> np.ndarray:
    """tr_B[(J (x) 1_W)(1_{V'} (x) Mb)] with J on V'(x)B and Mb on B(x)W."""
    j, jd, as_op_j = _unwrap(J, dims_j)
    m, md, as_op_m = _unwrap(Mb, dims_mb)
    if len(jd) != 2 or len(md) != 2 or jd[1] != md[0]:
        raise DimensionError(f"incompatible dims {jd} and {md}")
    dv, db, dw = jd[0], jd[1], md[1]
    prod = np.kron(j, np.eye(dw)) @ np.kron(np.eye(dv), m)
    r = partial_trace(prod, [1], (dv, db, dw))
    return _wrap(r, (dv, dw), as_op_j and as_op_m)


def is_psd(m, tol=1e-10) -> bool:
    m = m.matrix if isinstance(m, HermitianOperator) else np.asarray(m)
    return bool(np.linalg.eigvalsh((m + m.conj().T) / 2)[0] >= -tol)


def min_eig(m) -> float:
    m = m.matrix if isinstance(m, HermitianOperator) else np.asarray(m)
    return float(np.linalg.eigvalsh((m + m.conj().T) / 2)[0])


def ket(i: int, d: int) -> np.ndarray:
    v = np.zeros(d, dtype=complex)
    v[i] = 1
    return v


def proj(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex).reshape(-1)
    return np.outer(v, v.conj())
