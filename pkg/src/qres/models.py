"""Measurement sets, input sets, assemblages, behaviours and distributed POVMs.

Indexing is 0-based throughout: ``elements[x][a]`` for measurement sets,
``members[x][a]`` for assemblages and ``table[a, b, x, y]`` for behaviours.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionError, DomainError, ValidationError
from .operators import HermitianOperator, kron, partial_trace, proj


@dataclass(frozen=True)
class Tolerances:
    psd: float = 1e-10
    completeness: float = 1e-10
    no_signalling: float = 1e-10
    nonneg: float = 1e-12
    trace: float = 1e-10
    rank: float = 1e-8


DEFAULT_TOL = Tolerances()


@dataclass(frozen=True)
class Finding:
    code: str
    message: str
    severity: str = "error"  # error | warning
    magnitude: float | None = None
    where: tuple = ()

    def __str__(self):
        loc = f" at {self.where}" if self.where else ""
        return f"[{self.code}]{loc} {self.message}"

    def to_dict(self):
        return {"code": self.code, "severity": self.severity, "message": self.message,
                "magnitude": self.magnitude, "where": list(self.where)}


def _errors(findings):
    return [f for f in findings if f.severity == "error"]


def _raise_on_errors(findings):
    errs = _errors(findings)
    if any(f.code == "dim-mismatch" for f in errs):
        raise DimensionError(findings)
    if errs:
        raise ValidationError(findings)
    for f in findings:
        warnings.warn(str(f), stacklevel=3)


def _as_matrix(x, where, findings):
    try:
        m = np.asarray(x.matrix if isinstance(x, HermitianOperator) else x, dtype=complex)
    except (TypeError, ValueError) as exc:
        findings.append(Finding("not-numeric", f"cannot read operator: {exc}", where=where))
        return None
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        findings.append(Finding("not-square", f"operator has shape {m.shape}", where=where))
        return None
    if not np.all(np.isfinite(m)):
        findings.append(Finding("not-finite", "operator has NaN or infinite entries", where=where))
        return None
    return m


def _herm_dev(m):
    return float(np.abs(m - m.conj().T).max())


def validate_psd_matrix(m, where, findings, tol):
    dev = _herm_dev(m)
    if dev > 1e-10:
        findings.append(Finding("not-hermitian", f"|M - M^dag| = {dev:.3e}", "warning", dev, where))
    e = float(np.linalg.eigvalsh((m + m.conj().T) / 2)[0])
    if e < -tol:
        findings.append(Finding("not-psd", f"minimum eigenvalue {e:.3e}", magnitude=e, where=where))


def validate_povm_elements(elements, tol: Tolerances = DEFAULT_TOL, where=()) -> list[Finding]:
    """Check positivity and completeness. Never raises on malformed input."""
    findings: list[Finding] = []
    try:
        elements = list(elements)
    except TypeError:
        return [Finding("not-a-list", "POVM elements must be a sequence", where=where)]
    if not elements:
        return [Finding("empty", "POVM has no outcomes", where=where)]
    mats = []
    for a, e in enumerate(elements):
        m = _as_matrix(e, where + (a,), findings)
        if m is not None:
            mats.append(m)
    if len(mats) != len(elements):
        return findings
    sides = {m.shape[0] for m in mats}
    if len(sides) > 1:
        findings.append(Finding("dim-mismatch", f"elements have sides {sorted(sides)}", where=where))
        return findings
    for a, m in enumerate(mats):
        validate_psd_matrix(m, where + (a,), findings, tol.psd)
    d = mats[0].shape[0]
    dev = float(np.abs(sum(mats) - np.eye(d)).max())
    if dev > tol.completeness:
        findings.append(Finding("not-complete", f"|sum_a M_a - 1| = {dev:.3e}", magnitude=dev, where=where))
    return findings


class Povm:
    """Positive operators summing to the identity, one per outcome."""

    def __init__(self, elements, dims: Sequence[int] | None = None, tol: Tolerances = DEFAULT_TOL):
        findings = validate_povm_elements(elements, tol)
        _raise_on_errors(findings)
        mats = [np.asarray(e.matrix if isinstance(e, HermitianOperator) else e, dtype=complex) for e in elements]
        if dims is None:
            first = elements[0]
            dims = first.dims if isinstance(first, HermitianOperator) else (mats[0].shape[0],)
        self.elements = tuple(HermitianOperator(m, dims) for m in mats)
        self.dims = tuple(dims)

    @property
    def dim(self) -> int:
        return self.elements[0].side

    @property
    def outcomes(self) -> int:
        return len(self.elements)

    def arrays(self) -> list[np.ndarray]:
        return [e.matrix for e in self.elements]

    def __len__(self):
        return len(self.elements)

    def __getitem__(self, a):
        return self.elements[a]


def _pad_rows(rows, where_name):
    o = max(len(r) for r in rows)
    padded = []
    for x, r in enumerate(rows):
        r = list(r)
        if len(r) < o:
            warnings.warn(f"{where_name} row {x} has {len(r)} outcomes; zero-padding to {o}", stacklevel=3)
            d = np.asarray(r[0].matrix if isinstance(r[0], HermitianOperator) else r[0]).shape[0]
            r = r + [np.zeros((d, d), dtype=complex)] * (o - len(r))
        padded.append(r)
    return padded


def validate_measurement_set(elements, tol: Tolerances = DEFAULT_TOL) -> list[Finding]:
    findings = []
    try:
        rows = list(elements)
        if not rows:
            return [Finding("empty", "measurement set has no inputs")]
        for x, row in enumerate(rows):
            findings += validate_povm_elements(row, tol, where=(x,))
    except TypeError:
        return [Finding("not-a-list", "elements must be a list of lists")]
    if not _errors(findings):
        sides = {np.asarray(r[0].matrix if isinstance(r[0], HermitianOperator) else r[0]).shape[0] for r in rows}
        if len(sides) > 1:
            findings.append(Finding("dim-mismatch", f"measurements act on dimensions {sorted(sides)}"))
    return findings


class StandardMeasurementSet:
    """Family of POVMs M_{a|x} on one system, all with the same outcome count."""

    def __init__(self, elements, tol: Tolerances = DEFAULT_TOL):
        rows = [list(r) for r in elements]
        if rows and all(len(r) for r in rows):
            rows = _pad_rows(rows, "measurement set")
        _raise_on_errors(validate_measurement_set(rows, tol))
        self.povms = tuple(Povm(r, tol=tol) for r in rows)

    @property
    def dim(self) -> int:
        return self.povms[0].dim

    @property
    def inputs(self) -> int:
        return len(self.povms)

    @property
    def outcomes(self) -> int:
        return self.povms[0].outcomes

    def arrays(self) -> np.ndarray:
        """Elements as an array indexed [x, a, i, j]."""
        return np.array([p.arrays() for p in self.povms])

    def __getitem__(self, xa):
        x, a = xa
        return self.povms[x].elements[a]


def numerical_rank(states, tol=1e-8) -> int:
    if not states:
        return 0
    vecs = []
    for s in states:
        s = np.asarray(s)
        vecs.append(np.concatenate([s.real.ravel(), s.imag.ravel()]))
    sv = np.linalg.svd(np.array(vecs), compute_uv=False)
    return int(np.sum(sv > tol * max(1.0, sv[0])))


class QuantumInputSet:
    """Input states omega_x for one party."""

    def __init__(self, states, tol: Tolerances = DEFAULT_TOL, label: str | None = None):
        findings = []
        mats = []
        for x, s in enumerate(states):
            m = _as_matrix(s, (x,), findings)
            if m is None:
                continue
            validate_psd_matrix(m, (x,), findings, tol.psd)
            t = float(np.trace(m).real)
            if abs(t - 1) > tol.trace:
                findings.append(Finding("bad-trace", f"trace {t:.12g}", magnitude=t - 1, where=(x,)))
            mats.append(m)
        if not mats and not findings:
            findings.append(Finding("empty", "no input states"))
        if not _errors(findings) and len({m.shape for m in mats}) > 1:
            findings.append(Finding("dim-mismatch", "input states of differing dimension"))
        _raise_on_errors(findings)
        self.states = tuple(HermitianOperator(m) for m in mats)
        self.label = label
        self.rank = numerical_rank([s.matrix for s in self.states], tol.rank)

    @property
    def dim(self) -> int:
        return self.states[0].side

    @property
    def tomographically_complete(self) -> bool:
        return self.rank == self.dim ** 2

    @property
    def classical_orthogonal(self) -> bool:
        """Pure, mutually orthogonal states (behave like classical labels)."""
        for s in self.states:
            if abs(np.trace(s.matrix @ s.matrix).real - 1) > 1e-10:
                return False
        for s, t in itertools.combinations(self.states, 2):
            if abs(np.trace(s.matrix @ t.matrix)) > 1e-10:
                return False
        return True

    def __len__(self):
        return len(self.states)


def default_tomographic_inputs(d: int) -> QuantumInputSet:
    """Six Pauli eigenstates for a qubit; otherwise d^2 basis and superposition states."""
    d = int(d)
    if d < 2:
        raise DomainError(f"need d >= 2, got {d}")
    if d == 2:
        s = 1 / np.sqrt(2)
        kets = [[1, 0], [0, 1], [s, s], [s, -s], [s, 1j * s], [s, -1j * s]]
        return QuantumInputSet([proj(k) for k in kets], label="pauli-eigenstates")
    states = [proj(np.eye(d)[i]) for i in range(d)]
    for i, j in itertools.combinations(range(d), 2):
        e = np.eye(d)
        states.append(proj((e[i] + e[j]) / np.sqrt(2)))
        states.append(proj((e[i] + 1j * e[j]) / np.sqrt(2)))
    return QuantumInputSet(states, label=f"basis-and-superpositions-d{d}")


def classical_inputs(n: int) -> QuantumInputSet:
    return QuantumInputSet([proj(np.eye(n)[x]) for x in range(n)], label="classical")


class GeneralisedMeasurementSet:
    """M_{a|omega_x} = tr_{A'}[N_a (omega_x (x) 1_A)] for a parent POVM N on A'(x)A."""

    def __init__(self, parent: Povm, inputs: QuantumInputSet, tol: Tolerances = DEFAULT_TOL):
        if len(parent.dims) != 2:
            raise DimensionError(f"parent POVM must act on A' (x) A, got dims {parent.dims}")
        if parent.dims[0] != inputs.dim:
            raise DimensionError(f"input states have dim {inputs.dim}, parent expects {parent.dims[0]}")
        self.parent = parent
        self.inputs = inputs
        dA = parent.dims[1]
        out = []
        for w in inputs.states:
            big = np.kron(w.matrix, np.eye(dA))
            out.append([partial_trace(n.matrix @ big, [0], parent.dims) for n in parent.elements])
        findings = validate_measurement_set(out, tol)
        _raise_on_errors(findings)
        self._elements = np.array(out)

    @property
    def dim(self) -> int:
        return self.parent.dims[1]

    @property
    def ancilla_dim(self) -> int:
        return self.parent.dims[0]

    @property
    def inputs_count(self) -> int:
        return len(self.inputs)

    @property
    def outcomes(self) -> int:
        return self.parent.outcomes

    def arrays(self) -> np.ndarray:
        return self._elements.copy()

    def derived_set(self) -> StandardMeasurementSet:
        return StandardMeasurementSet(self._elements)


def controlled_povm(mset: StandardMeasurementSet) -> Povm:
    """N_a = sum_x |x><x| (x) M_{a|x} on an i_A-dimensional control register."""
    n = mset.inputs
    els = []
    for a in range(mset.outcomes):
        els.append(sum(np.kron(proj(np.eye(n)[x]), mset[x, a].matrix) for x in range(n)))
    return Povm(els, dims=(n, mset.dim))


def embed_standard(mset: StandardMeasurementSet) -> GeneralisedMeasurementSet:
    return GeneralisedMeasurementSet(controlled_povm(mset), classical_inputs(mset.inputs))


def _state(rho, dims=None):
    if isinstance(rho, HermitianOperator):
        return rho.matrix, rho.dims
    m = np.asarray(rho, dtype=complex)
    if dims is None:
        raise DimensionError("state given as array needs explicit dims")
    return m, tuple(dims)


def validate_state(rho, dims=None, tol: Tolerances = DEFAULT_TOL) -> list[Finding]:
    findings = []
    m = _as_matrix(rho, (), findings)
    if m is None:
        return findings
    if dims is not None and int(np.prod(dims)) != m.shape[0]:
        return [Finding("dim-mismatch", f"dims {tuple(dims)} vs side {m.shape[0]}")]
    validate_psd_matrix(m, (), findings, tol.psd)
    t = float(np.trace(m).real)
    if abs(t - 1) > tol.trace:
        findings.append(Finding("bad-trace", f"trace {t:.12g}", magnitude=t - 1))
    return findings


def make_state(matrix, dims, tol: Tolerances = DEFAULT_TOL) -> HermitianOperator:
    _raise_on_errors(validate_state(matrix, dims, tol))
    return HermitianOperator(matrix, dims)


def validate_assemblage(members, tol: Tolerances = DEFAULT_TOL) -> list[Finding]:
    findings = []
    try:
        rows = [list(r) for r in members]
    except TypeError:
        return [Finding("not-a-list", "members must be a list of lists")]
    if not rows or not all(rows):
        return [Finding("empty", "assemblage has no members")]
    mats = []
    for x, r in enumerate(rows):
        row = []
        for a, t in enumerate(r):
            m = _as_matrix(t, (x, a), findings)
            if m is not None:
                validate_psd_matrix(m, (x, a), findings, tol.psd)
            row.append(m)
        mats.append(row)
    if _errors(findings):
        return findings
    if len({m.shape for r in mats for m in r}) > 1:
        return findings + [Finding("dim-mismatch", "members of differing dimension")]
    margs = [sum(r) for r in mats]
    for x in range(1, len(margs)):
        dev = float(np.abs(margs[x] - margs[0]).max())
        if dev > tol.no_signalling:
            findings.append(Finding("signalling", f"sum_a tau_(a|{x}) differs from input 0 by {dev:.3e}",
                                    magnitude=dev, where=(x,)))
    t = float(np.trace(margs[0]).real)
    if abs(t - 1) > tol.trace:
        findings.append(Finding("bad-trace", f"tr rho_B = {t:.12g}", magnitude=t - 1))
    return findings


class Assemblage:
    """Unnormalised conditional states tau_{a|x} on Bob."""

    def __init__(self, members, tol: Tolerances = DEFAULT_TOL):
        rows = [list(r) for r in members] if members is not None else []
        if rows and all(rows):
            rows = _pad_rows(rows, "assemblage")
        _raise_on_errors(validate_assemblage(rows, tol))
        self._members = np.array([[np.asarray(t.matrix if isinstance(t, HermitianOperator) else t, dtype=complex)
                                   for t in r] for r in rows])
        self._members = (self._members + np.conj(np.swapaxes(self._members, -1, -2))) / 2

    @property
    def dim(self) -> int:
        return self._members.shape[-1]

    @property
    def inputs(self) -> int:
        return self._members.shape[0]

    @property
    def outcomes(self) -> int:
        return self._members.shape[1]

    def arrays(self) -> np.ndarray:
        return self._members.copy()

    def reduced_state(self) -> np.ndarray:
        """Bob's marginal, averaged over inputs."""
        return self._members.sum(axis=1).mean(axis=0)


def validate_behaviour(table, tol: Tolerances = DEFAULT_TOL) -> list[Finding]:
    try:
        p = np.asarray(table, dtype=float)
    except (TypeError, ValueError) as exc:
        return [Finding("not-numeric", f"cannot read table: {exc}")]
    if p.ndim != 4:
        return [Finding("bad-shape", f"behaviour table must have 4 indices (a,b,x,y), got {p.ndim}")]
    if not np.all(np.isfinite(p)):
        return [Finding("not-finite", "table has NaN or infinite entries")]
    findings = []
    if p.size and p.min() < -tol.nonneg:
        findings.append(Finding("negative", f"minimum entry {p.min():.3e}", magnitude=float(p.min())))
    norm = p.sum(axis=(0, 1))
    dev = float(np.abs(norm - 1).max())
    if dev > tol.completeness:
        findings.append(Finding("not-normalised", f"max |sum_ab p - 1| = {dev:.3e}", magnitude=dev))
    pa = p.sum(axis=1)  # a, x, y
    pb = p.sum(axis=0)  # b, x, y
    ns_a = float(np.abs(pa - pa[:, :, :1]).max())
    ns_b = float(np.abs(pb - pb[:, :1, :]).max())
    if ns_a > tol.no_signalling:
        findings.append(Finding("signalling-b-to-a", f"Alice marginal depends on y by {ns_a:.3e}", magnitude=ns_a))
    if ns_b > tol.no_signalling:
        findings.append(Finding("signalling-a-to-b", f"Bob marginal depends on x by {ns_b:.3e}", magnitude=ns_b))
    return findings


class Behaviour:
    """Joint conditional probabilities p(a, b | x, y), stored as table[a, b, x, y]."""

    def __init__(self, table, inputs_a: QuantumInputSet | None = None,
                 inputs_b: QuantumInputSet | None = None, tol: Tolerances = DEFAULT_TOL):
        _raise_on_errors(validate_behaviour(table, tol))
        self.table = np.asarray(table, dtype=float)
        self.inputs_a = inputs_a
        self.inputs_b = inputs_b
        oa, ob, ia, ib = self.table.shape
        for name, inp, n in (("Alice", inputs_a, ia), ("Bob", inputs_b, ib)):
            if inp is not None and len(inp) != n:
                raise DimensionError(f"{name} has {len(inp)} input states but the table has {n} inputs")

    @property
    def shape(self):
        return self.table.shape


def validate_distributed(elements, tol: Tolerances = DEFAULT_TOL) -> list[Finding]:
    findings = []
    try:
        rows = [list(r) for r in elements]
    except TypeError:
        return [Finding("not-a-list", "elements must be a list of lists")]
    if not rows or not all(rows) or len({len(r) for r in rows}) > 1:
        return [Finding("bad-shape", "elements must be a rectangular [a][b] array")]
    mats = []
    for a, r in enumerate(rows):
        for b, e in enumerate(r):
            m = _as_matrix(e, (a, b), findings)
            if m is not None:
                validate_psd_matrix(m, (a, b), findings, tol.psd)
                mats.append(m)
    if _errors(findings):
        return findings
    if len({m.shape for m in mats}) > 1:
        return [Finding("dim-mismatch", "elements of differing dimension")]
    dev = float(np.abs(sum(mats) - np.eye(mats[0].shape[0])).max())
    if dev > tol.completeness:
        findings.append(Finding("not-complete", f"|sum_ab M_ab - 1| = {dev:.3e}", magnitude=dev))
    return findings


class DistributedPovm:
    """Elements M_ab on V (x) W indexed [a][b]."""

    def __init__(self, elements, dims: Sequence[int], tol: Tolerances = DEFAULT_TOL):
        _raise_on_errors(validate_distributed(elements, tol))
        arr = np.array([[np.asarray(e.matrix if isinstance(e, HermitianOperator) else e, dtype=complex)
                         for e in r] for r in elements])
        if int(np.prod(dims)) != arr.shape[-1] or len(dims) != 2:
            raise DimensionError(f"dims {tuple(dims)} do not match operator side {arr.shape[-1]}")
        self._elements = (arr + np.conj(np.swapaxes(arr, -1, -2))) / 2
        self.dims = tuple(int(d) for d in dims)

    @property
    def outcomes(self):
        return self._elements.shape[:2]

    def arrays(self) -> np.ndarray:
        return self._elements.copy()

    def bob_marginals(self) -> np.ndarray:
        """C_b = sum_a M_ab."""
        return self._elements.sum(axis=0)

    def alice_marginals(self) -> np.ndarray:
        return self._elements.sum(axis=1)


def teleportation_assemblage(gset: GeneralisedMeasurementSet, rho, dims=None) -> Assemblage:
    r, rd = _state(rho, dims)
    if len(rd) != 2 or rd[0] != gset.dim:
        raise DimensionError(f"state dims {rd} inconsistent with measured system of dim {gset.dim}")
    dB = rd[1]
    members = []
    for row in gset.arrays():
        members.append([partial_trace(np.kron(m, np.eye(dB)) @ r, [0], rd) for m in row])
    return Assemblage(members)


def buscemi_behaviour(gset_a: GeneralisedMeasurementSet, gset_b: GeneralisedMeasurementSet, rho,
                      dims=None) -> Behaviour:
    """p(a,b|x,y) = tr[(N_a (x) N_b)(omega_x (x) rho (x) zeta_y)] from the parent POVMs."""
    r, rd = _state(rho, dims)
    if len(rd) != 2 or rd[0] != gset_a.dim or rd[1] != gset_b.dim:
        raise DimensionError(f"state dims {rd} inconsistent with parties ({gset_a.dim}, {gset_b.dim})")
    na = np.array(gset_a.parent.arrays())
    nb = np.array(gset_b.parent.arrays())
    dA1, dA = gset_a.parent.dims
    dB, dB1 = gset_b.parent.dims
    # Bob's parent is stored on B' (x) B; reorder to B (x) B' for the contraction below
    nb = np.array([permuted(m, (dB, dB1)) for m in nb])
    dB, dB1 = dB1, dB
    oa, ob = len(na), len(nb)
    ia, ib = len(gset_a.inputs), len(gset_b.inputs)
    table = np.zeros((oa, ob, ia, ib))
    for x, w in enumerate(gset_a.inputs.states):
        for y, z in enumerate(gset_b.inputs.states):
            big = np.kron(np.kron(w.matrix, r), z.matrix)
            for a in range(oa):
                for b in range(ob):
                    table[a, b, x, y] = np.trace(np.kron(na[a], nb[b]) @ big).real
    return Behaviour(table, gset_a.inputs, gset_b.inputs)


def permuted(m, dims):
    """Swap the two factors of an operator on dims[0] (x) dims[1]."""
    d0, d1 = dims
    return m.reshape(d0, d1, d0, d1).transpose(1, 0, 3, 2).reshape(d0 * d1, d0 * d1)


def distributed_povm(Ma: Povm, Mb: Povm, rho, dims=None) -> DistributedPovm:
    """M_ab = tr_AB[(M_a (x) M_b)(1_V (x) rho (x) 1_W)] with M_a on V(x)A and M_b on B(x)W."""
    r, rd = _state(rho, dims)
    dV, dA = Ma.dims
    dB, dW = Mb.dims
    if rd != (dA, dB):
        raise DimensionError(f"state dims {rd} do not match (A, B) = ({dA}, {dB})")
    big_state = np.kron(np.kron(np.eye(dV), r), np.eye(dW))
    dims4 = (dV, dA, dB, dW)
    out = [[partial_trace(np.kron(ma.matrix, mb.matrix) @ big_state, [1, 2], dims4)
            for mb in Mb.elements] for ma in Ma.elements]
    return DistributedPovm(out, (dV, dW))


def behaviour_from_distributed(dpovm: DistributedPovm, inputs_a: QuantumInputSet,
                               inputs_b: QuantumInputSet) -> Behaviour:
    """p(a,b|x,y) = tr[M_ab (omega_x (x) zeta_y)]."""
    M = dpovm.arrays()
    ws = np.array([s.matrix for s in inputs_a.states])
    zs = np.array([s.matrix for s in inputs_b.states])
    prods = np.einsum("xij,ykl->xyikjl", ws, zs).reshape(len(ws), len(zs), M.shape[-1], M.shape[-1])
    table = np.einsum("abij,xyji->abxy", M, prods).real
    return Behaviour(table, inputs_a, inputs_b)


def deterministic_strategies(inputs: int, outcomes: int):
    """All maps x -> a, in lexicographic order."""
    return list(itertools.product(range(outcomes), repeat=inputs))


def strategy_table(inputs: int, outcomes: int) -> np.ndarray:
    """D[lam, a, x] = 1 if strategy lam outputs a on input x."""
    lams = deterministic_strategies(inputs, outcomes)
    D = np.zeros((len(lams), outcomes, inputs))
    for k, lam in enumerate(lams):
        for x, a in enumerate(lam):
            D[k, a, x] = 1.0
    return D
