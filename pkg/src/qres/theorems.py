"""Executable checks of the equalities between incompatibility, teleportation and
Buscemi-nonlocality robustness, built from explicit solution maps and witnesses."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError, QresError, WitnessRejected
from .models import (Assemblage, Povm, StandardMeasurementSet, controlled_povm, distributed_povm)
from .operators import (hw_bell_povm, linear_map_apply, max_entangled, partial_trace, partial_transpose,
                        transpose_trick)
from .robustness import (rob_incompat_standard, rob_teleport_choi, rob_teleport_classical_inputs,
                         check_buscemi_witness, witness_lift)
from .robustness.api import controlled_blocks
from .robustness.exact import _settings, assemblage_residual
from .robustness.seesaw import buscemi_residual
from .sampling import random_povm, random_pure, rng_from

VALUE_TOL = 1e-6
MAP_TOL = 1e-7
POSITIVE = 1e-6
CROSSING = 1e-7
CORPUS_SEEDS = tuple(range(7001, 7021))


@dataclass
class VerificationReport:
    result_id: str
    instances: list = field(default_factory=list)
    tolerances: dict = field(default_factory=lambda: {"value": VALUE_TOL, "map_residual": MAP_TOL})
    seeds: dict = field(default_factory=dict)
    not_applicable: bool = False
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(i["passed"] for i in self.instances)

    def extend(self, other: "VerificationReport"):
        self.instances.extend(other.instances)
        self.not_applicable = self.not_applicable or other.not_applicable
        self.notes.extend(n for n in other.notes if n not in self.notes)
        self.seeds.update(other.seeds)
        return self

    def to_dict(self) -> dict:
        return {"result_id": self.result_id, "passed": self.passed, "not_applicable": self.not_applicable,
                "tolerances": dict(self.tolerances), "seeds": dict(self.seeds), "notes": list(self.notes),
                "instances": [{k: v for k, v in i.items() if k != "artifacts"} for i in self.instances]}

    def to_text(self) -> str:
        lines = [f"{self.result_id}: {'PASS' if self.passed else 'FAIL'}"
                 + (" (not applicable)" if self.not_applicable else "")]
        for i in self.instances:
            lhs, rhs = i["lhs"], i["rhs"]
            lines.append(f"  [{'pass' if i['passed'] else 'FAIL'}] {i['instance']}: "
                         f"{lhs['quantity']}={_fmt(lhs)} vs {rhs['quantity']}={_fmt(rhs)} "
                         f"deviation={i['deviation']:.3e}")
            for n in i.get("notes", []):
                lines.append(f"      {n}")
        lines.extend(f"  note: {n}" for n in self.notes)
        return "\n".join(lines)


def _fmt(side):
    if side.get("value") is None:
        return "n/a"
    return f"{side['value']:.10g} ({side['bound']})"


def _side(quantity, value, bound, **extra):
    out = {"quantity": quantity, "value": None if value is None else float(value), "bound": bound}
    out.update(extra)
    return out


def _report(rid, inst, settings, tol):
    return VerificationReport(rid, [inst], {"value": tol, "map_residual": MAP_TOL}, {"seed": settings.seed})


def _instance(label, lhs, rhs, deviation, passed, checks=None, notes=None, artifacts=None):
    rec = {"instance": label, "lhs": lhs, "rhs": rhs, "deviation": float(deviation), "passed": bool(passed),
           "checks": checks or {}, "notes": notes or []}
    if artifacts:
        rec["artifacts"] = artifacts
    return rec


# ---------------------------------------------------------------------------
# solution maps

def incompat_to_assemblage(dec, rho, dims):
    """Push an incompatibility decomposition through the shared state.

    p(lam) sigma_lam = tr_A[(G_lam (x) 1) rho] and the noise assemblage
    tr_A[(N_{a|x} (x) 1) rho]; the strategies are unchanged.
    """
    dA, dB = dims
    eye = np.eye(dB)

    def push(g):
        return partial_trace(np.kron(g, eye) @ rho, [0], dims)

    lhs = np.array([push(g) for g in dec["parent"]])
    noise = np.array([[push(n) for n in row] for row in dec["noise"]])
    return {"r": dec["r"], "strategies": dec["strategies"], "lhs": lhs, "noise": noise}


def teleport_to_buscemi(dec, bob, dims):
    """Map a Choi-form teleportation decomposition to a distributed-POVM one for Bob's POVM.

    Each operator X on V'(x)B goes to d_V (tr_B[(X (x) 1_W)(1 (x) M_b)])^{T_V}.
    Alice's responses become N_{a|lam}^T and Bob's weighted responses
    d_V tr_B[(sigma~_lam (x) 1) M_b].
    """
    dV, dB = dims
    Mb = np.array([np.asarray(getattr(m, "matrix", m)) for m in bob])
    dW = Mb.shape[-1] // dB
    N, S, K = dec["povms"], dec["states"], dec["noise"]

    def lift(x, m):
        return dV * partial_transpose(linear_map_apply(x, m, (dV, dB), (dB, dW)), 0, (dV, dW))

    E = np.swapaxes(N, -1, -2)
    Dw = np.array([[dV * partial_trace(np.kron(s, np.eye(dW)) @ m, [0], (dB, dW)) for m in Mb] for s in S])
    noise = np.array([[lift(k, m) for m in Mb] for k in K])
    p = np.array([dV * np.trace(s).real for s in S])
    return {"r": dec["r"], "p_lambda": p, "alice_povms": E, "bob_weighted": Dw, "noise": noise}


# ---------------------------------------------------------------------------
# result checks

def transpose_assemblage(mset: StandardMeasurementSet) -> np.ndarray:
    """tau_{a|x} = M_{a|x}^T / d, the assemblage of the set on a maximally entangled pair."""
    d = mset.dim
    return np.array([[transpose_trick(mset[x, a].matrix, d) for a in range(mset.outcomes)]
                     for x in range(mset.inputs)])


def verify_result1(mset: StandardMeasurementSet, settings=None, label="set", tol: float = VALUE_TOL) -> VerificationReport:
    """R_I of the set against R_T of its assemblage on phi+, plus the forward solution map."""
    settings = _settings(settings)
    ri = rob_incompat_standard(mset, settings)
    tau = transpose_assemblage(mset)
    rt = rob_teleport_classical_inputs(Assemblage(tau), settings)
    d = mset.dim
    mapped = incompat_to_assemblage(ri.decomposition, max_entangled(d).matrix, (d, d))
    residual = assemblage_residual(tau, ri.value, mapped)
    dev = abs(ri.value - rt.value)
    ok = dev <= tol and residual <= MAP_TOL
    inst = _instance(label, _side("R_I", ri.value, "exact"), _side("R_T", rt.value, "exact"), dev, ok,
                     {"mapped_residual": residual, "hygiene": _hygiene(ri, rt)})
    return _report("result1", inst, settings, tol)


def _hygiene(*results):
    return [{"program": r.program, "residual_primal": r.diagnostics.get("residual_primal"),
             "residual_dual": r.diagnostics.get("residual_dual"), "gap": r.diagnostics.get("gap")}
            for r in results]


def _teleport_side(Ma, rho, settings):
    """Exact value when Alice's POVM is controlled, otherwise a PPT/see-saw bracket."""
    r, rd = np.asarray(getattr(rho, "matrix", rho)), tuple(rho.dims)
    from .operators import choi_teleportation

    J = np.array([j.matrix for j in choi_teleportation(Ma, r, dims_rho=rd)])
    if controlled_blocks(J, (Ma.dims[0], rd[1])) is not None:
        ex = rob_teleport_choi(Ma, rho, "exact", settings)
        return ex, ex, ex
    lo = rob_teleport_choi(Ma, rho, "ppt_lower", settings)
    up = rob_teleport_choi(Ma, rho, "seesaw_upper", settings)
    return None, lo, up


def verify_result2(Ma: Povm, rho, bob_povm: Povm | None = None, settings=None, label="pair",
                   tol: float = VALUE_TOL) -> VerificationReport:
    """R_T of (Ma, rho) against the Buscemi robustness reachable with Bob's Bell measurement.

    Upper side: the teleportation decomposition is mapped to a distributed
    POVM decomposition with the same r. Lower side: the teleportation
    witness is lifted and re-certified on the distributed POVM.
    """
    settings = _settings(settings)
    dV = Ma.dims[0]
    dB = rho.dims[1]
    if bob_povm is not None:
        if bob_povm.dims[0] != dB:
            raise DimensionError(f"Bob's POVM acts on {bob_povm.dims[0]} but B has dimension {dB}")
        if bob_povm.outcomes != dB ** 2:
            raise DimensionError(f"Bob's POVM has {bob_povm.outcomes} outcomes; the lift needs o_B = d^2 = {dB ** 2}")
    bell = Povm(hw_bell_povm(dB), dims=(dB, dB))
    bob = bob_povm or bell

    exact, lo, up = _teleport_side(Ma, rho, settings)
    notes = []
    checks = {"ob_over_d2": bob.outcomes / dB ** 2}

    M_map = distributed_povm(Ma, bob, rho).arrays()
    mapped = teleport_to_buscemi(up.decomposition, bob.elements, (dV, dB))
    checks["mapped_residual"] = buscemi_residual(M_map, (dV, bob.dims[1]), mapped)
    upper_bn = up.value

    M_bell = distributed_povm(Ma, bell, rho)
    # the trace bound only normalises witnesses of uniform-marginal objects
    rho_b = partial_trace(np.asarray(rho.matrix), [0], rho.dims)
    uniform = bool(np.abs(rho_b - np.eye(dB) / dB).max() <= 1e-12)
    checks["uniform_marginal"] = uniform
    try:
        lifted = witness_lift(lo.witness, samples=settings.samples, seed=settings.seed,
                              require_trace_bound=uniform)
        lifted = check_buscemi_witness(lifted, M_bell.arrays(), settings.samples, settings.seed,
                                       require_trace_bound=uniform)
        lower_bn, valid = lifted.certified_value, bool(lifted.valid)
        checks["lifted_witness"] = {k: v for k, v in lifted.evidence.items() if not isinstance(v, np.ndarray)}
    except WitnessRejected as exc:
        lifted, lower_bn, valid = None, float("nan"), False
        notes.append(f"lift rejected: {exc}")
    checks["witness_valid"] = valid
    checks["teleport_witness_value"] = lo.witness.certified_value

    rt_side = (_side("R_T", exact.value, "exact") if exact is not None else
               _side("R_T", lo.value, "bracket", lower=lo.value, upper=up.value))
    bn_side = _side("R_BN", lower_bn, "certified-lower", upper=upper_bn)
    map_ok = checks["mapped_residual"] <= MAP_TOL
    if exact is not None:
        dev = abs(lower_bn - exact.value)
        ok = valid and map_ok and dev <= tol
    else:
        # both R_T and R_BN lie in [witness value, see-saw value]; the lift must reproduce the witness value
        dev = abs(lower_bn - lo.witness.certified_value)
        ok = valid and map_ok and dev <= tol and lower_bn <= upper_bn + tol
        checks["bracket_width"] = upper_bn - lower_bn
    artifacts = {"witness": lifted, "distributed_povm": M_bell} if lifted is not None else None
    inst = _instance(label, bn_side, rt_side, dev, ok, checks, notes, artifacts)
    return _report("result2", inst, settings, tol)


def phi_plus_state(d: int):
    return max_entangled(d)


def verify_result3(mset: StandardMeasurementSet, settings=None, label="set", tol: float = VALUE_TOL) -> VerificationReport:
    """Composition: R_I = R_T (result 1) and R_T = certified R_BN with the embedded set (result 2)."""
    settings = _settings(settings)
    r1 = verify_result1(mset, settings, label, tol)
    r2 = verify_result2(controlled_povm(mset), phi_plus_state(mset.dim), settings=settings, label=label, tol=tol)
    a, b = r1.instances[0], r2.instances[0]
    ri, bn = a["lhs"]["value"], b["lhs"]["value"]
    dev = abs(ri - bn) if np.isfinite(bn) else float("inf")
    ok = a["passed"] and b["passed"] and dev <= tol
    inst = _instance(label, _side("R_BN", bn, "certified-lower"), _side("R_I", ri, "exact"), dev, ok,
                     {"result1": a["checks"], "result2": b["checks"], "R_T": a["rhs"]["value"]},
                     artifacts=b.get("artifacts"))
    return _report("result3", inst, settings, tol)


def verify_result4(mset: StandardMeasurementSet, settings=None, label="set", tol: float = VALUE_TOL,
                   threshold: float = POSITIVE) -> VerificationReport:
    """Incompatible set -> certified Buscemi nonlocality of the same size, with Bell-measurement Bob."""
    settings = _settings(settings)
    ri = rob_incompat_standard(mset, settings)
    if ri.value <= threshold:
        inst = _instance(label, _side("R_BN", None, "n/a"), _side("R_I", ri.value, "exact"), 0.0, True,
                         notes=["not applicable: compatible (R_I ~ 0)"])
        out = _report("result4", inst, settings, tol)
        out.not_applicable = True
        out.notes.append("not applicable: compatible (R_I ~ 0)")
        return out
    r2 = verify_result2(controlled_povm(mset), phi_plus_state(mset.dim), settings=settings, label=label, tol=tol)
    b = r2.instances[0]
    bn = b["lhs"]["value"]
    dev = abs(bn - ri.value) if np.isfinite(bn) else float("inf")
    ok = bool(b["checks"].get("witness_valid")) and bn > threshold and dev <= tol
    inst = _instance(label, _side("R_BN", bn, "certified-lower"), _side("R_I", ri.value, "exact"), dev, ok,
                     {"witness_valid": b["checks"].get("witness_valid"), "positive_threshold": threshold},
                     artifacts=b.get("artifacts"))
    return _report("result4", inst, settings, tol)


VERIFIERS = {1: verify_result1, 3: verify_result3, 4: verify_result4}


def _verify_one(job):
    rid, label, obj, settings, tol = job
    try:
        if rid == 2:
            Ma, rho = obj
            return verify_result2(Ma, rho, settings=settings, label=label, tol=tol)
        return VERIFIERS[rid](obj, settings, label, tol)
    except QresError as exc:
        inst = _instance(label, _side("lhs", None, "n/a"), _side("rhs", None, "n/a"), float("inf"), False,
                         notes=[f"{type(exc).__name__}: {exc}"])
        return VerificationReport(f"result{rid}", [inst])


def verify_sets(rid: int, sets, settings=None, jobs: int = 1, tol: float = VALUE_TOL) -> VerificationReport:
    """Run one result check over labelled instances; the report keeps the input order.

    Instances are measurement sets, or (Ma, rho) pairs for result 2.
    """
    settings = _settings(settings)
    work = [(rid, label, m, settings, tol) for label, m in sets]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            parts = list(ex.map(_verify_one, work))
    else:
        parts = [_verify_one(w) for w in work]
    out = VerificationReport(f"result{rid}", [], {"value": tol, "map_residual": MAP_TOL}, {"seed": settings.seed})
    for p in parts:
        out.extend(p)
    return out


# ---------------------------------------------------------------------------
# families, thresholds and the regression corpus

PAULI = {"x": np.array([[0, 1], [1, 0]], dtype=complex), "y": np.array([[0, -1j], [1j, 0]]),
         "z": np.diag([1.0, -1.0]).astype(complex)}


def qubit_set(directions, t=1.0) -> StandardMeasurementSet:
    """Two-outcome qubit measurements (1 +- t n.sigma)/2 along the given Bloch directions."""
    rows = []
    for n in directions:
        s = sum(c * PAULI[k] for c, k in zip(n, "xyz"))
        rows.append([(np.eye(2) + t * s) / 2, (np.eye(2) - t * s) / 2])
    return StandardMeasurementSet(rows)


def noisy_xz(t: float) -> StandardMeasurementSet:
    return qubit_set([(1, 0, 0), (0, 0, 1)], t)


def noisy_trine(t: float) -> StandardMeasurementSet:
    """Three measurements in the X-Z plane with axes 120 degrees apart."""
    angles = 2 * np.pi * np.arange(3) / 3
    return qubit_set([(np.sin(a), 0, np.cos(a)) for a in angles], t)


FAMILIES = {"xz": noisy_xz, "trine": noisy_trine}


def compatibility_threshold(family, lo: float = 0.0, hi: float = 1.0, settings=None, width: float = 1e-4,
                            crossing: float = CROSSING, return_bracket: bool = False):
    """Bisect the noise parameter where R_I of ``family(t)`` leaves zero.

    Needs R_I(lo) <= 1e-8 and R_I(hi) > 1e-6. Returns the bracket midpoint,
    or (lo, hi) with ``return_bracket``.
    """
    settings = _settings(settings)

    def rob(t):
        return rob_incompat_standard(family(t), settings).value

    if not lo < hi:
        raise DomainError(f"empty bracket [{lo}, {hi}]")
    r_lo, r_hi = rob(lo), rob(hi)
    if r_lo > 1e-8 or r_hi <= 1e-6:
        raise DomainError(f"invalid bracket: R_I({lo})={r_lo:.3e} must be <= 1e-8 and "
                          f"R_I({hi})={r_hi:.3e} must be > 1e-6")
    while hi - lo > width:
        mid = (lo + hi) / 2
        if rob(mid) > crossing:
            hi = mid
        else:
            lo = mid
    return (lo, hi) if return_bracket else (lo + hi) / 2


def corpus_set(seed: int, index: int) -> StandardMeasurementSet:
    rng = rng_from(seed)
    inputs = 2 + index % 2
    kind = "projective" if index % 4 < 2 else "mixed"
    return StandardMeasurementSet([random_povm(2, 2, rng, kind) for _ in range(inputs)])


def regression_corpus(seeds=CORPUS_SEEDS):
    """The X/Z pair followed by seeded random qubit sets with 2 or 3 two-outcome measurements."""
    out = [("xz", noisy_xz(1.0))]
    out.extend((f"seed-{s}", corpus_set(s, k)) for k, s in enumerate(seeds))
    return out


def embedded_pairs(sets):
    """(controlled POVM, phi+) for each labelled set, the instances of the Bell-measurement lift."""
    return [(label, (controlled_povm(m), phi_plus_state(m.dim))) for label, m in sets]


def qutrit_smoke_set() -> StandardMeasurementSet:
    """Computational and Fourier bases on a qutrit."""
    w = np.exp(2j * np.pi / 3)
    f = np.array([[w ** (j * k) for k in range(3)] for j in range(3)]) / np.sqrt(3)
    comp = [np.diag(np.eye(3)[k]).astype(complex) for k in range(3)]
    four = [np.outer(f[:, k], f[:, k].conj()) for k in range(3)]
    return StandardMeasurementSet([comp, four])


def random_pair(seed: int, dV: int = 2, dA: int = 2, dB: int = 2, outcomes: int = 2):
    """Seeded (Ma, rho) for the teleportation/Buscemi comparison."""
    from .models import make_state

    rng = rng_from(seed)
    Ma = Povm(random_povm(dV * dA, outcomes, rng, "projective"), dims=(dV, dA))
    rho = make_state(random_pure(dA * dB, rng), (dA, dB))
    return Ma, rho
