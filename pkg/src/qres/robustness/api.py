"""Entry points that pick a program for each quantifier and attach witnesses and diagnostics."""
from __future__ import annotations

import numpy as np

from ..errors import DimensionError, DomainError, SolverError, ValidationError
from ..models import (Assemblage, Behaviour, DistributedPovm, GeneralisedMeasurementSet, Povm,
                      QuantumInputSet, classical_inputs)
from ..operators import choi_teleportation, partial_trace
from .exact import _settings, behaviour_lp, rob_incompat_standard, rob_teleport_classical_inputs
from .relax import buscemi_ppt, incompat_generalised_ppt, teleport_ppt
from .results import RobustnessResult, clamp
from .seesaw import (BehaviourSeesaw, BuscemiSeesaw, GeneralisedSeesaw, TeleportSeesaw, behaviour_decomposition,
                     behaviour_seesaw_residual, buscemi_decomposition, buscemi_residual, generalised_decomposition,
                     generalised_residual, pick_best, run_restarts, teleport_decomposition, teleport_residual)
from .witness import (assemblage_witness_to_choi, check_buscemi_witness, check_teleport_witness)

MODES = ("exact", "ppt_lower", "seesaw_upper")


def _mode(mode, allowed=MODES):
    if mode not in allowed:
        raise ValidationError(f"unknown mode {mode!r}; expected one of {', '.join(allowed)}")
    return mode


def _state_parts(rho, dims):
    m = getattr(rho, "matrix", None)
    rd = tuple(getattr(rho, "dims", ()) or ()) if m is not None else None
    if m is None:
        m = np.asarray(rho, dtype=complex)
        rd = tuple(dims) if dims is not None else None
    if rd is None or len(rd) != 2:
        raise DimensionError("the shared state must be bipartite A (x) B with explicit dims")
    return m, rd


def _run_seesaw(runner, settings, what):
    outcomes = run_restarts(runner, settings.restarts, settings.seed, settings.jobs)
    best, info = pick_best(outcomes)
    if best is None:
        raise SolverError(f"{what}: no restart produced a feasible decomposition",
                          {"restarts": settings.restarts})
    info["lambda_card"] = runner.card
    return best, info


def controlled_blocks(J: np.ndarray, dims, tol=1e-12):
    """Blocks J_a[x, x] if every J_a is block diagonal in the computational basis of V', else None."""
    dV, dB = dims
    o = J.shape[0]
    J5 = J.reshape(o, dV, dB, dV, dB)
    off = J5.copy()
    for x in range(dV):
        off[:, x, :, x, :] = 0
    if np.abs(off).max(initial=0) > tol:
        return None
    return np.array([[J5[a, x, :, x, :] for a in range(o)] for x in range(dV)])


def controlled_decomposition(dec, dV):
    """Choi-form decomposition from an assemblage one of the diagonal blocks.

    N_{a|lam} = sum_x D_lam(a|x) |x><x|, states lhs_lam / d_V and noise
    K_a = sum_x |x><x| (x) noise_{a|x} / d_V.
    """
    D, lhs, noise = dec["strategies"], dec["lhs"], dec["noise"]
    i, o, dB = noise.shape[0], noise.shape[1], noise.shape[-1]
    N = np.zeros((len(D), o, dV, dV), dtype=complex)
    for x in range(i):
        N[:, :, x, x] = D[:, :, x]
    K = np.zeros((o, dV * dB, dV * dB), dtype=complex)
    for x in range(i):
        K[:, x * dB:(x + 1) * dB, x * dB:(x + 1) * dB] = noise[x] / dV
    S = lhs / dV
    F = np.einsum("laij,lkm->aikjm", N, S).reshape(o, dV * dB, dV * dB)
    return {"r": dec["r"], "povms": N, "states": S, "free": F, "noise": K, "assemblage": dec}


def rob_teleport_choi(Ma: Povm, rho, mode: str = "ppt_lower", settings=None, dims=None,
                      inputs: QuantumInputSet | None = None) -> RobustnessResult:
    """Robustness of the teleportation Choi operators J_a built from Alice's POVM on V (x) A and rho on A (x) B.

    ``exact`` applies when J is block diagonal on V' (Alice's POVM is
    classically controlled): dephasing V' maps the free cone and the noise
    set into themselves and fixes J, so the problem reduces to the
    assemblage of the diagonal blocks.
    """
    settings = _settings(settings)
    _mode(mode)
    r, rd = _state_parts(rho, dims)
    J = np.array([j.matrix for j in choi_teleportation(Ma, r, dims_rho=rd)])
    dV, dB = Ma.dims[0], rd[1]
    rho_b = partial_trace(r, [0], rd)
    tdims = (dV, dB)

    if mode == "exact":
        blocks = controlled_blocks(J, tdims)
        if blocks is None:
            raise DomainError("exact mode needs a classically controlled POVM (block-diagonal Choi operators)")
        res = rob_teleport_classical_inputs(Assemblage(dV * blocks), settings)
        w = check_teleport_witness(assemblage_witness_to_choi(res.witness), J, rho_b, settings.samples,
                                   settings.seed)
        res.witness = w
        res.program = "teleport-choi-controlled-sdp"
        res.decomposition = controlled_decomposition(res.decomposition, dV)
        res.diagnostics["decomposition_residual"] = teleport_residual(J, rho_b, tdims, res.decomposition)
        res.diagnostics["witness_gap"] = abs(w.certified_value - res.value)
        return res

    if mode == "ppt_lower":
        value, w, diag = teleport_ppt(J, rho_b, tdims, settings, inputs)
        w = check_teleport_witness(w, J, rho_b, settings.samples, settings.seed)
        diag["witness_value"] = w.certified_value
        return RobustnessResult(value, "lower", "teleport-ppt", w, None, diag)

    card = settings.lambda_card or J.shape[0] * (dV * dB) ** 2 + 1
    runner = TeleportSeesaw(J, rho_b, tdims, card, settings)
    best, info = _run_seesaw(runner, settings, "teleportation see-saw")
    dec = teleport_decomposition(J, rho_b, tdims, best.payload)
    info["decomposition_residual"] = teleport_residual(J, rho_b, tdims, dec)
    value = clamp(best.value, info, "upper")
    return RobustnessResult(value, "upper", "teleport-seesaw", None, dec, info)


def rob_buscemi(dpovm: DistributedPovm, mode: str = "ppt_lower", settings=None,
                inputs: QuantumInputSet | None = None) -> RobustnessResult:
    """Robustness of a distributed POVM M_ab on V (x) W against product-measurement models."""
    settings = _settings(settings)
    _mode(mode, ("ppt_lower", "seesaw_upper"))
    M = dpovm.arrays()
    dims = dpovm.dims
    if mode == "ppt_lower":
        value, w, diag = buscemi_ppt(M, dims, settings, inputs)
        w = check_buscemi_witness(w, M, settings.samples, settings.seed)
        diag["witness_value"] = w.certified_value
        return RobustnessResult(value, "lower", "buscemi-ppt", w, None, diag)
    oa, ob = M.shape[:2]
    card = settings.lambda_card or oa * ob * (dims[0] * dims[1]) ** 2 + 1
    runner = BuscemiSeesaw(M, dims, card, settings)
    best, info = _run_seesaw(runner, settings, "Buscemi see-saw")
    dec = buscemi_decomposition(M, dims, best.payload)
    info["decomposition_residual"] = buscemi_residual(M, dims, dec)
    value = clamp(best.value, info, "upper")
    return RobustnessResult(value, "upper", "buscemi-seesaw", None, dec, info)


def _is_classical(inp: QuantumInputSet | None) -> bool:
    return inp is None or inp.classical_orthogonal


def rob_behaviour(b: Behaviour, inputs_a: QuantumInputSet | None = None, inputs_b: QuantumInputSet | None = None,
                  unconstrained_pmf: bool = False, settings=None) -> RobustnessResult:
    """Robustness of p(a,b|x,y) against local models.

    Inputs default to those stored on the behaviour. With classical inputs
    on both sides, or with ``unconstrained_pmf``, the local responses are
    arbitrary distributions and the exact LP applies. Otherwise responses
    must come from POVMs on the input states and a see-saw gives an upper
    bound.
    """
    settings = _settings(settings)
    inputs_a = inputs_a if inputs_a is not None else b.inputs_a
    inputs_b = inputs_b if inputs_b is not None else b.inputs_b
    oa, ob, ia, ib = b.table.shape
    for name, inp, n in (("Alice", inputs_a, ia), ("Bob", inputs_b, ib)):
        if inp is not None and len(inp) != n:
            raise DimensionError(f"{name} has {len(inp)} input states but the table has {n} inputs")
    if unconstrained_pmf or (_is_classical(inputs_a) and _is_classical(inputs_b)):
        res = behaviour_lp(b.table, settings)
        res.diagnostics["reading"] = "unconstrained-pmf" if unconstrained_pmf else "classical-inputs"
        return res
    inputs_a = inputs_a or classical_inputs(ia)
    inputs_b = inputs_b or classical_inputs(ib)
    card = settings.lambda_card or oa * ob * ia * ib + 1
    runner = BehaviourSeesaw(b.table, inputs_a, inputs_b, card, settings)
    best, info = _run_seesaw(runner, settings, "behaviour see-saw")
    wa = np.array([s.matrix for s in inputs_a.states])
    wb = np.array([s.matrix for s in inputs_b.states])
    dec = behaviour_decomposition(b.table, wa, wb, best.payload)
    info["decomposition_residual"] = behaviour_seesaw_residual(b.table, wa, wb, dec)
    info["reading"] = "realisable-responses"
    value = clamp(best.value, info, "upper")
    return RobustnessResult(value, "upper", "behaviour-seesaw", None, dec, info)


def rob_incompat_generalised(gset: GeneralisedMeasurementSet, mode: str = "ppt_lower",
                             settings=None) -> RobustnessResult:
    """Robustness of a measurement set with quantum inputs.

    With orthogonal pure inputs the set is a relabelled standard set and
    every mode returns the exact SDP value.
    """
    settings = _settings(settings)
    _mode(mode)
    if gset.inputs.classical_orthogonal:
        res = rob_incompat_standard(gset.derived_set(), settings)
        res.diagnostics["route"] = "orthogonal inputs reduce to the standard set"
        return res
    if mode == "exact":
        raise DomainError("exact mode needs orthogonal pure inputs; use ppt_lower or seesaw_upper")
    M = gset.arrays()
    dims = gset.parent.dims
    if mode == "ppt_lower":
        value, diag = incompat_generalised_ppt(dims, gset.inputs, M, settings)
        return RobustnessResult(value, "lower", "incompat-generalised-ppt", None, None, diag)
    card = settings.lambda_card or gset.outcomes * (dims[0] * dims[1]) ** 2 + 1
    runner = GeneralisedSeesaw(M, gset.inputs, dims, card, settings)
    best, info = _run_seesaw(runner, settings, "generalised incompatibility see-saw")
    dec = generalised_decomposition(M, gset.inputs, dims, best.payload)
    info["decomposition_residual"] = generalised_residual(M, gset.inputs, dims, dec)
    value = clamp(best.value, info, "upper")
    return RobustnessResult(value, "upper", "incompat-generalised-seesaw", None, dec, info)
