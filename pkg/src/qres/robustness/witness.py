"""Recomputation and repair of dual witnesses, and the Bell-measurement lift.

Every check here recomputes its conditions from the operators alone; stored
values are never trusted.
"""
from __future__ import annotations

import numpy as np

from ..errors import DimensionError, ValidationError, WitnessRejected
from ..models import deterministic_strategies, strategy_table
from ..operators import heisenberg_weyl, partial_trace, partial_transpose
from ..sampling import random_povm, random_pure, rng_from
from .results import Witness

TOL = 1e-9


def _min_eig(m) -> float:
    return float(np.linalg.eigvalsh((m + m.conj().T) / 2)[0])


def _z(w: Witness):
    if "Z" not in w.normalisation:
        raise ValidationError(f"{w.kind} witness has no normalisation operator Z")
    return np.asarray(w.normalisation["Z"])


def _strategy_sums(W):
    """min over deterministic lam of mineig sum_x W[x, lam(x)]."""
    i, o = W.shape[:2]
    worst = np.inf
    for lam in deterministic_strategies(i, o):
        worst = min(worst, _min_eig(sum(W[x, a] for x, a in enumerate(lam))))
    return worst


# ---------------------------------------------------------------------------
# incompatibility witness: W[x, a], Z[x] with
#   sum_x W[x, lam(x)] >= 0,  W[x, a] <= Z[x],  sum_x tr Z[x] = 1

def repair_incompat(W, Z):
    i = W.shape[0]
    d = W.shape[-1]
    eye = np.eye(d)
    d1 = max(0.0, -_strategy_sums(W))
    W = W + (d1 / i) * eye
    d2 = max(0.0, -min(_min_eig(Z[x] - W[x, a]) for x in range(i) for a in range(W.shape[1])))
    Z = Z + d2 * eye
    norm = sum(np.trace(z).real for z in Z)
    return W / norm, Z / norm


def check_incompat_witness(w: Witness, M) -> Witness:
    W, Z = w.operators, _z(w)
    M = np.asarray(M)
    if W.shape != M.shape:
        raise DimensionError(f"witness shape {W.shape} does not match set {M.shape}")
    ev = {
        "strategy_min_eig": _strategy_sums(W),
        "dominance_min_eig": min(_min_eig(Z[x] - W[x, a]) for x in range(W.shape[0]) for a in range(W.shape[1])),
        "normalisation": float(sum(np.trace(z).real for z in Z)),
    }
    value = -float(np.einsum("xaij,xaji->", W, M).real)
    ok = ev["strategy_min_eig"] >= -TOL and ev["dominance_min_eig"] >= -TOL and ev["normalisation"] <= 1 + TOL
    w.evidence, w.certified_value, w.valid = ev, value, bool(ok)
    return w


# ---------------------------------------------------------------------------
# assemblage witness: W[x, a], Z with
#   sum_x W[x, lam(x)] >= 0,  W[x, a] <= Z / i,  tr[Z rho_B] = 1

def repair_assemblage(W, Z, rho_b):
    i, o = W.shape[:2]
    eye = np.eye(W.shape[-1])
    d1 = max(0.0, -_strategy_sums(W))
    W = W + (d1 / i) * eye
    d2 = max(0.0, -min(_min_eig(Z / i - W[x, a]) for x in range(i) for a in range(o)))
    Z = Z + i * d2 * eye
    norm = float(np.trace(Z @ rho_b).real)
    return W / norm, Z / norm


def check_assemblage_witness(w: Witness, tau) -> Witness:
    W, Z = w.operators, _z(w)
    tau = np.asarray(tau)
    if W.shape != tau.shape:
        raise DimensionError(f"witness shape {W.shape} does not match assemblage {tau.shape}")
    i, o = W.shape[:2]
    rho_b = tau.sum(axis=1).mean(axis=0)
    ev = {
        "strategy_min_eig": _strategy_sums(W),
        "dominance_min_eig": min(_min_eig(Z / i - W[x, a]) for x in range(i) for a in range(o)),
        "normalisation": float(np.trace(Z @ rho_b).real),
    }
    value = -float(np.einsum("xaij,xaji->", W, tau).real)
    ok = ev["strategy_min_eig"] >= -TOL and ev["dominance_min_eig"] >= -TOL and ev["normalisation"] <= 1 + TOL
    w.evidence, w.certified_value, w.valid = ev, value, bool(ok)
    return w


def assemblage_witness_to_choi(w: Witness) -> Witness:
    """Embed W[x, a] as W_a = d_V sum_x |x><x| (x) W[x, a] on V' (x) B, with Z -> 1 (x) Z."""
    W, Z = w.operators, _z(w)
    i, o, dB = W.shape[0], W.shape[1], W.shape[-1]
    Wa = np.zeros((o, i * dB, i * dB), dtype=complex)
    for a in range(o):
        for x in range(i):
            Wa[a, x * dB:(x + 1) * dB, x * dB:(x + 1) * dB] = i * W[x, a]
    return Witness("teleportation", Wa, (i, dB), {"Z": np.kron(np.eye(i), Z)}, w.certified_value,
                   {"embedded_from": "assemblage"})


# ---------------------------------------------------------------------------
# teleportation witness: W[a] on V' (x) B, Z with
#   W in dual of free cone,  W[a] <= Z,  tr[Z (1/d_V (x) rho_B)] = 1

def repair_ppt_dual(W, dims, Z, marginal):
    """Make W^{T_last} >= 0, W <= Z and the normalisation hold exactly (up to rounding)."""
    eye = np.eye(W.shape[-1])
    d1 = max(0.0, -min(_min_eig(partial_transpose(w, len(dims) - 1, dims)) for w in W))
    W = W + d1 * eye
    d2 = max(0.0, -min(_min_eig(Z - w) for w in W))
    Z = Z + d2 * eye
    norm = float(np.trace(Z @ marginal).real)
    return W / norm, Z / norm


def _block_classical(W, dV, dB, tol=1e-12):
    """W[a] block diagonal in the computational basis of V'? Returns blocks [x, a] or None."""
    o = W.shape[0]
    W5 = W.reshape(o, dV, dB, dV, dB)
    off = W5.copy()
    for x in range(dV):
        off[:, x, :, x, :] = 0
    if np.abs(off).max(initial=0) > tol:
        return None
    return np.array([[W5[a, x, :, x, :] for a in range(o)] for x in range(dV)])


def sample_teleport_pairings(W, dims, samples, rng) -> float:
    dV, dB = dims
    o = W.shape[0]
    rng = rng_from(rng)
    W5 = W.reshape(o, dV, dB, dV, dB)
    worst = np.inf
    chunk = 1000
    done = 0
    while done < samples:
        k = min(chunk, samples - done)
        kinds = ["rank1", "projective"]
        N = np.array([random_povm(dV, o, rng, kinds[s % 2]) for s in range(k)])
        S = np.array([random_pure(dB, rng) for _ in range(k)])
        vals = np.einsum("avbwc,sawv,scb->s", W5, N, S).real
        worst = min(worst, float(vals.min()))
        done += k
    return worst


def check_teleport_witness(w: Witness, J, rho_b, samples=10_000, seed=0) -> Witness:
    W, Z = w.operators, _z(w)
    dV, dB = w.dims
    J = np.asarray([getattr(j, "matrix", j) for j in J])
    if W.shape != J.shape:
        raise DimensionError(f"witness shape {W.shape} does not match Choi operators {J.shape}")
    o = W.shape[0]
    marginal = np.kron(np.eye(dV) / dV, rho_b)
    ev = {
        "dominance_min_eig": min(_min_eig(Z - wa) for wa in W),
        "normalisation": float(np.trace(Z @ marginal).real),
        "trace_sum": float(sum(np.trace(wa).real for wa in W)),
        "trace_bound": float(o * dV * dB),
        "ppt_dual_min_eig": min(_min_eig(partial_transpose(wa, 1, (dV, dB))) for wa in W),
    }
    blocks = _block_classical(W, dV, dB)
    if blocks is not None:
        ev["block_classical_min_eig"] = _strategy_sums(blocks)
    ev["sampled_pairing_min"] = sample_teleport_pairings(W, (dV, dB), samples, seed) if samples else None
    ev["samples"] = samples
    uniform = np.abs(rho_b - np.eye(dB) / dB).max() <= 1e-12
    ev["trace_bound_ok"] = ev["trace_sum"] <= ev["trace_bound"] + TOL if uniform else None
    from .relax import teleport_parts_evidence

    ev.update(teleport_parts_evidence(w))
    member_exact = (ev["ppt_dual_min_eig"] >= -TOL or ev.get("block_classical_min_eig", -np.inf) >= -TOL
                    or ev.get("parts_certify_membership", False))
    ev["membership_exact"] = bool(member_exact)
    sampled_ok = ev["sampled_pairing_min"] is None or ev["sampled_pairing_min"] >= -TOL
    ok = (ev["dominance_min_eig"] >= -TOL and ev["normalisation"] <= 1 + TOL and sampled_ok
          and ev["trace_bound_ok"] is not False)
    w.evidence = ev
    w.certified_value = -float(np.einsum("aij,aji->", W, J).real)
    w.valid = bool(ok)
    return w


# ---------------------------------------------------------------------------
# Buscemi witness: W[a, b] on V (x) W, Z[b], Q[a] with
#   W in dual of free cone,  W[a, b] <= Z[b] + Q[a],  tr_W Q[a] = 0,  sum_b tr[Z[b] C_b] = 1

def sample_buscemi_pairings(W, dims, samples, rng) -> float:
    dV, dW = dims
    oa, ob = W.shape[:2]
    rng = rng_from(rng)
    W6 = W.reshape(oa, ob, dV, dW, dV, dW)
    worst = np.inf
    done = 0
    kinds = ["rank1", "projective"]
    while done < samples:
        k = min(1000, samples - done)
        E = np.array([random_povm(dV, oa, rng, kinds[s % 2]) for s in range(k)])
        D = np.array([random_povm(dW, ob, rng, kinds[(s // 2) % 2]) for s in range(k)])
        vals = np.einsum("abvwxy,saxv,sbyw->s", W6, E, D).real
        worst = min(worst, float(vals.min()))
        done += k
    return worst


def repair_buscemi(W, dims, Z, Q, C):
    dV, dW = dims
    oa, ob = W.shape[:2]
    eye = np.eye(W.shape[-1])
    # project Q onto tr_W Q = 0 exactly
    Q = np.array([q - np.kron(partial_trace(q, [1], dims), np.eye(dW)) / dW for q in Q])
    d1 = max(0.0, -min(_min_eig(partial_transpose(W[a, b], 1, dims)) for a in range(oa) for b in range(ob)))
    W = W + d1 * eye
    d2 = max(0.0, -min(_min_eig(Z[b] + Q[a] - W[a, b]) for a in range(oa) for b in range(ob)))
    Z = Z + d2 * eye
    norm = float(sum(np.trace(Z[b] @ C[b]).real for b in range(ob)))
    return W / norm, Z / norm, Q / norm


def check_buscemi_witness(w: Witness, M, samples=10_000, seed=0, require_trace_bound=None) -> Witness:
    W = w.operators
    Z = _z(w)
    Q = w.normalisation.get("Q")
    dims = tuple(w.dims)
    M = np.asarray(M)
    if W.shape != M.shape:
        raise DimensionError(f"witness shape {W.shape} does not match distributed POVM {M.shape}")
    oa, ob = W.shape[:2]
    if Q is None:
        Q = np.zeros((oa,) + W.shape[2:], dtype=complex)
    C = M.sum(axis=0)
    D = W.shape[-1]
    ev = {
        "dominance_min_eig": min(_min_eig(Z[b] + Q[a] - W[a, b]) for a in range(oa) for b in range(ob)),
        "alice_multiplier_trace": float(max(np.abs(partial_trace(q, [1], dims)).max() for q in Q)),
        "normalisation": float(sum(np.trace(Z[b] @ C[b]).real for b in range(ob))),
        "trace_sum": float(np.einsum("abii->", W).real),
        "trace_bound": float(oa * ob),
        "ppt_dual_min_eig": min(_min_eig(partial_transpose(W[a, b], 1, dims)) for a in range(oa) for b in range(ob)),
    }
    ev["sampled_pairing_min"] = sample_buscemi_pairings(W, dims, samples, seed) if samples else None
    ev["samples"] = samples
    uniform = all(np.abs(C[b] - np.trace(C[b]).real * np.eye(D) / D).max() <= 1e-12 for b in range(ob))
    if require_trace_bound is None:
        require_trace_bound = uniform
    ev["trace_bound_ok"] = bool(ev["trace_sum"] <= ev["trace_bound"] + TOL)
    ev["trace_bound_required"] = bool(require_trace_bound)
    from .relax import buscemi_parts_evidence

    ev.update(buscemi_parts_evidence(w))
    ev["membership_exact"] = (bool(ev["ppt_dual_min_eig"] >= -TOL) or bool(w.evidence.get("lifted_membership"))
                              or ev.get("parts_certify_membership", False))
    sampled_ok = ev["sampled_pairing_min"] is None or ev["sampled_pairing_min"] >= -TOL
    ok = (ev["dominance_min_eig"] >= -TOL and ev["alice_multiplier_trace"] <= TOL
          and ev["normalisation"] <= 1 + TOL and sampled_ok
          and (ev["trace_bound_ok"] or not require_trace_bound))
    if w.evidence.get("lifted_membership"):
        ev["lifted_membership"] = True
    w.evidence = ev
    w.certified_value = -float(np.einsum("abij,abji->", W, M).real)
    w.valid = bool(ok)
    return w


def witness_lift(tw: Witness, d: int | None = None, samples=10_000, seed=0,
                 require_trace_bound: bool = True) -> Witness:
    """Lift a teleportation witness to a Buscemi witness for Bob's Bell measurement.

    W_ab = (1/(d_V d)) (1 (x) U_b) W_a^T (1 (x) U_b)^dagger and likewise for
    the dominating operator, so that pairing with the distributed POVM built
    from the same U_b reproduces the teleportation value.
    """
    if tw.kind != "teleportation":
        raise DimensionError(f"expected a teleportation witness, got {tw.kind}")
    dV, dB = tw.dims
    if d is not None and d != dB:
        raise DimensionError(f"d={d} does not match the witness's B dimension {dB}")
    us = heisenberg_weyl(dB)
    W, Z = tw.operators, _z(tw)
    oa = W.shape[0]
    k = 1.0 / (dV * dB)
    lifts = [np.kron(np.eye(dV), u) for u in us]
    Wab = np.array([[k * L @ W[a].T @ L.conj().T for L in lifts] for a in range(oa)])
    Zb = np.array([k * L @ Z.T @ L.conj().T for L in lifts])
    out = Witness("buscemi", Wab, (dV, dB), {"Z": Zb, "Q": np.zeros((oa, dV * dB, dV * dB), dtype=complex)},
                  np.nan, {"lifted_membership": bool(tw.evidence.get("membership_exact"))})
    tsum = float(np.einsum("abii->", Wab).real)
    bound = float(oa * len(us))
    ev = {"trace_sum": tsum, "trace_bound": bound, "trace_bound_ok": tsum <= bound + TOL,
          "lifted_membership": bool(tw.evidence.get("membership_exact")),
          "trace_bound_required": bool(require_trace_bound)}
    if samples:
        ev["sampled_pairing_min"] = sample_buscemi_pairings(Wab, (dV, dB), samples, seed)
        ev["samples"] = samples
    out.evidence = ev
    if require_trace_bound and not ev["trace_bound_ok"]:
        raise WitnessRejected(f"lifted witness violates the trace bound: {tsum:.12g} > {bound:g}", ev)
    if samples and ev["sampled_pairing_min"] < -TOL:
        raise WitnessRejected(f"sampled pairing {ev['sampled_pairing_min']:.3e} below -{TOL:g}", ev)
    return out


# ---------------------------------------------------------------------------
# behaviour witness: beta[a, b, x, y] >= 0 with sum beta p_det <= 1 on every local deterministic box

def check_behaviour_witness(w: Witness, table) -> Witness:
    beta = np.real(np.asarray(w.operators))
    p = np.asarray(table, dtype=float)
    if beta.shape != p.shape:
        raise DimensionError(f"witness shape {beta.shape} does not match behaviour {p.shape}")
    oa, ob, ia, ib = p.shape
    DA, DB = strategy_table(ia, oa), strategy_table(ib, ob)
    local = np.einsum("fax,gby,abxy->fg", DA, DB, beta)
    ev = {"max_local_value": float(local.max()), "min_coefficient": float(beta.min())}
    w.evidence = ev
    w.certified_value = float((beta * p).sum() - 1.0)
    w.valid = bool(ev["max_local_value"] <= 1 + TOL and ev["min_coefficient"] >= -TOL)
    return w
