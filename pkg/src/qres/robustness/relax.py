"""Outer relaxations of separability-type free cones (certified lower bounds).

Each free cone is replaced by the PPT cone. Where the objects carry a finite
input set, an extra valid cut asks the induced input-level object to admit a
local model with arbitrary response distributions over the input labels.
That cut is exact when the inputs are orthogonal basis states.
"""
from __future__ import annotations

import numpy as np

from ..conic import ConicProgram, kron, ptrace, ptranspose, require_optimal, solve
from ..models import QuantumInputSet, default_tomographic_inputs, strategy_table
from ..operators import partial_trace, partial_transpose
from .results import Witness, clamp, solve_diag

TOL = 1e-9


def _min_eig(m):
    return float(np.linalg.eigvalsh((m + m.conj().T) / 2)[0])


def _label_cut(p, F, inputs: QuantumInputSet, dims, cap, name="label"):
    """Add  tr_1[F_a (omega_x (x) 1)] = sum_mu D_mu(a|x) S_mu  for every a, x. Returns strategies or None."""
    o = len(F)
    n_in = len(inputs)
    if o ** n_in > cap:
        return None
    D = strategy_table(n_in, o)
    d2 = dims[1]
    S = [p.hermitian(f"S{k}", d2) for k in range(D.shape[0])]
    for s_ in S:
        p.add_psd("label-lhs", s_)
    for x, w in enumerate(inputs.states):
        big = np.kron(w.matrix, np.eye(d2))
        for a in range(o):
            hit = [S[k] for k in range(D.shape[0]) if D[k, a, x]]
            p.add_eq(name, ptrace(F[a] @ big, 0, dims) - sum(hit[1:], hit[0]))
    return D


def teleport_ppt(J: np.ndarray, rho_b: np.ndarray, dims, settings, inputs: QuantumInputSet | None = None,
                 label_cut: bool = True):
    """Lower bound on R_T from the Choi operators J[a] on V' (x) B."""
    dV, dB = dims
    o = J.shape[0]
    m = np.kron(np.eye(dV) / dV, rho_b)
    p = ConicProgram("teleport-ppt")
    F = [p.hermitian(f"F{a}", dV * dB, dims) for a in range(o)]
    s = p.real("s")
    for a in range(o):
        p.add_psd("noise", F[a] - J[a])
    for a in range(o):
        p.add_psd("ppt", ptranspose(F[a], 1))
    p.add_eq("marginal", sum(F[1:], F[0]) - s * m)
    D = None
    if label_cut:
        inputs = inputs or default_tomographic_inputs(dV)
        D = _label_cut(p, F, inputs, dims, settings.enum_cap)
    p.minimize(s - 1.0)
    sol = require_optimal(solve(p, settings=settings.solver), "teleportation PPT relaxation")
    diag = solve_diag(sol)
    diag["label_cut"] = D is not None
    value = clamp(sol.assignments["s"] - 1, diag, "lower")

    P = np.array(sol.duals["ppt"])
    Zh = -sol.duals["marginal"][0]
    parts = {"ppt_part": P}
    if D is not None:
        L = np.array(sol.duals["label"]).reshape(len(inputs), o, dB, dB)
        parts["label_part"] = L
        parts["label_inputs"] = np.array([w.matrix for w in inputs.states])
        parts["label_strategies"] = D
    W, Zh, parts = repair_teleport_parts(parts, Zh, dims, m)
    w = Witness("teleportation", W, tuple(dims), {"Z": Zh, **parts}, np.nan)
    return value, w, diag


def compose_teleport_witness(parts, dims):
    dV, dB = dims
    P = parts["ppt_part"]
    W = np.array([partial_transpose(pa, 1, dims) for pa in P])
    if "label_part" in parts:
        L, ws = parts["label_part"], parts["label_inputs"]
        W = W + np.einsum("xij,xakl->aikjl", ws, L).reshape(W.shape)
    return W


def repair_teleport_parts(parts, Z, dims, marginal):
    P = parts["ppt_part"]
    eye = np.eye(P.shape[-1])
    d1 = max(0.0, -min(_min_eig(pa) for pa in P))
    parts = dict(parts, ppt_part=P + d1 * eye)
    if "label_part" in parts:
        L, D = parts["label_part"], parts["label_strategies"]
        n_in = L.shape[0]
        worst = min(_min_eig(np.einsum("ax,xaij->ij", D[k], L)) for k in range(D.shape[0]))
        d2 = max(0.0, -worst)
        parts["label_part"] = L + (d2 / n_in) * np.eye(L.shape[-1])
    W = compose_teleport_witness(parts, dims)
    d3 = max(0.0, -min(_min_eig(Z - wa) for wa in W))
    Z = Z + d3 * eye
    norm = float(np.trace(Z @ marginal).real)
    parts = {k: (v / norm if k in ("ppt_part", "label_part") else v) for k, v in parts.items()}
    return W / norm, Z / norm, parts


def teleport_parts_evidence(w: Witness) -> dict:
    """Exact dual-cone membership from the stored decomposition W = P^T_B + sum_x omega_x (x) L_x."""
    parts = w.normalisation
    if "ppt_part" not in parts:
        return {}
    Wre = compose_teleport_witness(parts, w.dims)
    ev = {"parts_deviation": float(np.abs(Wre - w.operators).max()),
          "parts_ppt_min_eig": min(_min_eig(pa) for pa in parts["ppt_part"])}
    if "label_part" in parts:
        L, D = parts["label_part"], parts["label_strategies"]
        ev["parts_label_min_eig"] = min(_min_eig(np.einsum("ax,xaij->ij", D[k], L)) for k in range(D.shape[0]))
    ok = ev["parts_deviation"] <= 1e-10 and ev["parts_ppt_min_eig"] >= -TOL
    ok = ok and ev.get("parts_label_min_eig", 0.0) >= -TOL
    ev["parts_certify_membership"] = bool(ok)
    return ev


def _buscemi_label_cut(p, F, inputs: QuantumInputSet, dims, cap):
    """tr_V[F_ab (omega_x (x) 1)] = sum_mu D_mu(a|x) S_{mu,b} with sum_b S_{mu,b} = t_mu 1."""
    oa, ob = len(F), len(F[0])
    n_in = len(inputs)
    if oa ** n_in > cap:
        return None
    D = strategy_table(n_in, oa)
    dW = dims[1]
    S = [[p.hermitian(f"S{k}_{b}", dW) for b in range(ob)] for k in range(D.shape[0])]
    t = p.real("t", D.shape[0])
    for k in range(D.shape[0]):
        for b in range(ob):
            p.add_psd("label-lhs", S[k][b])
        p.add_eq("label-povm", sum(S[k][1:], S[k][0]) - t[k] * np.eye(dW))
    for x, w in enumerate(inputs.states):
        big = np.kron(w.matrix, np.eye(dW))
        for a in range(oa):
            for b in range(ob):
                hit = [S[k][b] for k in range(D.shape[0]) if D[k, a, x]]
                p.add_eq("label", ptrace(F[a][b] @ big, 0, dims) - sum(hit[1:], hit[0]))
    return D


def buscemi_ppt(M: np.ndarray, dims, settings, inputs: QuantumInputSet | None = None, label_cut: bool = True):
    """Lower bound on R_BN: PPT free cone plus no-signalling, Bob marginal fixed to the object's."""
    dV, dW = dims
    oa, ob = M.shape[:2]
    C = M.sum(axis=0)
    p = ConicProgram("buscemi-ppt")
    F = [[p.hermitian(f"F{a}_{b}", dV * dW, dims) for b in range(ob)] for a in range(oa)]
    A = [p.hermitian(f"A{a}", dV) for a in range(oa)]
    s = p.real("s")
    for a in range(oa):
        for b in range(ob):
            p.add_psd("noise", F[a][b] - M[a, b])
    for a in range(oa):
        for b in range(ob):
            p.add_psd("ppt", ptranspose(F[a][b], 1))
    for b in range(ob):
        col = [F[a][b] for a in range(oa)]
        p.add_eq("bob-marginal", sum(col[1:], col[0]) - s * C[b])
    for a in range(oa):
        p.add_eq("no-signalling", sum(F[a][1:], F[a][0]) - kron(A[a], np.eye(dW)))
    D = None
    if label_cut:
        inputs = inputs or default_tomographic_inputs(dV)
        D = _buscemi_label_cut(p, F, inputs, dims, settings.enum_cap)
    p.minimize(s - 1.0)
    sol = require_optimal(solve(p, settings=settings.solver), "Buscemi PPT relaxation")
    diag = solve_diag(sol)
    diag["label_cut"] = D is not None
    value = clamp(sol.assignments["s"] - 1, diag, "lower")
    P = np.array(sol.duals["ppt"]).reshape(oa, ob, dV * dW, dV * dW)
    Z = -np.array(sol.duals["bob-marginal"])
    Q = -np.array(sol.duals["no-signalling"])
    parts = {"ppt_part": P}
    if D is not None:
        parts["label_part"] = np.array(sol.duals["label"]).reshape(len(inputs), oa, ob, dW, dW)
        parts["label_inputs"] = np.array([w.matrix for w in inputs.states])
        parts["label_strategies"] = D
    W, Z, Q, parts = repair_buscemi_parts(parts, dims, Z, Q, C)
    w = Witness("buscemi", W, tuple(dims), {"Z": Z, "Q": Q, **parts}, np.nan)
    return value, w, diag


def compose_buscemi_witness(parts, dims):
    P = parts["ppt_part"]
    oa, ob = P.shape[:2]
    W = np.array([[partial_transpose(P[a, b], 1, dims) for b in range(ob)] for a in range(oa)])
    if "label_part" in parts:
        L, ws = parts["label_part"], parts["label_inputs"]
        W = W + np.einsum("xij,xabkl->abikjl", ws, L).reshape(W.shape)
    return W


def _povm_certificate(Lam):
    """Y with Lam_b >= Y for all b; then sum_b tr[Lam_b D_b] >= tr Y for every POVM D."""
    ob, d = Lam.shape[0], Lam.shape[-1]
    p = ConicProgram("povm-pairing")
    Y = p.hermitian("Y", d)
    for b in range(ob):
        p.add_psd("dominated", Lam[b] - Y)
    p.maximize(Y.trace().real())
    Yv = require_optimal(solve(p), "POVM pairing bound").assignments["Y"]
    shift = max(0.0, -min(_min_eig(Lam[b] - Yv) for b in range(ob)))
    return Yv - shift * np.eye(d)


def _label_lambdas(parts):
    L, D = parts["label_part"], parts["label_strategies"]
    return np.einsum("kax,xabij->kbij", D, L)


def repair_buscemi_parts(parts, dims, Z, Q, C):
    dV, dW = dims
    P = parts["ppt_part"]
    oa, ob = P.shape[:2]
    eye = np.eye(P.shape[-1])
    Q = np.array([q - np.kron(partial_trace(q, [1], dims), np.eye(dW)) / dW for q in Q])
    d1 = max(0.0, -min(_min_eig(P[a, b]) for a in range(oa) for b in range(ob)))
    parts = dict(parts, ppt_part=P + d1 * eye)
    if "label_part" in parts:
        L = parts["label_part"]
        Y = np.array([_povm_certificate(lam) for lam in _label_lambdas(parts)])
        worst = min(float(np.trace(y).real) for y in Y)
        if worst < 0:
            delta = -worst / (L.shape[0] * dW)
            parts["label_part"] = L + delta * np.eye(dW)
            Y = Y + L.shape[0] * delta * np.eye(dW)
        parts["label_certificates"] = Y
    W = compose_buscemi_witness(parts, dims)
    d2 = max(0.0, -min(_min_eig(Z[b] + Q[a] - W[a, b]) for a in range(oa) for b in range(ob)))
    Z = Z + d2 * eye
    norm = float(sum(np.trace(Z[b] @ C[b]).real for b in range(ob)))
    scaled = ("ppt_part", "label_part", "label_certificates")
    parts = {k: (v / norm if k in scaled else v) for k, v in parts.items()}
    return W / norm, Z / norm, Q / norm, parts


def buscemi_parts_evidence(w: Witness) -> dict:
    """Exact dual-cone membership from W_ab = P_ab^T_W + sum_x omega_x (x) L_xab."""
    parts = w.normalisation
    if "ppt_part" not in parts:
        return {}
    Wre = compose_buscemi_witness(parts, w.dims)
    P = parts["ppt_part"]
    ev = {"parts_deviation": float(np.abs(Wre - w.operators).max()),
          "parts_ppt_min_eig": min(_min_eig(pab) for pab in P.reshape(-1, *P.shape[2:]))}
    if "label_part" in parts:
        Y = parts["label_certificates"]
        lams = _label_lambdas(parts)
        ev["parts_label_dominance_min_eig"] = min(_min_eig(lam[b] - y) for lam, y in zip(lams, Y)
                                                  for b in range(lam.shape[0]))
        ev["parts_label_certificate_trace_min"] = min(float(np.trace(y).real) for y in Y)
    ok = ev["parts_deviation"] <= 1e-10 and ev["parts_ppt_min_eig"] >= -TOL
    ok = ok and ev.get("parts_label_dominance_min_eig", 0.0) >= -TOL
    ok = ok and ev.get("parts_label_certificate_trace_min", 0.0) >= -TOL
    ev["parts_certify_membership"] = bool(ok)
    return ev


def incompat_generalised_ppt(N_parent_dims, inputs: QuantumInputSet, M: np.ndarray, settings, label_cut=True):
    """Lower bound on the robustness of a generalised measurement set M[x, a] with inputs omega_x.

    Free operators F_a = sum_lam H_{a|lam} (x) G~_lam on A' (x) A are relaxed
    to F_a >= 0, F_a^{T_A} >= 0, sum_a F_a = s 1; noise enters through any
    K_a >= 0 with sum_a K_a = (s - 1) 1.
    """
    dA1, dA = N_parent_dims
    dims = (dA1, dA)
    n_in, o = M.shape[:2]
    D = dA1 * dA
    p = ConicProgram("incompat-generalised-ppt")
    F = [p.hermitian(f"F{a}", D, dims) for a in range(o)]
    K = [p.hermitian(f"K{a}", D, dims) for a in range(o)]
    s = p.real("s")
    for a in range(o):
        p.add_psd("free", F[a])
        p.add_psd("ppt", ptranspose(F[a], 1))
        p.add_psd("noise", K[a])
    p.add_eq("parent", sum(F[1:], F[0]) - s * np.eye(D))
    p.add_eq("noise-parent", sum(K[1:], K[0]) - (s - 1.0) * np.eye(D))
    from .seesaw import independent_inputs

    for x in independent_inputs(inputs):
        big = np.kron(inputs.states[x].matrix, np.eye(dA))
        for a in range(o):
            p.add_eq("model", ptrace((F[a] - K[a]) @ big, 0, dims) - M[x, a])
    Dl = _label_cut(p, F, inputs, dims, settings.enum_cap) if label_cut else None
    p.minimize(s - 1.0)
    sol = require_optimal(solve(p, settings=settings.solver), "generalised incompatibility PPT relaxation")
    diag = solve_diag(sol)
    diag["label_cut"] = Dl is not None
    value = clamp(sol.assignments["s"] - 1, diag, "lower")
    return value, diag
