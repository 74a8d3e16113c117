"""Exact programs: incompatibility of standard sets, teleportation with classical
inputs (a steering-type SDP) and behaviours with classical inputs (an LP)."""
from __future__ import annotations

import numpy as np

from ..conic import ConicProgram, require_optimal, solve
from ..errors import ResourceError
from ..models import Assemblage, Behaviour, StandardMeasurementSet, strategy_table
from .results import CLAMP, RobustnessResult, Witness, clamp, solve_diag
from .witness import (check_assemblage_witness, check_behaviour_witness, check_incompat_witness, repair_assemblage,
                      repair_incompat)


def _settings(settings):
    from ..config import RobustnessSettings

    return settings or RobustnessSettings()


def _check_cap(count, cap, what):
    if count > cap:
        raise ResourceError(f"{what}: {count} deterministic strategies exceed the cap of {cap}; "
                            "use a see-saw route or raise enum_cap")


def rob_incompat_standard(mset: StandardMeasurementSet, settings=None) -> RobustnessResult:
    """Generalised robustness of incompatibility, exact SDP over deterministic post-processings.

    Variables: parent elements G~_lam >= 0 (one per map x -> a), scaled noise
    N~_{a|x} >= 0 and r, with  M_{a|x} + N~_{a|x} = sum_lam D_lam(a|x) G~_lam
    and sum_a N~_{a|x} = r 1.
    """
    settings = _settings(settings)
    M = mset.arrays()
    i, o, d = M.shape[0], M.shape[1], M.shape[-1]
    _check_cap(o ** i, settings.enum_cap, "incompatibility SDP")
    D = strategy_table(i, o)
    L = D.shape[0]
    p = ConicProgram("incompat-standard")
    G = [p.hermitian(f"G{k}", d) for k in range(L)]
    N = [[p.hermitian(f"N{x}_{a}", d) for a in range(o)] for x in range(i)]
    r = p.real("r")
    for g in G:
        p.add_psd("parent", g)
    for x in range(i):
        for a in range(o):
            p.add_psd("noise", N[x][a])
    for x in range(i):
        for a in range(o):
            hit = [G[k] for k in range(L) if D[k, a, x]]
            p.add_eq("model", sum(hit[1:], hit[0]) - N[x][a] - M[x, a])
    for x in range(i):
        p.add_eq("noise-normalisation", sum(N[x][1:], N[x][0]) - r * np.eye(d))
    p.minimize(r)
    sol = require_optimal(solve(p, settings=settings.solver), "incompatibility SDP")

    diag = solve_diag(sol)
    rv = sol.assignments["r"]
    value = clamp(rv, diag)
    Gt = np.array([sol.assignments[f"G{k}"] for k in range(L)])
    Nt = np.array([[sol.assignments[f"N{x}_{a}"] for a in range(o)] for x in range(i)])
    parent = Gt / (1 + rv)
    noise = Nt / rv if rv > CLAMP else M.copy()
    dec = {"r": value, "strategies": D, "parent": parent, "p_lambda": np.trace(parent, axis1=1, axis2=2).real / d,
           "noise": noise}
    diag["decomposition_residual"] = incompat_residual(M, value, dec)

    Y = np.array(sol.duals["model"]).reshape(i, o, d, d)
    K = np.array(sol.duals["noise-normalisation"])
    W, Z = repair_incompat(-Y, -K)
    w = check_incompat_witness(Witness("incompatibility", W, (d,), {"Z": Z}, np.nan), M)
    diag["witness_gap"] = abs(w.certified_value - value)
    return RobustnessResult(value, "exact", "incompat-standard-sdp", w, dec, diag)


def incompat_residual(M, r, dec) -> float:
    """Max violation of M + r N = (1+r) sum_lam D_lam G_lam and of the validity of G, N."""
    D, G, N = dec["strategies"], dec["parent"], dec["noise"]
    i, o, d = M.shape[0], M.shape[1], M.shape[-1]
    model = np.einsum("kax,kij->xaij", D, G)
    res = float(np.abs(M + r * N - (1 + r) * model).max())
    eye = np.eye(d)
    res = max(res, float(np.abs(G.sum(axis=0) - eye).max()), float(np.abs(N.sum(axis=1) - eye).max()))
    res = max(res, -min(float(np.linalg.eigvalsh(g)[0]) for g in G))
    res = max(res, -min(float(np.linalg.eigvalsh(n)[0]) for n in N.reshape(-1, d, d)))
    return max(res, 0.0)


def rob_teleport_classical_inputs(assemblage: Assemblage, settings=None) -> RobustnessResult:
    """Robustness of an assemblage with classical inputs.

    Free assemblages are sum_lam D_lam(a|x) sigma~_lam. The noise is any
    assemblage with the same reduced state on Bob, so the program is
    min s - 1  s.t.  sum_lam D_lam(a|x) F_lam >= tau_{a|x},  sum_lam F_lam = s rho_B.
    """
    settings = _settings(settings)
    tau = assemblage.arrays()
    i, o, d = tau.shape[0], tau.shape[1], tau.shape[-1]
    _check_cap(o ** i, settings.enum_cap, "teleportation SDP")
    rho_b = assemblage.reduced_state()
    D = strategy_table(i, o)
    L = D.shape[0]
    p = ConicProgram("teleport-classical")
    F = [p.hermitian(f"F{k}", d) for k in range(L)]
    s = p.real("s")
    for f in F:
        p.add_psd("lhs", f)
    for x in range(i):
        for a in range(o):
            hit = [F[k] for k in range(L) if D[k, a, x]]
            p.add_psd("noise", sum(hit[1:], hit[0]) - tau[x, a])
    p.add_eq("marginal", sum(F[1:], F[0]) - s * rho_b)
    p.minimize(s - 1.0)
    sol = require_optimal(solve(p, settings=settings.solver), "teleportation SDP")

    diag = solve_diag(sol)
    sv = sol.assignments["s"]
    rv = sv - 1
    value = clamp(rv, diag)
    Fv = np.array([sol.assignments[f"F{k}"] for k in range(L)])
    lhs = Fv / sv
    model = np.einsum("kax,kij->xaij", D, Fv)
    noise = (model - tau) / rv if rv > CLAMP else tau.copy()
    dec = {"r": value, "strategies": D, "lhs": lhs, "noise": noise}
    diag["decomposition_residual"] = assemblage_residual(tau, value, dec)

    Y = np.array(sol.duals["noise"]).reshape(i, o, d, d)
    Zc = sol.duals["marginal"][0]
    Z = -Zc
    W = Z[None, None] / i - Y
    W, Z = repair_assemblage(W, Z, rho_b)
    w = check_assemblage_witness(Witness("assemblage", W, (d,), {"Z": Z}, np.nan), tau)
    diag["witness_gap"] = abs(w.certified_value - value)
    return RobustnessResult(value, "exact", "teleport-classical-sdp", w, dec, diag)


def assemblage_residual(tau, r, dec) -> float:
    """Violation of tau + r sigma = (1+r) sum_lam D_lam p(lam) sigma_lam and of the validity of the parts."""
    D, lhs, noise = dec["strategies"], dec["lhs"], dec["noise"]
    d = tau.shape[-1]
    rho_b = tau.sum(axis=1).mean(axis=0)
    model = np.einsum("kax,kij->xaij", D, lhs)
    res = float(np.abs(tau + r * noise - (1 + r) * model).max())
    res = max(res, float(np.abs(lhs.sum(axis=0) - rho_b).max()),
              float(np.abs(noise.sum(axis=1) - rho_b[None]).max()))
    res = max(res, -min(float(np.linalg.eigvalsh(f)[0]) for f in lhs))
    res = max(res, -min(float(np.linalg.eigvalsh(n)[0]) for n in noise.reshape(-1, d, d)))
    return max(res, 0.0)


def behaviour_lp(table: np.ndarray, settings=None) -> RobustnessResult:
    """Robustness of p(a,b|x,y) against arbitrary conditional distributions, local model via an LP."""
    settings = _settings(settings)
    p = np.asarray(table, dtype=float)
    oa, ob, ia, ib = p.shape
    _check_cap(oa ** ia * ob ** ib, settings.enum_cap, "behaviour LP")
    DA = strategy_table(ia, oa)  # f, a, x
    DB = strategy_table(ib, ob)  # g, b, y
    Dfull = np.einsum("fax,gby->fgabxy", DA, DB).reshape(len(DA) * len(DB), -1)  # lam, (a b x y)
    Lam = Dfull.shape[0]
    prog = ConicProgram("behaviour-lp")
    pi = prog.real("pi", Lam)
    prog.add_nonneg("weights", pi)
    prog.add_nonneg("noise", Dfull.T @ pi - p.reshape(-1, 1))
    prog.minimize((np.ones((1, Lam)) @ pi) - 1.0)
    sol = require_optimal(solve(prog, settings=settings.solver), "behaviour LP")
    diag = solve_diag(sol)
    piv = np.atleast_1d(sol.assignments["pi"])
    sv = float(piv.sum())
    rv = sv - 1
    value = clamp(rv, diag)
    model = (Dfull.T @ piv).reshape(p.shape)
    noise = (model - p) / rv if rv > CLAMP else p.copy()
    dec = {"r": value, "weights": piv / sv, "strategies_a": DA, "strategies_b": DB, "noise": noise}
    diag["decomposition_residual"] = behaviour_residual(p, value, dec)
    beta = np.array(sol.duals["noise"][0]).reshape(p.shape)
    # sum_abxy beta D_lam <= 1 for every lam; value sum beta p - 1
    scale = max(1.0, float((Dfull @ beta.reshape(-1)).max()))
    beta = np.maximum(beta, 0) / scale
    w = check_behaviour_witness(Witness("behaviour", beta, p.shape, {}, np.nan), p)
    diag["witness_gap"] = abs(w.certified_value - value)
    return RobustnessResult(value, "exact", "behaviour-local-lp", w, dec, diag)


def behaviour_residual(p, r, dec) -> float:
    DA, DB, wts, noise = dec["strategies_a"], dec["strategies_b"], dec["weights"], dec["noise"]
    model = np.einsum("fgabxy,fg->abxy", np.einsum("fax,gby->fgabxy", DA, DB),
                      wts.reshape(len(DA), len(DB)))
    res = float(np.abs(p + r * noise - (1 + r) * model).max())
    res = max(res, -float(noise.min()), float(np.abs(noise.sum(axis=(0, 1)) - 1).max()), -float(wts.min()))
    return max(res, 0.0)
