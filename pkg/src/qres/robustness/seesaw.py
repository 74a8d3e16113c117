"""Alternating (see-saw) optimisation over finite local-model decompositions.

Each model is bilinear in two groups of variables. Fixing one group leaves an
SDP in the other; the previous iterate stays feasible, so the objective never
increases. Restarts are seeded from one SeedSequence and merged
deterministically (best value, ties to the lowest restart index).
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ..conic import ConicProgram, SolverSettings, kron, ptrace, solve
from ..operators import partial_trace
from ..sampling import random_povm, random_state
from .results import CLAMP

EPS_WEIGHT = 1e-12
PRUNE = 1e-7
STEP_FEAS = 1e-6  # intermediate steps; the final decomposition residual is recomputed


@dataclass
class RestartOutcome:
    index: int
    value: float
    iterations: int
    payload: dict | None


def independent_inputs(inputs, tol=1e-9) -> list[int]:
    """Indices of a maximal linearly independent subset of the input states (greedy, in order).

    Generalised measurement sets are linear in the input state, so model
    constraints on the remaining inputs are implied; keeping them only makes
    the equality system rank deficient.
    """
    keep, basis = [], np.zeros((0, inputs.dim ** 2), dtype=complex)
    for x, w in enumerate(inputs.states):
        v = w.matrix.reshape(-1)
        r = v - basis.conj().T @ (basis @ v) if len(basis) else v
        n = np.linalg.norm(r)
        if n > tol:
            keep.append(x)
            basis = np.vstack([basis, r.conj()[None] / n])
    return keep


def run_restarts(fn, restarts: int, seed: int, jobs: int = 1) -> list[RestartOutcome]:
    seqs = np.random.SeedSequence(seed).spawn(restarts)
    args = list(enumerate(seqs))
    if jobs > 1 and restarts > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, *zip(*args)))
    return [fn(i, s) for i, s in args]


def pick_best(outcomes: list[RestartOutcome]):
    finite = [o for o in outcomes if np.isfinite(o.value)]
    if not finite:
        return None, {}
    best = min(finite, key=lambda o: (o.value, o.index))
    vals = [o.value for o in finite]
    info = {"restarts": len(outcomes), "converged_restarts": len(finite), "best_restart": best.index,
            "spread": float(max(vals) - min(vals)), "values": vals,
            "iterations": [o.iterations for o in outcomes]}
    return best, info


def alternate(steps, state, max_iter, improve_tol):
    """Run steps cyclically while the objective keeps decreasing; returns (best value, best state, iters)."""
    best, best_state, best_step = np.inf, None, None
    it = 0
    k = 0
    stall = 0
    while it < max_iter:
        out = steps[k % len(steps)](state)
        it += 1
        k += 1
        if out is None:
            break
        val, state = out
        if val < best - improve_tol:
            best, best_state, best_step = val, state, (k - 1) % len(steps)
            stall = 0
        else:
            if val < best:
                best, best_state, best_step = val, state, (k - 1) % len(steps)
            stall += 1
            if stall >= len(steps):
                break
    return best, best_state, it, best_step


class _Seesaw:
    """Subclasses define init(index, rng) and steps(); steps()[0] keeps a cleaned side fixed and
    records the solved side unnormalised, so its output substitutes back exactly."""

    def __call__(self, index, seq):
        rng = np.random.default_rng(seq)
        st = self.init(index, rng)
        steps = self.steps()
        self.strict = False
        steps = [self._with_pruning(f) for f in steps]
        val, best, it, k = alternate(steps, st, self.settings.max_iter, self.settings.improve_tol)
        if best is not None:
            self.strict = True
            out = steps[0](self.prune(best))
            self.strict = False
            it += 1
            if out is not None:
                val, best = out
            else:
                best = dict(best, unverified=True)
        return RestartOutcome(index, val, it, best)

    def _with_pruning(self, step):
        def run(st):
            out = step(st)
            if out is None:
                try:
                    pst = self.prune(st)
                except KeyError:
                    return None
                if len(self.weights(pst)) < len(self.weights(st)):
                    out = step(pst)
            return out
        return run

    def prune(self, st):
        """Drop components of negligible weight; the fixed-side arrays are indexed by component first."""
        w = self.weights(st)
        keep = np.flatnonzero(w > PRUNE * w.max())
        out = dict(st)
        for key in self.component_keys:
            if key in out:
                out[key] = out[key][keep]
        return out

    def solve_step(self, p):
        if getattr(self, "strict", False):
            sol = solve(p, settings=self.settings.solver)
            return sol if sol.status == "optimal" else None
        return _solve(p, self.settings.solver)


def clean_povm(E):
    """Nearest-style repair: clip negative eigenvalues, then renormalise by S^{-1/2} . S^{-1/2}."""
    E = np.array([(e + e.conj().T) / 2 for e in E])
    w, v = np.linalg.eigh(E)
    E = np.einsum("aij,aj,akj->aik", v, np.clip(w, 0, None), v.conj())
    sw, sv = np.linalg.eigh(E.sum(axis=0))
    if sw.min() <= 1e-12:
        return None
    r = sv @ np.diag(sw ** -0.5) @ sv.conj().T
    return chop(np.array([r @ e @ r for e in E]))


def clean_states(S):
    """Normalised PSD states from unnormalised blocks; blocks without usable weight become maximally mixed."""
    d = S.shape[-1]
    out = []
    for m in S:
        w, v = np.linalg.eigh((m + m.conj().T) / 2)
        w = np.clip(w, 0, None)
        t = w.sum()
        out.append((v * (w / t)) @ v.conj().T if t > EPS_WEIGHT else np.eye(d) / d)
    return chop(np.array(out))


def chop(a, tol=1e-13):
    """Zero out entries far below solver precision; they only hurt the solver's scaling."""
    re, im = a.real.copy(), a.imag.copy()
    re[np.abs(re) < tol] = 0
    im[np.abs(im) < tol] = 0
    return re + 1j * im


def _normalise_povms(Et, q, old):
    out = np.array(old, dtype=complex)
    for l in range(len(q)):
        if q[l] > EPS_WEIGHT:
            c = clean_povm(Et[l] / q[l])
            if c is not None:
                out[l] = c
    return out


def _usable(sol):
    if sol.status == "optimal":
        return True
    return sol.backend_status in ("Solved", "AlmostSolved") and sol.residuals["primal"] <= STEP_FEAS


def _solve(p, solver):
    """Each step only needs a primal-feasible point; the final decomposition is re-verified.
    Unusable results are retried with the backend's fallback profiles, then at looser tolerances."""
    solver = solver or SolverSettings()
    sol = solve(p, settings=replace(solver, retry=False))
    if _usable(sol):
        return sol
    sol = solve(p, settings=replace(solver, retry=True))
    if _usable(sol):
        return sol
    sol = solve(p, settings=replace(solver, tol_feas=1e-8, tol_gap_abs=1e-8, tol_gap_rel=1e-8))
    return sol if _usable(sol) else None


# ---------------------------------------------------------------------------
# teleportation: F_a = sum_l N_{a|l} (x) sigma~_l

class TeleportSeesaw(_Seesaw):
    def __init__(self, J, rho_b, dims, card, settings, seed_marginal=True):
        self.J, self.rho_b, self.dims = np.asarray(J), rho_b, tuple(dims)
        self.card, self.settings, self.seed_marginal = card, settings, seed_marginal

    def states_step(self, st):
        dV, dB = self.dims
        N = st["N"]
        L, o = N.shape[:2]
        p = ConicProgram("seesaw-teleport-states")
        sig = [p.hermitian(f"s{l}", dB) for l in range(L)]
        s = p.real("s")
        for x in sig:
            p.add_psd("states", x)
        for a in range(o):
            terms = [kron(N[l, a], sig[l]) for l in range(L)]
            p.add_psd("noise", sum(terms[1:], terms[0]) - self.J[a])
        p.add_eq("marginal", sum(sig[1:], sig[0]) - (s / dV) * self.rho_b)
        p.minimize(s - 1.0)
        sol = self.solve_step(p)
        if sol is None:
            return None
        st = dict(st, sigma_t=np.array([sol.assignments[f"s{l}"] for l in range(L)]), s=sol.assignments["s"])
        return st["s"] - 1, st

    def povm_step(self, st):
        dV, dB = self.dims
        sig_t = st["sigma_t"]
        L = sig_t.shape[0]
        o = self.J.shape[0]
        sig = clean_states(sig_t)
        p = ConicProgram("seesaw-teleport-povms")
        Nt = [[p.hermitian(f"N{l}_{a}", dV) for a in range(o)] for l in range(L)]
        q = p.real("q", L)
        s = p.real("s")
        p.add_nonneg("weights", q)
        for l in range(L):
            for a in range(o):
                p.add_psd("povm-pos", Nt[l][a])
            p.add_eq("povm", sum(Nt[l][1:], Nt[l][0]) - q[l] * np.eye(dV))
        wsum = [q[l] * sig[l] for l in range(L)]
        p.add_eq("marginal", sum(wsum[1:], wsum[0]) - (s / dV) * self.rho_b)
        for a in range(o):
            terms = [kron(Nt[l][a], sig[l]) for l in range(L)]
            p.add_psd("noise", sum(terms[1:], terms[0]) - self.J[a])
        p.minimize(s - 1.0)
        sol = self.solve_step(p)
        if sol is None:
            return None
        qv = np.atleast_1d(sol.assignments["q"])
        Ntv = np.array([[sol.assignments[f"N{l}_{a}"] for a in range(o)] for l in range(L)])
        N = _normalise_povms(Ntv, qv, st["N"])
        sv = sol.assignments["s"]
        sigma_t = np.array([qv[l] * sig[l] for l in range(L)])
        return sv - 1, dict(st, N=N, sigma=sig, sigma_t=sigma_t, s=sv)

    def init(self, index, rng):
        dV, dB = self.dims
        o = self.J.shape[0]
        N = np.array([random_povm(dV, o, rng, "mixed") for _ in range(self.card)])
        if self.seed_marginal and index == 0:
            N[0] = np.array([dV * partial_trace(j, [1], self.dims) for j in self.J])
        return {"N": N}

    component_keys = ("N", "sigma_t", "sigma")

    def weights(self, st):
        return np.trace(st["sigma_t"], axis1=1, axis2=2).real

    def steps(self):
        return [self.states_step, self.povm_step]


def teleport_decomposition(J, rho_b, dims, st):
    """Free part F_a = sum_l N_{a|l} (x) sigma~_l and noise K_a = (F_a - J_a)/r from a see-saw state."""
    N, sig_t, s = st["N"], st["sigma_t"], st["s"]
    # rescale so that sum_l sigma~_l = rho_b / d_V exactly matches the free normalisation F / s
    F = np.einsum("laij,lkm->aikjm", N, sig_t).reshape(J.shape)
    r = s - 1
    K = (F - J) / r if r > CLAMP else J.copy()
    return {"r": r, "povms": N, "states": sig_t / s, "free": F / s, "noise": K}


def teleport_residual(J, rho_b, dims, dec) -> float:
    dV, dB = dims
    r, N, S, K = dec["r"], dec["povms"], dec["states"], dec["noise"]
    F = np.einsum("laij,lkm->aikjm", N, S).reshape(J.shape)
    m = np.kron(np.eye(dV) / dV, rho_b)
    res = float(np.abs(J + r * K - (1 + r) * F).max())
    res = max(res, float(np.abs(K.sum(axis=0) - m).max()), float(np.abs(S.sum(axis=0) - rho_b / dV).max()))
    res = max(res, float(np.abs(N.sum(axis=1) - np.eye(dV)).max()))
    mins = [np.linalg.eigvalsh(x)[0] for x in list(K) + list(S) + list(N.reshape(-1, dV, dV))]
    return max(res, -float(min(mins)), 0.0)


# ---------------------------------------------------------------------------
# Buscemi: F_ab = sum_l E~_{a|l} (x) D_{b|l}

class BuscemiSeesaw(_Seesaw):
    def __init__(self, M, dims, card, settings, seed_marginal=True):
        self.M, self.dims = np.asarray(M), tuple(dims)
        dV, dW = self.dims
        self.c = np.array([partial_trace(cb, [0], self.dims) / dV for cb in self.M.sum(axis=0)])
        self.card, self.settings, self.seed_marginal = card, settings, seed_marginal

    def bob_step(self, st):
        dV, dW = self.dims
        E = st["E"]
        L, oa = E.shape[:2]
        ob = self.M.shape[1]
        p = ConicProgram("seesaw-buscemi-bob")
        Dt = [[p.hermitian(f"D{l}_{b}", dW) for b in range(ob)] for l in range(L)]
        q = p.real("q", L)
        s = p.real("s")
        p.add_nonneg("weights", q)
        for l in range(L):
            for b in range(ob):
                p.add_psd("povm-pos", Dt[l][b])
            p.add_eq("povm", sum(Dt[l][1:], Dt[l][0]) - q[l] * np.eye(dW))
        for b in range(ob):
            col = [Dt[l][b] for l in range(L)]
            p.add_eq("bob-marginal", sum(col[1:], col[0]) - s * self.c[b])
        for a in range(oa):
            for b in range(ob):
                terms = [kron(E[l, a], Dt[l][b]) for l in range(L)]
                p.add_psd("noise", sum(terms[1:], terms[0]) - self.M[a, b])
        p.minimize(s - 1.0)
        sol = self.solve_step(p)
        if sol is None:
            return None
        qv = np.atleast_1d(sol.assignments["q"])
        Dv = np.array([[sol.assignments[f"D{l}_{b}"] for b in range(ob)] for l in range(L)])
        D = _normalise_povms(Dv, qv, st.get("D", np.array([[np.eye(dW) / ob] * ob] * L)))
        return sol.assignments["s"] - 1, dict(st, D=D, D_t=Dv, q=qv, s=sol.assignments["s"])

    def alice_step(self, st):
        dV, dW = self.dims
        D = st["D"]
        L, ob = D.shape[:2]
        oa = self.M.shape[0]
        p = ConicProgram("seesaw-buscemi-alice")
        Et = [[p.hermitian(f"E{l}_{a}", dV) for a in range(oa)] for l in range(L)]
        q = p.real("q", L)
        s = p.real("s")
        p.add_nonneg("weights", q)
        for l in range(L):
            for a in range(oa):
                p.add_psd("povm-pos", Et[l][a])
            p.add_eq("povm", sum(Et[l][1:], Et[l][0]) - q[l] * np.eye(dV))
        for b in range(ob):
            terms = [q[l] * D[l, b] for l in range(L)]
            p.add_eq("bob-marginal", sum(terms[1:], terms[0]) - s * self.c[b])
        for a in range(oa):
            for b in range(ob):
                terms = [kron(Et[l][a], D[l, b]) for l in range(L)]
                p.add_psd("noise", sum(terms[1:], terms[0]) - self.M[a, b])
        p.minimize(s - 1.0)
        sol = self.solve_step(p)
        if sol is None:
            return None
        qv = np.atleast_1d(sol.assignments["q"])
        Ev = np.array([[sol.assignments[f"E{l}_{a}"] for a in range(oa)] for l in range(L)])
        E = _normalise_povms(Ev, qv, st["E"])
        return sol.assignments["s"] - 1, dict(st, E=E, q=qv, s=sol.assignments["s"])

    def init(self, index, rng):
        dV, dW = self.dims
        oa = self.M.shape[0]
        E = np.array([random_povm(dV, oa, rng, "mixed") for _ in range(self.card)])
        if self.seed_marginal and index == 0:
            E[0] = np.array([partial_trace(ma, [1], self.dims) / dW for ma in self.M.sum(axis=1)])
        return {"E": E}

    component_keys = ("E", "D", "D_t", "q")

    def weights(self, st):
        return st["q"]

    def steps(self):
        return [self.bob_step, self.alice_step]


def _min_eig_all(blocks):
    d = blocks[0].shape[-1]
    return min(float(np.linalg.eigvalsh(x)[0]) for x in np.asarray(blocks).reshape(-1, d, d))


def buscemi_decomposition(M, dims, st):
    """Weighted form: F_ab = sum_l E_{a|l} (x) D~_{b|l} with D~_{b|l} = p(l) D_{b|l}."""
    E, Dt, s = st["E"], st["D_t"], st["s"]
    F = np.einsum("laij,lbkm->abikjm", E, Dt).reshape(M.shape)
    r = s - 1
    L = (F - M) / r if r > CLAMP else M.copy()
    return {"r": r, "p_lambda": st["q"] / s, "alice_povms": E, "bob_weighted": Dt / s, "free": F / s, "noise": L}


def buscemi_residual(M, dims, dec) -> float:
    r, p, E, Dw, Lz = dec["r"], dec["p_lambda"], dec["alice_povms"], dec["bob_weighted"], dec["noise"]
    dV, dW = dims
    F = np.einsum("laij,lbkm->abikjm", E, Dw).reshape(M.shape)
    res = float(np.abs(M + r * Lz - (1 + r) * F).max())
    C = M.sum(axis=0)
    res = max(res, float(np.abs(Lz.sum(axis=0) - C).max()), abs(float(p.sum()) - 1), -float(p.min()))
    res = max(res, float(np.abs(E.sum(axis=1) - np.eye(dV)).max()),
              float(np.abs(Dw.sum(axis=1) - p[:, None, None] * np.eye(dW)).max()))
    return max(res, -min(_min_eig_all(Lz), _min_eig_all(E), _min_eig_all(Dw)), 0.0)


# ---------------------------------------------------------------------------
# generalised incompatibility: F_a = sum_l H_{a|l} (x) G~_l on A' (x) A

class GeneralisedSeesaw(_Seesaw):
    def __init__(self, M, inputs, dims, card, settings):
        self.M, self.inputs, self.dims = np.asarray(M), inputs, tuple(dims)
        self.card, self.settings = card, settings
        self.basis = independent_inputs(inputs)
        self.bigs = [np.kron(inputs.states[x].matrix, np.eye(dims[1])) for x in self.basis]

    def _model(self, p, F, K):
        o = len(F)
        for x, big in zip(self.basis, self.bigs):
            for a in range(o):
                p.add_eq("model", ptrace((F[a] - K[a]) @ big, 0, self.dims) - self.M[x, a])

    def parent_step(self, st):
        d1, d = self.dims
        H = st["H"]
        L, o = H.shape[:2]
        p = ConicProgram("seesaw-generalised-parent")
        G = [p.hermitian(f"G{l}", d) for l in range(L)]
        K = [p.hermitian(f"K{a}", d1 * d, self.dims) for a in range(o)]
        s = p.real("s")
        for g in G:
            p.add_psd("parent-pos", g)
        for k in K:
            p.add_psd("noise", k)
        p.add_eq("parent", sum(G[1:], G[0]) - s * np.eye(d))
        p.add_eq("noise-parent", sum(K[1:], K[0]) - (s - 1.0) * np.eye(d1 * d))
        F = []
        for a in range(o):
            terms = [kron(H[l, a], G[l]) for l in range(L)]
            F.append(sum(terms[1:], terms[0]))
        self._model(p, F, K)
        p.minimize(s - 1.0)
        sol = self.solve_step(p)
        if sol is None:
            return None
        Gt = np.array([sol.assignments[f"G{l}"] for l in range(L)])
        Kv = np.array([sol.assignments[f"K{a}"] for a in range(o)])
        return sol.assignments["s"] - 1, dict(st, G_t=Gt, K=Kv, s=sol.assignments["s"])

    def response_step(self, st):
        d1, d = self.dims
        Gt = st["G_t"]
        L = Gt.shape[0]
        o = self.M.shape[1]
        G = clean_states(Gt)
        p = ConicProgram("seesaw-generalised-response")
        Ht = [[p.hermitian(f"H{l}_{a}", d1) for a in range(o)] for l in range(L)]
        K = [p.hermitian(f"K{a}", d1 * d, self.dims) for a in range(o)]
        q = p.real("q", L)
        s = p.real("s")
        p.add_nonneg("weights", q)
        for l in range(L):
            for a in range(o):
                p.add_psd("povm-pos", Ht[l][a])
            p.add_eq("povm", sum(Ht[l][1:], Ht[l][0]) - q[l] * np.eye(d1))
        for k in K:
            p.add_psd("noise", k)
        terms = [q[l] * G[l] for l in range(L)]
        p.add_eq("parent", sum(terms[1:], terms[0]) - s * np.eye(d))
        p.add_eq("noise-parent", sum(K[1:], K[0]) - (s - 1.0) * np.eye(d1 * d))
        F = []
        for a in range(o):
            t = [kron(Ht[l][a], G[l]) for l in range(L)]
            F.append(sum(t[1:], t[0]))
        self._model(p, F, K)
        p.minimize(s - 1.0)
        sol = self.solve_step(p)
        if sol is None:
            return None
        qv = np.atleast_1d(sol.assignments["q"])
        Hv = np.array([[sol.assignments[f"H{l}_{a}"] for a in range(o)] for l in range(L)])
        H = _normalise_povms(Hv, qv, st["H"])
        G_t = np.array([qv[l] * G[l] for l in range(L)])
        Kv = np.array([sol.assignments[f"K{a}"] for a in range(o)])
        return sol.assignments["s"] - 1, dict(st, H=H, G_t=G_t, K=Kv, s=sol.assignments["s"])

    def init(self, index, rng):
        d1, d = self.dims
        o = self.M.shape[1]
        return {"H": np.array([random_povm(d1, o, rng, "mixed") for _ in range(self.card)])}

    component_keys = ("H", "G_t")

    def weights(self, st):
        return np.trace(st["G_t"], axis1=1, axis2=2).real

    def steps(self):
        return [self.parent_step, self.response_step]


# ---------------------------------------------------------------------------
# behaviours with quantum inputs: p(ab|xy) = sum_l p(l) tr[H_{a|l} w_x] tr[H_{b|l} z_y]

class BehaviourSeesaw(_Seesaw):
    def __init__(self, table, inputs_a, inputs_b, card, settings):
        self.p = np.asarray(table)
        self.wa = np.array([s.matrix for s in inputs_a.states])
        self.wb = np.array([s.matrix for s in inputs_b.states])
        self.card, self.settings = card, settings

    def _step(self, st, side):
        oa, ob, ia, ib = self.p.shape
        if side == "a":
            fixed = st["HB"]  # l, b, d, d
            resp = np.einsum("lbij,yji->lby", fixed, self.wb).real
            states, o_var, d = self.wa, oa, self.wa.shape[-1]
        else:
            fixed = st["HA"]
            resp = np.einsum("laij,xji->lax", fixed, self.wa).real
            states, o_var, d = self.wb, ob, self.wb.shape[-1]
        L = fixed.shape[0]
        p = ConicProgram(f"seesaw-behaviour-{side}")
        Ht = [[p.hermitian(f"H{l}_{k}", d) for k in range(o_var)] for l in range(L)]
        q = p.real("q", L)
        p.add_nonneg("weights", q)
        for l in range(L):
            for k in range(o_var):
                p.add_psd("povm-pos", Ht[l][k])
            p.add_eq("povm", sum(Ht[l][1:], Ht[l][0]) - q[l] * np.eye(d))
        probs = [[[(Ht[l][k] @ states[u]).trace().real() for u in range(len(states))] for k in range(o_var)]
                 for l in range(L)]
        for a in range(oa):
            for b in range(ob):
                for x in range(ia):
                    for y in range(ib):
                        if side == "a":
                            terms = [probs[l][a][x] * resp[l, b, y] for l in range(L)]
                        else:
                            terms = [probs[l][b][y] * resp[l, a, x] for l in range(L)]
                        p.add_nonneg("noise", sum(terms[1:], terms[0]) - self.p[a, b, x, y])
        p.minimize((np.ones((1, L)) @ q) - 1.0)
        sol = self.solve_step(p)
        if sol is None:
            return None
        qv = np.atleast_1d(sol.assignments["q"])
        Hv = np.array([[sol.assignments[f"H{l}_{k}"] for k in range(o_var)] for l in range(L)])
        key = "HA" if side == "a" else "HB"
        H = _normalise_povms(Hv, qv, st.get(key, Hv))
        sv = float(qv.sum())
        return sv - 1, dict(st, **{key: H, key + "_t": Hv}, q=qv, s=sv)

    def init(self, index, rng):
        oa, ob = self.p.shape[:2]
        return {"HB": np.array([random_povm(self.wb.shape[-1], ob, rng, "mixed") for _ in range(self.card)])}

    component_keys = ("HA", "HA_t", "HB", "HB_t", "q")

    def weights(self, st):
        return st["q"]

    def steps(self):
        return [lambda s: self._step(s, "a"), lambda s: self._step(s, "b")]


def behaviour_decomposition(p, wa, wb, st):
    """Weighted form: Alice's responses carry the weights, HA~_{a|l} = p(l) H_{a|l}."""
    HAt, HB, s = st["HA_t"], st["HB"], st["s"]
    pa = np.einsum("laij,xji->lax", HAt, wa).real
    pb = np.einsum("lbij,yji->lby", HB, wb).real
    model = np.einsum("lax,lby->abxy", pa, pb)
    r = s - 1
    noise = (model - p) / r if r > CLAMP else p.copy()
    return {"r": r, "p_lambda": st["q"] / s, "alice_weighted": HAt / s, "bob_povms": HB, "noise": noise}


def behaviour_seesaw_residual(p, wa, wb, dec) -> float:
    r, w, HAw, HB, noise = dec["r"], dec["p_lambda"], dec["alice_weighted"], dec["bob_povms"], dec["noise"]
    pa = np.einsum("laij,xji->lax", HAw, wa).real
    pb = np.einsum("lbij,yji->lby", HB, wb).real
    model = np.einsum("lax,lby->abxy", pa, pb)
    dA, dB = wa.shape[-1], wb.shape[-1]
    res = float(np.abs(p + r * noise - (1 + r) * model).max())
    res = max(res, -float(noise.min()), float(np.abs(noise.sum(axis=(0, 1)) - 1).max()))
    res = max(res, float(np.abs(HAw.sum(axis=1) - w[:, None, None] * np.eye(dA)).max()),
              float(np.abs(HB.sum(axis=1) - np.eye(dB)).max()), abs(float(w.sum()) - 1))
    return max(res, -min(_min_eig_all(HAw), _min_eig_all(HB)), 0.0)


def generalised_decomposition(M, inputs, dims, st):
    """Parents carry the weights: G~_l = p(l) G_l with sum_l G~_l = 1."""
    H, Gt, K, s = st["H"], st["G_t"], st["K"], st["s"]
    r = s - 1
    noise = K / r if r > CLAMP else np.array([np.eye(K.shape[-1]) / K.shape[0]] * K.shape[0])
    return {"r": r, "responses": H, "parent_weighted": Gt / s, "noise": noise}


def generalised_residual(M, inputs, dims, dec) -> float:
    r, H, Gw, K = dec["r"], dec["responses"], dec["parent_weighted"], dec["noise"]
    d1, d = dims
    F = np.einsum("laij,lkm->aikjm", H, Gw).reshape(K.shape)
    res = 0.0
    for x, w in enumerate(inputs.states):
        big = np.kron(w.matrix, np.eye(d))
        for a in range(M.shape[1]):
            lhs = partial_trace(((1 + r) * F[a] - r * K[a]) @ big, [0], dims)
            res = max(res, float(np.abs(lhs - M[x, a]).max()))
    res = max(res, float(np.abs(Gw.sum(axis=0) - np.eye(d)).max()), float(np.abs(K.sum(axis=0) - np.eye(d1 * d)).max()),
              float(np.abs(H.sum(axis=1) - np.eye(d1)).max()))
    return max(res, -min(_min_eig_all(Gw), _min_eig_all(K), _min_eig_all(H)), 0.0)
