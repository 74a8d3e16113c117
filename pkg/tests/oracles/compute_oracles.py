"""Offline reference values, computed once and frozen into frozen.json.

Deliberately independent of qres: measurement sets are rebuilt from Pauli
matrices, the incompatibility program is written in inequality form through
cvxpy and solved by CVXOPT, a see-saw over parent POVMs gives a second,
non-convex route to the same numbers, and the local-polytope LP goes through
scipy's HiGHS over an explicitly enumerated vertex list.

Run from the repository root:  python3 tests/oracles/compute_oracles.py
The long see-saw runs (10^4 restarts for X/Z, 10^3 for the trine threshold
check) are a separate pass that only updates their keys:
    python3 tests/oracles/compute_oracles.py --seesaw
"""
from __future__ import annotations

import itertools
import json
from pathlib import Path

import cvxpy as cp
import numpy as np
from scipy.optimize import linprog

X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
I2 = np.eye(2)


def two_outcome(direction, t):
    s = direction[0] * X + direction[1] * Z
    return [(I2 + t * s) / 2, (I2 - t * s) / 2]


def xz(t):
    return [two_outcome((1, 0), t), two_outcome((0, 1), t)]


def trine(t):
    angles = 2 * np.pi * np.arange(3) / 3
    return [two_outcome((np.sin(a), np.cos(a)), t) for a in angles]


def incompat_robustness(mset, solver="CVXOPT"):
    """min r  s.t.  sum_{lam: lam(x)=a} G_lam >= M_{a|x},  sum_lam G_lam = (1+r) 1,  G_lam >= 0."""
    n, o, d = len(mset), len(mset[0]), mset[0][0].shape[0]
    lams = list(itertools.product(range(o), repeat=n))
    G = [cp.Variable((d, d), hermitian=True) for _ in lams]
    r = cp.Variable()
    cons = [g >> 0 for g in G]
    for x in range(n):
        for a in range(o):
            cons.append(sum(G[k] for k, lam in enumerate(lams) if lam[x] == a) - mset[x][a] >> 0)
    cons.append(sum(G) == (1 + r) * np.eye(d))
    prob = cp.Problem(cp.Minimize(r), cons)
    prob.solve(solver=solver)
    return float(r.value)


class ParentSeesaw:
    """Alternate between parent POVMs and stochastic post-processings with a fixed number of parents.

    Step 1 fixes p(a|x,lam) and solves for unnormalised parents G~ and r.
    Step 2 fixes the normalised parents G and solves for Q = (1+r) p.
    """

    def __init__(self, mset, card):
        self.n, self.o, self.d = len(mset), len(mset[0]), mset[0][0].shape[0]
        n, o, d = self.n, self.o, self.d
        self.card = card
        self.P = [[[cp.Parameter(nonneg=True) for _ in range(o)] for _ in range(n)] for _ in range(card)]
        self.Gt = [cp.Variable((d, d), hermitian=True) for _ in range(card)]
        self.r1 = cp.Variable()
        c1 = [g >> 0 for g in self.Gt]
        for x in range(n):
            for a in range(o):
                c1.append(sum(self.P[k][x][a] * self.Gt[k] for k in range(card)) - mset[x][a] >> 0)
        c1.append(sum(self.Gt) == (1 + self.r1) * np.eye(d))
        self.step1 = cp.Problem(cp.Minimize(self.r1), c1)

        self.G = [cp.Parameter((d, d), hermitian=True) for _ in range(card)]
        self.Q = cp.Variable((card, n * o), nonneg=True)
        self.r2 = cp.Variable()
        c2 = []
        for x in range(n):
            for a in range(o):
                c2.append(sum(self.Q[k, x * o + a] * self.G[k] for k in range(card)) - mset[x][a] >> 0)
            c2.append(cp.sum(self.Q[:, x * o:(x + 1) * o], axis=1) == 1 + self.r2)
        self.step2 = cp.Problem(cp.Minimize(self.r2), c2)

    def run(self, rng, max_iter=30, tol=1e-10):
        n, o = self.n, self.o
        for k in range(self.card):
            for x in range(n):
                p = rng.dirichlet(np.full(o, 0.1))
                for a in range(o):
                    self.P[k][x][a].value = p[a]
        best = np.inf
        for _ in range(max_iter):
            try:
                self.step1.solve(solver="CLARABEL")
            except cp.error.SolverError:
                return best if np.isfinite(best) else np.nan
            if self.step1.status not in ("optimal", "optimal_inaccurate"):
                return np.nan
            r = float(self.r1.value)
            for k in range(self.card):
                g = self.Gt[k].value / (1 + r)
                self.G[k].value = (g + g.conj().T) / 2
            try:
                self.step2.solve(solver="CLARABEL")
            except cp.error.SolverError:
                return min(best, r)
            if self.step2.status not in ("optimal", "optimal_inaccurate"):
                return min(best, r)
            r2 = float(self.r2.value)
            q = np.maximum(self.Q.value, 0) / (1 + r2)
            for k in range(self.card):
                for x in range(n):
                    row = q[k, x * o:(x + 1) * o]
                    row = row / row.sum() if row.sum() > 0 else np.ones(o) / o
                    for a in range(o):
                        self.P[k][x][a].value = row[a]
            improved = best - min(r, r2)
            best = min(best, r, r2)
            if improved < tol:
                break
        return best


def seesaw_oracle(mset, card, restarts, seed):
    ss = ParentSeesaw(mset, card)
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(restarts)]
    vals = np.array([ss.run(g) for g in rngs])
    vals = vals[np.isfinite(vals)]
    return {"best": float(vals.min()), "restarts": int(restarts), "finite": int(vals.size),
            "median": float(np.median(vals))}


def threshold(family, lo, hi, width=1e-6, crossing=1e-7):
    while hi - lo > width:
        mid = (lo + hi) / 2
        if incompat_robustness(family(mid)) > crossing:
            hi = mid
        else:
            lo = mid
    return lo, hi


def local_vertices(oa, ob, ia, ib):
    out = []
    for fa in itertools.product(range(oa), repeat=ia):
        for fb in itertools.product(range(ob), repeat=ib):
            v = np.zeros((oa, ob, ia, ib))
            for x in range(ia):
                for y in range(ib):
                    v[fa[x], fb[y], x, y] = 1
            out.append(v.ravel())
    return np.array(out)


def behaviour_robustness(p):
    """min sum pi - 1  s.t.  sum_v pi_v v >= p, pi >= 0, over the listed local vertices."""
    V = local_vertices(*p.shape)
    res = linprog(np.ones(len(V)), A_ub=-V.T, b_ub=-p.ravel(), bounds=(0, None), method="highs")
    return float(res.fun - 1)


def pr_box():
    p = np.zeros((2, 2, 2, 2))
    for a, b, x, y in itertools.product(range(2), repeat=4):
        p[a, b, x, y] = 0.5 if (a ^ b) == (x & y) else 0
    return p


FROZEN = Path(__file__).with_name("frozen.json")


def write(frozen):
    FROZEN.write_text(json.dumps(frozen, indent=1, sort_keys=True) + "\n")


def long_seesaw():
    frozen = json.loads(FROZEN.read_text())
    t = frozen["trine_threshold"]
    frozen["trine_threshold_seesaw"]["minus"] = seesaw_oracle(trine(t - 0.01), 8, 1000, 7)["best"]
    frozen["trine_threshold_seesaw"]["minus_restarts"] = 1000
    write(frozen)
    frozen["xz_incompat_seesaw"] = seesaw_oracle(xz(1.0), 4, 10_000, 2024)
    write(frozen)
    print(json.dumps(frozen, indent=1, sort_keys=True))


def main():
    frozen = {}
    frozen["xz_incompat"] = incompat_robustness(xz(1.0))
    frozen["xz_incompat_scs"] = incompat_robustness(xz(1.0), solver="SCS")
    frozen["trine_incompat"] = incompat_robustness(trine(1.0))
    lo, hi = threshold(xz, 0.5, 1.0)
    frozen["xz_threshold"] = (lo + hi) / 2
    frozen["xz_threshold_checks"] = {"minus": incompat_robustness(xz(lo - 0.01)),
                                     "plus": incompat_robustness(xz(hi + 0.01))}
    lo, hi = threshold(trine, 0.4, 1.0)
    frozen["trine_threshold"] = (lo + hi) / 2
    frozen["trine_threshold_checks"] = {"minus": incompat_robustness(trine(lo - 0.01)),
                                        "plus": incompat_robustness(trine(hi + 0.01))}
    frozen["pr_box_local"] = behaviour_robustness(pr_box())
    frozen["xz_incompat_seesaw"] = seesaw_oracle(xz(1.0), 4, 200, 2024)
    for name, fam, card in (("xz", xz, 4), ("trine", trine, 8)):
        t = frozen[f"{name}_threshold"]
        frozen[f"{name}_threshold_seesaw"] = {
            "minus": seesaw_oracle(fam(t - 0.01), card, 100, 7)["best"],
            "plus": seesaw_oracle(fam(t + 0.01), card, 100, 8)["best"]}
    frozen["_solver"] = "cvxpy " + cp.__version__ + " / CVXOPT; scipy HiGHS for the LP"
    write(frozen)
    print(json.dumps(frozen, indent=1, sort_keys=True))


if __name__ == "__main__":
    import sys

    long_seesaw() if "--seesaw" in sys.argv[1:] else main()
