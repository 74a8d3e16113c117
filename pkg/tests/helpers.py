"""Shared numerical checks used by the unit tests and the acceptance suite."""
import numpy as np

from qres.operators import heisenberg_weyl, max_entangled, permute_systems, transpose_trick, transpose_trick_direct
from qres.operators import choi_teleportation, partial_trace
from qres.sampling import random_hermitian, random_povm, random_separable, random_state

# global system order V, A, B, V'; kron(X^{VV'}, Y^{AB}) arrives as (V, V', A, B)
_TO_VABV = [0, 2, 3, 1]


def bipartite_identity_sides(M, W, P, d):
    """Both sides of tr[(M^{VA} (x) phi^{BV'})(W^T{VV'} (x) P^{AB})] = tr[(M^{VA} (x) W^{BV'})(Phi^{VV'} (x) P^{AB})] / d.

    phi is the normalised maximally entangled state and Phi = d phi the
    unnormalised projector onto sum_i |ii>. W^{BV'} carries W's V' factor on B
    and its V factor on V'.
    """
    phi = max_entangled(d).matrix
    dims = (d, d, d, d)
    w_bv = permute_systems(W, [1, 0], (d, d))
    lhs = np.trace(np.kron(M, phi) @ permute_systems(np.kron(W.T, P), _TO_VABV, dims))
    rhs = np.trace(np.kron(M, w_bv) @ permute_systems(np.kron(d * phi, P), _TO_VABV, dims)) / d
    return lhs, rhs


def bipartite_identity_deviation(rng, d):
    M = random_hermitian(d * d, rng)
    W = random_hermitian(d * d, rng)
    P = random_hermitian(d * d, rng)
    lhs, rhs = bipartite_identity_sides(M, W, P, d)
    return abs(lhs - rhs)


def transpose_trick_deviation(rng, d):
    o = random_hermitian(d, rng)
    return float(np.abs(transpose_trick(o, d) - transpose_trick_direct(o, d)).max())


def twirl_deviation(rng, d):
    rho = random_hermitian(d, rng)
    tw = sum(u @ rho @ u.conj().T for u in heisenberg_weyl(d))
    return float(np.abs(tw - d * np.trace(rho) * np.eye(d)).max())


def choi_marginal_deviation(rng, d, outcomes=3):
    rho = random_state(d * d, rng)
    J = choi_teleportation(random_povm(d * d, outcomes, rng), rho, (d, d), (d, d))
    ref = np.kron(np.eye(d) / d, partial_trace(rho, [0], (d, d)))
    return float(np.abs(sum(j.matrix for j in J) - ref).max())


# ---------------------------------------------------------------------------
# free objects: each built from an explicit free decomposition

from qres.models import (Assemblage, Behaviour, Povm, StandardMeasurementSet, distributed_povm, make_state)  # noqa: E402


def _stochastic(rng, rows, outcomes):
    return rng.dirichlet(np.ones(outcomes), size=rows)


def compatible_set(rng, inputs=2, outcomes=2, parents=4, d=2):
    """M_{a|x} = sum_lam p(a|x,lam) G_lam."""
    G = random_povm(d, parents, rng)
    P = np.array([_stochastic(rng, inputs, outcomes) for _ in range(parents)])  # lam, x, a
    return StandardMeasurementSet([[sum(P[k, x, a] * G[k] for k in range(parents)) for a in range(outcomes)]
                                   for x in range(inputs)])


def lhs_assemblage(rng, inputs=2, outcomes=2, hidden=4, d=2):
    """tau_{a|x} = sum_lam p(a|x,lam) p(lam) sigma_lam."""
    w = rng.dirichlet(np.ones(hidden))
    S = [random_state(d, rng) for _ in range(hidden)]
    P = np.array([_stochastic(rng, inputs, outcomes) for _ in range(hidden)])
    return Assemblage([[sum(P[k, x, a] * w[k] * S[k] for k in range(hidden)) for a in range(outcomes)]
                       for x in range(inputs)])


def local_behaviour(rng, oa=2, ob=2, ia=2, ib=2, hidden=5):
    """p(a,b|x,y) = sum_lam p(lam) p(a|x,lam) p(b|y,lam)."""
    w = rng.dirichlet(np.ones(hidden))
    table = np.zeros((oa, ob, ia, ib))
    for k in range(hidden):
        pa = _stochastic(rng, ia, oa)  # x, a
        pb = _stochastic(rng, ib, ob)
        table += w[k] * np.einsum("xa,yb->abxy", pa, pb)
    return Behaviour(table)


def separable_teleport_instance(rng):
    Ma = Povm(random_povm(4, 2, rng), (2, 2))
    return Ma, make_state(random_separable(2, 2, rng), (2, 2))


def separable_buscemi_instance(rng):
    Ma = Povm(random_povm(4, 2, rng), (2, 2))
    Mb = Povm(random_povm(4, 2, rng), (2, 2))
    return distributed_povm(Ma, Mb, make_state(random_separable(2, 2, rng), (2, 2)))


def free_objects(seed=11):
    """30 labelled (kind, object) pairs with explicit free decompositions."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(8):
        out.append(("compatible-set", compatible_set(rng, inputs=2 + k % 2, outcomes=2 + (k // 4))))
    for k in range(7):
        out.append(("lhs-assemblage", lhs_assemblage(rng, inputs=2 + k % 2)))
    for k in range(7):
        out.append(("local-behaviour", local_behaviour(rng, ia=2 + k % 2)))
    for _ in range(4):
        out.append(("separable-teleport", separable_teleport_instance(rng)))
    for _ in range(4):
        out.append(("separable-buscemi", separable_buscemi_instance(rng)))
    return out
