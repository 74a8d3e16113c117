"""Seeded random quantum objects used by tests, corpora and witness sampling."""
from __future__ import annotations

import numpy as np


def rng_from(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def ginibre(rng, rows, cols):
    return (rng.normal(size=(rows, cols)) + 1j * rng.normal(size=(rows, cols))) / np.sqrt(2)


def random_unitary(d, rng) -> np.ndarray:
    q, r = np.linalg.qr(ginibre(rng, d, d))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_hermitian(d, rng) -> np.ndarray:
    g = ginibre(rng, d, d)
    return (g + g.conj().T) / 2


def random_state(d, rng, rank=None) -> np.ndarray:
    g = ginibre(rng, d, rank or d)
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_pure(d, rng) -> np.ndarray:
    v = ginibre(rng, d, 1)[:, 0]
    v /= np.linalg.norm(v)
    return np.outer(v, v.conj())


def random_povm(d, outcomes, rng, kind="mixed") -> list[np.ndarray]:
    """Random POVM.

    kind='rank1' gives rank-one elements from a random isometry (needs
    outcomes >= d), 'projective' splits a random basis among outcomes,
    'mixed' gives full-rank elements by pulling back Ginibre weights.
    """
    if kind == "rank1":
        if outcomes < d:
            kind = "projective"
        else:
            v = random_unitary(outcomes, rng)[:, :d]  # isometry C^d -> C^o
            return [np.outer(v[a].conj(), v[a]) for a in range(outcomes)]
    if kind == "projective":
        u = random_unitary(d, rng)
        labels = rng.permutation(np.arange(d) % outcomes) if d >= outcomes else rng.permutation(d)
        out = [np.zeros((d, d), dtype=complex) for _ in range(outcomes)]
        for k in range(d):
            out[labels[k]] += np.outer(u[:, k], u[:, k].conj())
        return out
    gs = [ginibre(rng, d, d) for _ in range(outcomes)]
    ps = [g @ g.conj().T for g in gs]
    s = sum(ps)
    w, v = np.linalg.eigh(s)
    inv_sqrt = v @ np.diag(w ** -0.5) @ v.conj().T
    return [inv_sqrt @ p @ inv_sqrt for p in ps]


def random_qubit_projective(rng) -> list[np.ndarray]:
    n = rng.normal(size=3)
    n /= np.linalg.norm(n)
    s = n[0] * np.array([[0, 1], [1, 0]]) + n[1] * np.array([[0, -1j], [1j, 0]]) + n[2] * np.diag([1, -1])
    return [(np.eye(2) + s) / 2, (np.eye(2) - s) / 2]


def random_channel_state(d, rng, kraus=2) -> np.ndarray:
    """(Lambda (x) id)(phi+) for a random channel; its second marginal is 1/d."""
    from .operators import max_entangled

    g = ginibre(rng, kraus * d, d)
    q, _ = np.linalg.qr(g)  # isometry d -> kraus*d
    ks = [q[k * d:(k + 1) * d] for k in range(kraus)]
    phi = max_entangled(d).matrix
    out = np.zeros((d * d, d * d), dtype=complex)
    for k in ks:
        big = np.kron(k, np.eye(d))
        out += big @ phi @ big.conj().T
    return out


def random_separable(dA, dB, rng, terms=3) -> np.ndarray:
    p = rng.dirichlet(np.ones(terms))
    return sum(p[k] * np.kron(random_state(dA, rng), random_state(dB, rng)) for k in range(terms))
