"""Truncated Dirichlet-process mixture of independent multinomials.

Prior over the true in-common value vectors: individual i gets a latent
class z_i drawn from stick-breaking weights pi (truncated at H sticks,
last stick forced to 1), and given z_i = h field j is multinomial with
probabilities phi[h, j, .].  The concentration alpha gets a gamma
hyperprior.  One block Gibbs sweep updates, in order: labels, sticks,
weights, multinomial probabilities, alpha.

Every individual in a pool shares the pool key as its value vector, so
the sweep works on unique keys with multiplicities.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .schema import InCommonSchema


@dataclass(frozen=True)
class DpHyper:
    H: int = 30
    a_alpha: float = 0.25
    b_alpha: float = 0.25
    dirichlet_a: float = 1.0

    def __post_init__(self):
        if self.H < 1:
            raise ValueError("need at least one latent class")
        if min(self.a_alpha, self.b_alpha, self.dirichlet_a) <= 0:
            raise ValueError("latent-class hyperparameters must be positive")


@dataclass
class Psi:
    phi: np.ndarray       # (H, J, max_d); cells past a field's cardinality are 0
    V: np.ndarray         # (H,) sticks, V[-1] == 1
    pi: np.ndarray        # (H,) weights
    alpha: float

    @property
    def H(self) -> int:
        return self.pi.shape[0]

    def copy(self) -> "Psi":
        return Psi(self.phi.copy(), self.V.copy(), self.pi.copy(), self.alpha)


def stick_breaking(V: np.ndarray) -> np.ndarray:
    """pi_h = V_h * prod_{g<h} (1 - V_g)."""
    pi = np.empty_like(V)
    remain = 1.0
    for h in range(V.shape[0]):
        pi[h] = V[h] * remain
        remain *= 1.0 - V[h]
    return pi


def prob_b_value(psi: Psi, h: int, j: int, value: int) -> float:
    """Multinomial probability of field j taking `value` in class h."""
    return float(psi.phi[h, j, value - 1])


def init_psi_from_prior(hyper: DpHyper, schema: InCommonSchema, rng) -> Psi:
    H = hyper.H
    card = schema.cardinalities
    alpha = rng.gamma(hyper.a_alpha) / hyper.b_alpha
    V = np.empty(H)
    if H > 1:
        V[:-1] = rng.beta(1.0, max(alpha, 1e-12), size=H - 1)
    V[-1] = 1.0
    pi = stick_breaking(V)
    phi = np.zeros((H, schema.J, int(card.max())))
    for j, d in enumerate(card):
        g = rng.gamma(hyper.dirichlet_a, size=(H, int(d)))
        phi[:, j, :d] = g / g.sum(axis=1, keepdims=True)
    return Psi(phi, V, pi, alpha)


def class_log_weights(psi: Psi, keys: np.ndarray) -> np.ndarray:
    """(K, H) log of pi_h times the product of phi over each key's fields."""
    with np.errstate(divide="ignore"):
        logpi = np.log(psi.pi)
        logphi = np.log(psi.phi)
    K, J = keys.shape
    W = np.broadcast_to(logpi, (K, psi.H)).copy()
    for j in range(J):
        W += logphi[:, j, keys[:, j] - 1].T
    return W


def draw_labels(psi: Psi, keys: np.ndarray, counts: np.ndarray,
                rng) -> list[np.ndarray]:
    """Labels for counts[k] individuals at each unique key, in key order."""
    W = class_log_weights(psi, keys)
    W -= W.max(axis=1, keepdims=True)
    P = np.exp(W)
    P /= P.sum(axis=1, keepdims=True)
    out = []
    for k in range(keys.shape[0]):
        cum = np.cumsum(P[k])
        u = rng.random(int(counts[k]))
        out.append(np.searchsorted(cum, u * cum[-1], side="right").astype(np.int64))
    return out


def gibbs_sweep(psi: Psi, keys: np.ndarray, counts: np.ndarray,
                hyper: DpHyper, schema: InCommonSchema, rng):
    """One full block sweep given the population of value vectors.

    Returns (new Psi, labels per key).  keys is (K, J) unique value rows,
    counts the individuals holding each row.
    """
    H = hyper.H
    labels = draw_labels(psi, keys, counts, rng)
    # per-key class occupancy, then stick and weight updates
    C = np.zeros((keys.shape[0], H), dtype=np.int64)
    for k, lab in enumerate(labels):
        np.add.at(C[k], lab, 1)
    m = C.sum(axis=0)
    tail = np.concatenate([np.cumsum(m[::-1])[::-1][1:], [0]])
    V = np.empty(H)
    if H > 1:
        V[:-1] = rng.beta(1.0 + m[:-1], psi.alpha + tail[:-1])
    V[-1] = 1.0
    np.clip(V[:-1], 1e-15, 1.0 - 1e-15, out=V[:-1])
    pi = stick_breaking(V)
    # multinomial probabilities per class and field
    card = schema.cardinalities
    phi = np.zeros_like(psi.phi)
    for j in range(schema.J):
        d = int(card[j])
        occ = np.zeros((H, d))
        vals = keys[:, j] - 1
        for v in range(d):
            sel = vals == v
            if sel.any():
                occ[:, v] = C[sel].sum(axis=0)
        g = rng.gamma(hyper.dirichlet_a + occ)
        phi[:, j, :d] = g / g.sum(axis=1, keepdims=True)
    # concentration
    log_tail_weight = math.log(max(pi[-1], 1e-300))
    rate = hyper.b_alpha - log_tail_weight
    alpha = rng.gamma(hyper.a_alpha + H - 1) / rate
    return Psi(phi, V, pi, alpha), labels


def occupied_classes(labels: list[np.ndarray]) -> int:
    seen = set()
    for lab in labels:
        seen.update(np.unique(lab).tolist())
    return len(seen)
