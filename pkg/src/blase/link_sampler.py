"""Within-pool permutation sampling.

Small pools (fewer non-pinned slots than the switch threshold) draw the
permutation exactly: every permutation is enumerated in lexicographic
order and weighted by the completed-data likelihood of its pairings.
Large pools instead take a fixed number of Metropolis swap proposals,
each exchanging the linked partners of two uniformly chosen file-2
slots, and keep the final state.

Only the y1 regression residual depends on the pairing (each file-2
slot's y2 appears exactly once under any permutation), so pair scores
drop the permutation-invariant terms.
"""
from __future__ import annotations

import math
from itertools import permutations

from .pools import Pool
from .regression import ThetaView

_PERM_CACHE: dict[int, list[tuple[int, ...]]] = {}
_MAX_ENUM = 8


def perms_of(c: int) -> list[tuple[int, ...]]:
    if c > _MAX_ENUM:
        raise ValueError(f"refusing to enumerate {c}! permutations")
    t = _PERM_CACHE.get(c)
    if t is None:
        t = _PERM_CACHE[c] = list(permutations(range(c)))
    return t


def pair_scores(pool: Pool, view: ThetaView, y1_all, y2_all) -> list[list[float]]:
    """S[a][p]: permutation-relevant part of the pair log density."""
    a_k, _ = view.a_m(pool.key)
    b = view.b_y2
    i2s1 = view.inv2s1
    y1s = pool.y1_slots(y1_all)
    y2s = pool.y2_slots(y2_all)
    out = []
    for y1 in y1s:
        r0 = y1 - a_k
        out.append([-(r0 - b * y2) ** 2 * i2s1 for y2 in y2s])
    return out


def _perm_log_weights(pool, view, y1_all, y2_all):
    S = pair_scores(pool, view, y1_all, y2_all)
    perms = perms_of(pool.c)
    logw = []
    for perm in perms:
        t = 0.0
        for a, p in enumerate(perm):
            t += S[a][p]
        logw.append(t)
    return perms, logw


def exact_step(pool: Pool, view: ThetaView, y1_all, y2_all, rng):
    """Draw the pool permutation from its exact conditional.

    Returns (permutation, log probability of the draw).  Weights are
    normalised in log space with max subtraction.
    """
    c = pool.c
    if c <= 1:
        return list(range(c)), 0.0
    perms, logw = _perm_log_weights(pool, view, y1_all, y2_all)
    mx = max(logw)
    w = [math.exp(v - mx) for v in logw]
    total = sum(w)
    u = rng.random() * total
    acc = 0.0
    for idx, wi in enumerate(w):
        acc += wi
        if u < acc:
            return list(perms[idx]), math.log(wi / total)
    return list(perms[-1]), math.log(w[-1] / total)


def exact_perm_log_prob(pool: Pool, view: ThetaView, y1_all, y2_all,
                        perm) -> float:
    """Log probability the exact step assigns to a given permutation."""
    c = pool.c
    if c <= 1:
        return 0.0
    perms, logw = _perm_log_weights(pool, view, y1_all, y2_all)
    mx = max(logw)
    total = sum(math.exp(v - mx) for v in logw)
    target = tuple(perm)
    for idx, pm in enumerate(perms):
        if pm == target:
            return logw[idx] - mx - math.log(total)
    raise ValueError("permutation has the wrong length for this pool")


def switch_step(pool: Pool, view: ThetaView, y1_all, y2_all, rng,
                repeats: int) -> tuple[int, int]:
    """Metropolis swap walk on the pool permutation, in place.

    Each repeat picks two distinct file-2 slots uniformly, swaps their
    linked file-1 slots, and accepts with the likelihood ratio of the two
    changed pairs.  Returns (accepted, proposed).
    """
    c = pool.c
    if c < 2:
        return 0, 0
    S = pair_scores(pool, view, y1_all, y2_all)
    perm = pool.perm
    accepted = 0
    for _ in range(repeats):
        a1 = int(rng.integers(c))
        a2 = int(rng.integers(c - 1))
        if a2 >= a1:
            a2 += 1
        p1, p2 = perm[a1], perm[a2]
        logr = S[a1][p2] + S[a2][p1] - S[a1][p1] - S[a2][p2]
        if logr >= 0.0 or math.log(rng.random()) < logr:
            perm[a1], perm[a2] = p2, p1
            accepted += 1
    return accepted, repeats


def uniform_swap_log_prob(c: int) -> float:
    """Log proposal probability of one particular two-slot swap: 2!(c-2)!/c!."""
    return math.log(2.0) + math.lgamma(c - 1) - math.lgamma(c + 1)


def propose_uniform_swap(perm: list[int], c: int, rng) -> list[int]:
    a1 = int(rng.integers(c))
    a2 = int(rng.integers(c - 1))
    if a2 >= a1:
        a2 += 1
    out = list(perm)
    out[a1], out[a2] = out[a2], out[a1]
    return out


def c_prior_length_ratio(c_k_old: int, c_kstar_old: int,
                         c_k_new: int, c_kstar_new: int) -> float:
    """Log of the uniform-permutation prior ratio when pool sizes change:
    c_k_old! c_kstar_old! / (c_k_new! c_kstar_new!).
    """
    return (math.lgamma(c_k_old + 1) + math.lgamma(c_kstar_old + 1)
            - math.lgamma(c_k_new + 1) - math.lgamma(c_kstar_new + 1))


def sample_all_permutations(state, view: ThetaView, rng, threshold: int,
                            repeats: int) -> tuple[int, int]:
    """One pass of permutation draws over every pool, in key order.

    Dispatch: pools below the threshold use the exact conditional, the
    rest use the swap walk.  Returns pooled (accepted, proposed) swap
    counts for the walk pools.
    """
    y1_all = state.f1.y
    y2_all = state.f2.y
    acc = prop = 0
    for pool in state.sorted_pools():
        c = pool.c
        if c <= 1:
            continue
        if c < threshold:
            pool.perm, _ = exact_step(pool, view, y1_all, y2_all, rng)
        else:
            a, p = switch_step(pool, view, y1_all, y2_all, rng, repeats)
            acc += a
            prop += p
    return acc, prop
