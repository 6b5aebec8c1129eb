"""Joint error-flag / true-value / pool-membership moves for file-2 records.

One sweep visits every eligible file-2 record (non-T1, non-T2, at least
one unseeded MV field) in row order.  Each visit proposes, against the
iteration-start snapshot: a field, a fresh error flag from the current
error rate, a replacement value from the latent-class-weighted legal set,
the record's relocation to the destination pool, and fresh permutations
for the two touched pools.  Acceptance multiplies the completed-data
likelihood ratio (local to the two pools), the permutation-count prior
ratio, the latent-class value ratio, the reporting ratio, and the error
prior ratio against the full proposal ratio (flag, value, and the four
permutation-proposal pieces).  Accepted (flag, value) changes are applied
jointly after the sweep, and only then are pools rebuilt.

Flag/value proposal patterns, writing (current flag, proposed flag):
  (0,0)  no move; the value stays at the reported one.
  (1,0)  value snaps back to the reported one deterministically.
  (0,1)  value drawn from legal levels other than the reported one.
  (1,1)  value drawn from legal levels other than reported and current.
"Legal" optionally restricts to levels whose substituted key occurs among
file-1 reported keys.  An empty legal set aborts the move as a rejection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .error_model import e_proposal_ratio, gamma_prior_ratio, reporting_ratio
from .latent_class import Psi
from .link_sampler import (exact_perm_log_prob, exact_step,
                           propose_uniform_swap, uniform_swap_log_prob,
                           c_prior_length_ratio)
from .pools import Pool, key_with
from .regression import (ThetaView, impute_pool_dummies, impute_y1,
                         impute_y2, loglik_pool)


@dataclass(frozen=True)
class MoveConfig:
    restrict_to_f1_keys: bool = True
    switch_threshold: int = 5
    switch_repeats: int = 30


@dataclass
class SweepStats:
    proposed: int = 0
    accepted: int = 0
    rejected: int = 0
    aborted: int = 0      # empty legal set
    noop: int = 0         # (0,0) pattern, no ratio evaluated
    retries: int = 0

    def merge(self, other: "SweepStats"):
        self.proposed += other.proposed
        self.accepted += other.accepted
        self.rejected += other.rejected
        self.aborted += other.aborted
        self.noop += other.noop
        self.retries += other.retries


def legal_levels(state, row_key: tuple, j: int, exclude: tuple,
                 restrict: bool) -> list[int]:
    """Candidate levels for field j of a record currently at row_key."""
    d = state.schema.fields[j].cardinality
    out = []
    f1_keys = state.f1_keys
    for x in range(1, d + 1):
        if x in exclude:
            continue
        if restrict and key_with(row_key, j, x) not in f1_keys:
            continue
        out.append(x)
    return out


def _phi_over(psi: Psi, h: int, j: int, levels: list[int]):
    """Latent-class proposal weights over a legal set; None if massless."""
    row = psi.phi[h, j]
    w = [float(row[x - 1]) for x in levels]
    total = sum(w)
    if total <= 0.0:
        return None, 0.0
    return w, total


def draw_phi(psi, h, j, levels, rng):
    w, total = _phi_over(psi, h, j, levels)
    if w is None:
        return None, 0.0
    u = rng.random() * total
    acc = 0.0
    for x, wi in zip(levels, w):
        acc += wi
        if u < acc:
            return x, wi / total
    return levels[-1], w[-1] / total


def phi_log_prob(psi, h, j, levels, value) -> float:
    """Log probability the legal-set proposal assigns to one level."""
    w, total = _phi_over(psi, h, j, levels)
    if w is None or value not in levels:
        return -math.inf
    return math.log(w[levels.index(value)] / total)


# ---------------------------------------------------------------------------
# Pool surgery helpers.  All operate on proposal copies, never on the live
# index.  Slot convention as in pools.py: reals first, then dummies.

def _remove_pair(pool: Pool, a_i: int, p_i: int):
    """Drop linked slots a_i (file-1 side) and p_i (file-2 side)."""
    if a_i < pool.n1:
        pool.f1_rows.pop(a_i)
    else:
        pool.f1_dummy_y.pop(a_i - pool.n1)
    if p_i < pool.n2:
        pool.f2_rows.pop(p_i)
    else:
        pool.f2_dummy_y.pop(p_i - pool.n2)
    pool.perm = [p - (1 if p > p_i else 0)
                 for a, p in enumerate(pool.perm) if a != a_i]


def _source_remove(pool: Pool, i: int, view: ThetaView, y1_all, rng):
    """Take record i out of its pool and rebalance, preserving pairings.

    Returns True when i was linked to a dummy (deterministic permutation
    restriction, nothing imputed); otherwise rebalancing either swaps in a
    fresh dummy carrying an imputed y2 (no file-1 dummies present) or
    discards one uniformly chosen file-1 dummy.
    """
    n1, n2 = pool.n1, pool.n2
    p_i = pool.f2_rows.index(i)
    a_i = pool.perm.index(p_i)
    if a_i >= n1:
        _remove_pair(pool, a_i, p_i)
        return True
    if n1 >= n2:
        # i's slot becomes a dummy; impute its y2 from the linked partner
        y1_partner = y1_all[pool.f1_rows[a_i]]
        pool.f2_rows.pop(p_i)
        pool.f2_dummy_y.append(impute_y2(y1_partner, pool.key, view, rng))
        newperm = [p - (1 if p > p_i else 0) for p in pool.perm]
        newperm[a_i] = pool.c - 1
        pool.perm = newperm
    else:
        # one file-1 dummy is now surplus; drop one at random and relink
        # i's old partner to the slot the dropped dummy vacated
        a_rm = n1 + int(rng.integers(n2 - n1))
        p_rm = pool.perm[a_rm]
        pool.f1_dummy_y.pop(a_rm - n1)
        pool.f2_rows.pop(p_i)
        newperm = []
        for a, p in enumerate(pool.perm):
            if a == a_rm:
                continue
            q = p_rm if a == a_i else p
            newperm.append(q - (1 if q > p_i else 0))
        pool.perm = newperm
    return False


def _dest_insert(pool: Pool, i: int, key_new: tuple, y2_i: float,
                 view: ThetaView, rng) -> int:
    """Place record i into the destination pool, returning its slot index.

    With file-2 dummies present, i replaces one chosen uniformly (its
    imputed value is discarded); otherwise i is appended and a fresh
    file-1 dummy with an imputed y1 becomes its provisional partner.
    """
    n1s, n2s = pool.n1, pool.n2
    if n1s > n2s:
        t = int(rng.integers(n1s - n2s))
        removed_slot = n2s + t
        pool.f2_dummy_y.pop(t)
        pool.f2_rows.append(i)
        newperm = []
        for p in pool.perm:
            if p == removed_slot:
                newperm.append(n2s)
            elif p < n2s:
                newperm.append(p)
            else:
                s = p - n2s
                newperm.append(n2s + 1 + (s - 1 if s > t else s))
        pool.perm = newperm
    else:
        pool.f2_rows.append(i)
        pool.f1_dummy_y.append(impute_y1(y2_i, key_new, view, rng))
        pool.perm.append(n2s)
    return n2s


@dataclass
class _PermProposal:
    """Forward permutation proposal for one touched pool."""
    is_switch: bool
    log_q: float
    inherited: list[int] | None = None   # swap-walk start state, switch only


def _propose_perm(pool: Pool, view: ThetaView, y1_all, y2_all, rng,
                  cfg: MoveConfig) -> _PermProposal:
    c = pool.c
    if c < cfg.switch_threshold:
        perm, logq = exact_step(pool, view, y1_all, y2_all, rng)
        pool.perm = perm
        return _PermProposal(False, logq)
    inherited = list(pool.perm)
    pool.perm = propose_uniform_swap(inherited, c, rng)
    return _PermProposal(True, uniform_swap_log_prob(c), inherited)


def _reverse_log_q(orig_pool: Pool | None, view: ThetaView, y1_all, y2_all,
                   threshold: int) -> float:
    """Probability of re-proposing the original permutation in reverse."""
    if orig_pool is None or orig_pool.c <= 1:
        return 0.0
    if orig_pool.c < threshold:
        return exact_perm_log_prob(orig_pool, view, y1_all, y2_all,
                                   orig_pool.perm)
    return uniform_swap_log_prob(orig_pool.c)


# ---------------------------------------------------------------------------

def propose_record_move(state, i: int, free_fields: list[int],
                        view: ThetaView, psi: Psi, gammas: dict[int, float],
                        rng, cfg: MoveConfig, ll_cache: dict,
                        stats: SweepStats):
    """One record's full MH step against the snapshot.

    Returns None or the accepted (row, field, flag, value) tuple.
    """
    y1_all = state.f1.y
    y2_all = state.f2.y
    j = free_fields[int(rng.integers(len(free_fields)))] if len(free_fields) > 1 else free_fields[0]
    gamma = gammas[j]
    e_old = int(state.E2[i, j])
    e_new = 1 if rng.random() < gamma else 0
    if e_old == 0 and e_new == 0:
        stats.noop += 1
        return None

    stats.proposed += 1
    d = state.schema.fields[j].cardinality
    b_hat = int(state.f2.reported[i, j])
    b_old = int(state.B2[i, j])
    row_key = tuple(int(v) for v in state.B2[i])
    h = int(state.z2[i])

    # value proposal and the forward/reverse value-kernel log probabilities
    if e_new == 0:
        b_star = b_hat
        log_fwd_b = 0.0
        levels_rev = legal_levels(state, row_key, j, (b_hat,),
                                  cfg.restrict_to_f1_keys)
        log_rev_b = phi_log_prob(psi, h, j, levels_rev, b_old)
    elif e_old == 0:
        levels = legal_levels(state, row_key, j, (b_hat,),
                              cfg.restrict_to_f1_keys)
        b_star, p_fwd = draw_phi(psi, h, j, levels, rng) if levels else (None, 0.0)
        if b_star is None:
            stats.aborted += 1
            return None
        log_fwd_b = math.log(p_fwd)
        log_rev_b = 0.0
    else:
        levels = legal_levels(state, row_key, j, (b_hat, b_old),
                              cfg.restrict_to_f1_keys)
        b_star, p_fwd = draw_phi(psi, h, j, levels, rng) if levels else (None, 0.0)
        if b_star is None:
            stats.aborted += 1
            return None
        log_fwd_b = math.log(p_fwd)
        levels_rev = legal_levels(state, row_key, j, (b_hat, b_star),
                                  cfg.restrict_to_f1_keys)
        log_rev_b = phi_log_prob(psi, h, j, levels_rev, b_old)
    if log_rev_b == -math.inf:
        stats.rejected += 1
        return None

    key_old = row_key
    key_new = key_with(row_key, j, b_star)
    orig_k = state.pools[key_old]
    orig_ks = state.pools.get(key_new)

    # proposal pools
    pk = orig_k.copy()
    src_dummy_linked = _source_remove(pk, i, view, y1_all, rng)
    pks = orig_ks.copy() if orig_ks is not None else Pool(key_new)
    islot = _dest_insert(pks, i, key_new, y2_all[i], view, rng)

    if src_dummy_linked:
        prop_k = _PermProposal(False, 0.0)
    else:
        prop_k = _propose_perm(pk, view, y1_all, y2_all, rng, cfg)
    prop_ks = _propose_perm(pks, view, y1_all, y2_all, rng, cfg)

    # pieces of the ratio that do not move across retries
    def old_ll(key, pool):
        v = ll_cache.get(key)
        if v is None:
            v = 0.0 if pool is None else loglik_pool(pool, view, y1_all,
                                                     y2_all, include_t1=False)
            ll_cache[key] = v
        return v

    ll_old = old_ll(key_old, orig_k) + old_ll(key_new, orig_ks)
    log_static = (
        c_prior_length_ratio(orig_k.c, orig_ks.c if orig_ks else 0, pk.c, pks.c)
        + math.log(max(float(psi.phi[h, j, b_star - 1]), 1e-300))
        - math.log(max(float(psi.phi[h, j, b_old - 1]), 1e-300))
        + math.log(reporting_ratio(e_old, e_new, d))
        + math.log(gamma_prior_ratio(e_old, e_new, gamma))
        + math.log(e_proposal_ratio(e_old, e_new, gamma))
        + log_rev_b - log_fwd_b
    )
    log_rev_k = _reverse_log_q(orig_k, view, y1_all, y2_all,
                               cfg.switch_threshold)
    log_static += log_rev_k - prop_k.log_q - prop_ks.log_q

    # reverse piece for the destination pool: deterministic when i sits on
    # a dummy-linked slot in the proposed state, else the chance of
    # re-drawing the original permutation
    rev_ks_cache = [None]

    def rev_ks_piece() -> float:
        a_star = pks.perm.index(islot)
        if a_star >= pks.n1:
            return 0.0
        if rev_ks_cache[0] is None:
            rev_ks_cache[0] = _reverse_log_q(orig_ks, view, y1_all, y2_all,
                                             cfg.switch_threshold)
        return rev_ks_cache[0]

    attempts = (cfg.switch_repeats
                if (prop_k.is_switch or prop_ks.is_switch) else 1)
    for attempt in range(attempts):
        ll_new = (loglik_pool(pk, view, y1_all, y2_all, include_t1=False)
                  + loglik_pool(pks, view, y1_all, y2_all, include_t1=False))
        log_A = ll_new - ll_old + log_static + rev_ks_piece()
        if log_A >= 0.0 or math.log(rng.random()) < log_A:
            stats.accepted += 1
            return (i, j, e_new, b_star)
        if attempt + 1 < attempts:
            stats.retries += 1
            if prop_k.is_switch:
                pk.perm = propose_uniform_swap(prop_k.inherited, pk.c, rng)
            if prop_ks.is_switch:
                pks.perm = propose_uniform_swap(prop_ks.inherited, pks.c, rng)
    stats.rejected += 1
    return None


def sweep_pool_moves(state, view: ThetaView, psi: Psi,
                     gammas: dict[int, float], rng, cfg: MoveConfig) -> SweepStats:
    """S-step 1: all eligible records proposed against the snapshot, then
    accepted flag/value changes applied jointly and pools rebuilt.

    New dummy slots created by rebalancing get imputed outcomes under the
    identity pairing; surviving slots keep their values.
    """
    stats = SweepStats()
    ll_cache: dict[tuple, float] = {}
    accepted = []
    for i, free in state.movers:
        out = propose_record_move(state, i, free, view, psi, gammas, rng,
                                  cfg, ll_cache, stats)
        if out is not None:
            accepted.append(out)
    touched = set()
    for i, j, e_new, b_star in accepted:
        state.E2[i, j] = e_new
        old_key = tuple(int(v) for v in state.B2[i])
        new_key = key_with(old_key, j, b_star)
        state.move_f2_record(i, new_key)
        touched.add(old_key)
        touched.add(new_key)
    for key in sorted(touched):
        pool = state.pools.get(key)
        if pool is not None:
            impute_pool_dummies(pool, view, state.f1.y, state.f2.y, rng,
                                only_missing=True)
    return stats
