"""Pool bookkeeping for one-to-one, complete within-pool linkage.

A pool is the set of records (from both files) whose current in-common
values equal the pool key.  Known pairs (T1) are pinned and sit outside
the permutation.  The remaining members are counted per file (n1, n2);
the smaller side is padded with dummy records so a bijection exists, and
a permutation maps file-1 slots to file-2 slots.

Slot convention: file-1 side has c = max(n1, n2) slots, the first n1 are
real rows and the rest are dummies; same on the file-2 side.  Dummies
appear on at most one side and carry only an imputed outcome value (they
inherit the pool key, never values of their own).
"""
from __future__ import annotations

import math

import numpy as np

from .schema import InCommonSchema, RecordTable, check_t1_reciprocal

NAN = float("nan")


class Pool:
    __slots__ = ("key", "f1_rows", "f2_rows", "t1_pairs",
                 "f1_dummy_y", "f2_dummy_y", "perm")

    def __init__(self, key, f1_rows=None, f2_rows=None, t1_pairs=None):
        self.key = key
        self.f1_rows: list[int] = list(f1_rows or [])
        self.f2_rows: list[int] = list(f2_rows or [])
        self.t1_pairs: list[tuple[int, int]] = list(t1_pairs or [])
        self.f1_dummy_y: list[float] = []
        self.f2_dummy_y: list[float] = []
        self.perm: list[int] = []

    # counts
    @property
    def n1(self) -> int:
        return len(self.f1_rows)

    @property
    def n2(self) -> int:
        return len(self.f2_rows)

    @property
    def c(self) -> int:
        return max(self.n1, self.n2)

    @property
    def u(self) -> int:
        return len(self.t1_pairs)

    @property
    def n_total(self) -> int:
        return self.c + self.u

    def is_empty(self) -> bool:
        return not (self.f1_rows or self.f2_rows or self.t1_pairs)

    def copy(self) -> "Pool":
        p = Pool(self.key, self.f1_rows, self.f2_rows, self.t1_pairs)
        p.f1_dummy_y = list(self.f1_dummy_y)
        p.f2_dummy_y = list(self.f2_dummy_y)
        p.perm = list(self.perm)
        return p

    def balanced(self) -> bool:
        c = self.c
        return (len(self.f1_dummy_y) == c - self.n1
                and len(self.f2_dummy_y) == c - self.n2
                and len(self.perm) == c
                and sorted(self.perm) == list(range(c)))

    def y1_slots(self, y1_all: np.ndarray) -> list[float]:
        return [y1_all[r] for r in self.f1_rows] + self.f1_dummy_y

    def y2_slots(self, y2_all: np.ndarray) -> list[float]:
        return [y2_all[r] for r in self.f2_rows] + self.f2_dummy_y

    def partner_slot_of_f2(self, f2_slot: int) -> int:
        return self.perm.index(f2_slot)

    def links(self):
        """Yield (f1_row_or_-1, f2_row_or_-1) over permuted slots, then T1."""
        n1, n2 = self.n1, self.n2
        for a, p in enumerate(self.perm):
            yield (self.f1_rows[a] if a < n1 else -1,
                   self.f2_rows[p] if p < n2 else -1)
        yield from self.t1_pairs


def balance_pool(pool: Pool):
    """Pad the smaller side with dummies and reset to the identity pairing.

    Existing dummy values survive in place; the lists only grow with NaN
    placeholders (caller imputes) or shrink from the tail.
    """
    c = pool.c
    need1 = c - pool.n1
    need2 = c - pool.n2
    del pool.f1_dummy_y[need1:]
    pool.f1_dummy_y.extend([NAN] * (need1 - len(pool.f1_dummy_y)))
    del pool.f2_dummy_y[need2:]
    pool.f2_dummy_y.extend([NAN] * (need2 - len(pool.f2_dummy_y)))
    pool.perm = list(range(c))


def build_pool_index(f1: RecordTable, f2: RecordTable,
                     B2: np.ndarray) -> dict[tuple, Pool]:
    """Group records by current in-common values; T1 pairs pinned."""
    pools: dict[tuple, Pool] = {}

    def get(key) -> Pool:
        p = pools.get(key)
        if p is None:
            p = pools[key] = Pool(key)
        return p

    t1_f2 = set()
    for i in range(f1.n):
        ip = f1.t1_partner[i]
        if ip >= 0:
            get(f1.key(i)).t1_pairs.append((i, int(ip)))
            t1_f2.add(int(ip))
        else:
            get(f1.key(i)).f1_rows.append(i)
    for i in range(f2.n):
        if i in t1_f2:
            continue
        key = tuple(int(v) for v in B2[i])
        get(key).f2_rows.append(i)
    for p in pools.values():
        balance_pool(p)
    return pools


def key_with(key: tuple, j: int, value: int) -> tuple:
    return key[:j] + (value,) + key[j + 1:]


def log_factorial(c: int) -> float:
    return math.lgamma(c + 1)


class LinkState:
    """Mutable sampler state: current file-2 values, error flags, pools,
    latent-class labels, and the imputed outcomes living on dummy slots.
    """

    def __init__(self, schema: InCommonSchema, f1: RecordTable, f2: RecordTable,
                 B2: np.ndarray | None = None):
        check_t1_reciprocal(f1, f2)
        self.schema = schema
        self.f1 = f1
        self.f2 = f2
        self.B2 = (f2.reported.copy() if B2 is None
                   else np.asarray(B2, dtype=np.int64).copy())
        self.E2 = np.zeros((f2.n, schema.J), dtype=np.int8)
        self.E2[self.B2 != f2.reported] = 1
        self.pools = build_pool_index(f1, f2, self.B2)
        # file-1 reported keys, for proposal legality restriction
        self.f1_keys = frozenset(f1.key(i) for i in range(f1.n))
        # latent-class labels per record; -1 until assigned
        self.z1 = np.full(f1.n, -1, dtype=np.int64)
        self.z2 = np.full(f2.n, -1, dtype=np.int64)
        # file-2 rows eligible for value moves, with their proposable fields
        self.movers: list[tuple[int, list[int]]] = []
        mv = schema.mv_indices
        for i in range(f2.n):
            if f2.t1_partner[i] >= 0 or f2.t2_seed[i]:
                continue
            free = [j for j in mv if not f2.seed[i, j]]
            if free:
                self.movers.append((i, free))

    @property
    def N_B(self) -> int:
        return sum(p.n_total for p in self.pools.values())

    def pool_of_f2(self, i: int) -> Pool:
        return self.pools[tuple(int(v) for v in self.B2[i])]

    def sorted_pools(self) -> list[Pool]:
        return [self.pools[k] for k in sorted(self.pools)]

    def check_consistency(self):
        """Error-flag / value agreement: E=0 iff current value == reported."""
        mism = (self.B2 != self.f2.reported).astype(np.int8)
        if not np.array_equal(mism, self.E2):
            raise AssertionError("E flags out of sync with values")
        seeded = self.f2.seed
        if (self.E2[seeded] != 0).any():
            raise AssertionError("seeded cell carries an error flag")

    def move_f2_record(self, i: int, new_key: tuple):
        """Reassign record i to the pool of new_key and rebalance both pools.

        Dummy values survive where the slot survives; new slots get NaN
        (caller imputes).  Permutations of touched pools reset to identity.
        Empty pools are dropped from the index.
        """
        old_key = tuple(int(v) for v in self.B2[i])
        if old_key == new_key:
            return
        old = self.pools[old_key]
        old.f2_rows.remove(i)
        balance_pool(old)
        if old.is_empty():
            del self.pools[old_key]
        new = self.pools.get(new_key)
        if new is None:
            new = self.pools[new_key] = Pool(new_key)
        new.f2_rows.append(i)
        balance_pool(new)
        self.B2[i] = new_key
