"""Shared builders for hand-sized linkage fixtures."""
import numpy as np

from blase.design import parse_design
from blase.pools import LinkState
from blase.regression import Theta, ThetaView
from blase.schema import ROLE_BV, ROLE_MV, Field, InCommonSchema, RecordTable


def make_schema(*fields) -> InCommonSchema:
    """fields: (name, cardinality, role) triples."""
    return InCommonSchema(tuple(Field(n, d, r) for n, d, r in fields))


def make_table(schema, reported, y, mv_seed=None, t1=None, t2=None) -> RecordTable:
    """RecordTable with BV columns auto-seeded.

    mv_seed, when given, is an (n, #MV) bool block in mv_indices order.
    """
    reported = np.asarray(reported, dtype=np.int64)
    n = reported.shape[0]
    seed = np.zeros((n, schema.J), dtype=bool)
    seed[:, schema.bv_indices] = True
    if mv_seed is not None:
        seed[:, schema.mv_indices] = np.asarray(mv_seed, dtype=bool).reshape(
            n, len(schema.mv_indices))
    return RecordTable(schema, reported, np.asarray(y, dtype=float), seed,
                       t1, t2)


AB_SCHEMA = make_schema(("a", 2, ROLE_BV), ("m", 3, ROLE_MV))


def ab_design():
    return parse_design(["intercept", "y2", "m=2"], ["intercept", "m=2"],
                        AB_SCHEMA)


def ab_view(beta=(0.5, 0.3, 1.0), s1=1.0, eta=(-0.2, 0.8), s2=1.5):
    from blase.design import DesignCache
    theta = Theta(np.array(beta, dtype=float), float(s1),
                  np.array(eta, dtype=float), float(s2))
    return ThetaView(theta, DesignCache(AB_SCHEMA, ab_design()))


def toy_state(rng=None):
    """Small two-pool instance with one T1 pair and one seeded-MV row.

    f1 keys: (1,1) x2, (1,2), (2,1); f2 reported: (1,1), (1,2) x2, (2,1).
    f1 row 3 / f2 row 3 are a T1 pair at key (2,1); f2 row 2 has a seeded m.
    """
    f1 = make_table(
        AB_SCHEMA,
        [[1, 1], [1, 1], [1, 2], [2, 1]],
        [0.1, -0.4, 1.2, 0.7],
        mv_seed=[[0], [0], [0], [1]],
        t1=[-1, -1, -1, 3],
    )
    f2 = make_table(
        AB_SCHEMA,
        [[1, 1], [1, 2], [1, 2], [2, 1]],
        [0.9, 0.3, -0.6, 1.1],
        mv_seed=[[0], [0], [1], [1]],
        t1=[-1, -1, -1, 3],
    )
    state = LinkState(AB_SCHEMA, f1, f2)
    if rng is not None:
        from blase.regression import impute_pool_dummies
        view = ab_view()
        for pool in state.sorted_pools():
            impute_pool_dummies(pool, view, f1.y, f2.y, rng, only_missing=True)
    return state
