"""Schema and record-table types shared by both files being linked.

Two files enter the linkage: file 1 carries outcome y1, file 2 carries
outcome y2.  They share J categorical fields ("in-common" fields), each
coded 1..d_j.  A field is either a blocking variable (BV: reported values
are always correct, every record is a seed on it) or a matching variable
(MV: file-2 values may be reported with error).  File-1 values are taken
as ground truth on every field.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field as dc_field

import numpy as np

ROLE_BV = "BV"
ROLE_MV = "MV"


@dataclass(frozen=True)
class Field:
    name: str
    cardinality: int
    role: str

    def __post_init__(self):
        if self.cardinality < 2:
            raise ValueError(f"field {self.name!r}: cardinality must be >= 2, got {self.cardinality}")
        if self.role not in (ROLE_BV, ROLE_MV):
            raise ValueError(f"field {self.name!r}: role must be BV or MV, got {self.role!r}")
        if not self.name or any(ch in self.name for ch in ",=:"):
            raise ValueError(f"invalid field name {self.name!r}")


@dataclass(frozen=True)
class InCommonSchema:
    fields: tuple[Field, ...]

    def __post_init__(self):
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise ValueError("duplicate field names in schema")
        if not self.fields:
            raise ValueError("schema needs at least one in-common field")

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.fields]

    @property
    def cardinalities(self) -> np.ndarray:
        return np.array([f.cardinality for f in self.fields], dtype=np.int64)

    @property
    def J(self) -> int:
        return len(self.fields)

    @property
    def mv_indices(self) -> list[int]:
        return [j for j, f in enumerate(self.fields) if f.role == ROLE_MV]

    @property
    def bv_indices(self) -> list[int]:
        return [j for j, f in enumerate(self.fields) if f.role == ROLE_BV]

    def index_of(self, name: str) -> int:
        for j, f in enumerate(self.fields):
            if f.name == name:
                return j
        raise KeyError(name)


class RecordTable:
    """One file's records: reported in-common values, outcome, seed flags.

    reported   (n, J) int array, values in 1..d_j
    y          (n,) float outcomes
    seed       (n, J) bool; True means the reported value is known correct.
               BV columns must be all-True.
    t1_partner (n,) int; row index into the other file for records in a
               known, error-free, permanently linked pair; -1 otherwise.
    t2_seed    (n,) bool; record is known error-free on every field but its
               link is unknown.
    """

    def __init__(self, schema: InCommonSchema, reported, y, seed=None,
                 t1_partner=None, t2_seed=None):
        self.schema = schema
        self.reported = np.asarray(reported, dtype=np.int64)
        self.y = np.asarray(y, dtype=np.float64)
        n = self.reported.shape[0]
        if self.reported.ndim != 2 or self.reported.shape[1] != schema.J:
            raise ValueError("reported must be (n, J)")
        if self.y.shape != (n,):
            raise ValueError("y must be (n,)")
        if seed is None:
            seed = np.zeros((n, schema.J), dtype=bool)
            seed[:, schema.bv_indices] = True
        self.seed = np.asarray(seed, dtype=bool).copy()
        self.t1_partner = (np.full(n, -1, dtype=np.int64) if t1_partner is None
                           else np.asarray(t1_partner, dtype=np.int64).copy())
        self.t2_seed = (np.zeros(n, dtype=bool) if t2_seed is None
                        else np.asarray(t2_seed, dtype=bool).copy())
        self.validate()

    @property
    def n(self) -> int:
        return self.reported.shape[0]

    def validate(self):
        card = self.schema.cardinalities
        if self.n and ((self.reported < 1) | (self.reported > card)).any():
            bad = np.argwhere((self.reported < 1) | (self.reported > card))[0]
            raise ValueError(f"reported value out of range at row {bad[0]}, field "
                             f"{self.schema.names[bad[1]]}")
        if not self.seed[:, self.schema.bv_indices].all():
            raise ValueError("BV fields must be flagged seed on every row")
        t1 = self.t1_partner >= 0
        if not self.seed[t1].all():
            raise ValueError("T1 rows must be seeds on every field")
        if self.t2_seed.any() and not self.seed[self.t2_seed].all():
            raise ValueError("T2 rows must be seeds on every field")
        if (t1 & self.t2_seed).any():
            raise ValueError("a row cannot be both T1 and T2")
        if not np.isfinite(self.y).all():
            raise ValueError("outcomes must be finite")

    def key(self, i: int) -> tuple[int, ...]:
        return tuple(int(v) for v in self.reported[i])

    def __eq__(self, other):
        return (isinstance(other, RecordTable)
                and self.schema == other.schema
                and np.array_equal(self.reported, other.reported)
                and np.array_equal(self.y, other.y)
                and np.array_equal(self.seed, other.seed)
                and np.array_equal(self.t1_partner, other.t1_partner)
                and np.array_equal(self.t2_seed, other.t2_seed))


def check_t1_reciprocal(f1: RecordTable, f2: RecordTable):
    """T1 pairs must point at each other and agree on every reported value."""
    for i in np.nonzero(f1.t1_partner >= 0)[0]:
        ip = f1.t1_partner[i]
        if ip >= f2.n or f2.t1_partner[ip] != i:
            raise ValueError(f"T1 pair ({i}, {ip}) is not reciprocal")
        if not np.array_equal(f1.reported[i], f2.reported[ip]):
            raise ValueError(f"T1 pair ({i}, {ip}) disagrees on reported values")
    for ip in np.nonzero(f2.t1_partner >= 0)[0]:
        i = f2.t1_partner[ip]
        if i >= f1.n or f1.t1_partner[i] != ip:
            raise ValueError(f"T1 pair ({i}, {ip}) is not reciprocal")


# ---------------------------------------------------------------------------
# CSV round trip.  Layout: field columns, y, seed_<field> columns, t1_partner
# (empty when none), t2_seed.  Comma separated, header row, UTF-8.

def write_table(path, table: RecordTable):
    names = table.schema.names
    header = names + ["y"] + [f"seed_{c}" for c in names] + ["t1_partner", "t2_seed"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(table.n):
            row = [int(v) for v in table.reported[i]]
            row.append(format(table.y[i], ".17g"))
            row.extend(int(b) for b in table.seed[i])
            row.append("" if table.t1_partner[i] < 0 else int(table.t1_partner[i]))
            row.append(int(table.t2_seed[i]))
            w.writerow(row)


def read_table(path, schema: InCommonSchema) -> RecordTable:
    names = schema.names
    expected = names + ["y"] + [f"seed_{c}" for c in names] + ["t1_partner", "t2_seed"]
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != expected:
            raise ValueError(f"{path}: header {header} does not match schema "
                             f"(expected {expected})")
        rep, ys, seeds, t1, t2 = [], [], [], [], []
        for row in r:
            J = schema.J
            rep.append([int(v) for v in row[:J]])
            ys.append(float(row[J]))
            seeds.append([bool(int(v)) for v in row[J + 1:2 * J + 1]])
            t1.append(-1 if row[2 * J + 1] == "" else int(row[2 * J + 1]))
            t2.append(bool(int(row[2 * J + 2])))
    n = len(rep)
    return RecordTable(
        schema,
        np.array(rep, dtype=np.int64).reshape(n, schema.J),
        np.array(ys, dtype=np.float64),
        np.array(seeds, dtype=bool).reshape(n, schema.J),
        np.array(t1, dtype=np.int64),
        np.array(t2, dtype=bool),
    )
