"""Regression design terms.

Both outcome models are linear with dummy-coded categorical terms; the y1
model may additionally include the linked y2 value as a single linear term.
A term is one of

    intercept
    y2                  (y1 design only)
    <field>=<level>     indicator that the in-common field takes the level

Baseline levels are whatever the term list omits.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .schema import InCommonSchema


@dataclass(frozen=True)
class Term:
    kind: str                 # "intercept" | "y2" | "indicator"
    field: str | None = None
    level: int | None = None

    def label(self) -> str:
        if self.kind == "indicator":
            return f"{self.field}={self.level}"
        return self.kind


def parse_term(text: str) -> Term:
    text = text.strip()
    if text == "intercept":
        return Term("intercept")
    if text == "y2":
        return Term("y2")
    if "=" in text:
        name, _, lvl = text.partition("=")
        return Term("indicator", name.strip(), int(lvl))
    raise ValueError(f"cannot parse design term {text!r}")


@dataclass(frozen=True)
class DesignSpec:
    """Term lists for the two outcome regressions."""
    y1_terms: tuple[Term, ...]
    y2_terms: tuple[Term, ...]

    def validate(self, schema: InCommonSchema):
        for side, terms in (("y1", self.y1_terms), ("y2", self.y2_terms)):
            if len(terms) != len(set(t.label() for t in terms)):
                raise ValueError(f"duplicate terms in {side} design")
            for t in terms:
                if t.kind == "y2":
                    if side == "y2":
                        raise ValueError("y2 design cannot reference y2 itself")
                    continue
                if t.kind == "indicator":
                    try:
                        j = schema.index_of(t.field)
                    except KeyError:
                        raise ValueError(f"term {t.label()}: unknown field "
                                         f"{t.field!r}") from None
                    d = schema.fields[j].cardinality
                    if not 1 <= t.level <= d:
                        raise ValueError(f"term {t.label()}: level out of range 1..{d}")
        if sum(1 for t in self.y1_terms if t.kind == "y2") > 1:
            raise ValueError("y1 design may include y2 at most once")

    @property
    def p(self) -> int:
        return len(self.y1_terms)

    @property
    def q(self) -> int:
        return len(self.y2_terms)

    def y2_column(self) -> int:
        """Column of the y2 term in the y1 design, -1 when absent."""
        for c, t in enumerate(self.y1_terms):
            if t.kind == "y2":
                return c
        return -1

    def y1_labels(self) -> list[str]:
        return [t.label() for t in self.y1_terms]

    def y2_labels(self) -> list[str]:
        return [t.label() for t in self.y2_terms]


def parse_design(y1_terms: list[str], y2_terms: list[str],
                 schema: InCommonSchema) -> DesignSpec:
    spec = DesignSpec(tuple(parse_term(t) for t in y1_terms),
                      tuple(parse_term(t) for t in y2_terms))
    spec.validate(schema)
    return spec


class DesignCache:
    """Per-key design rows.

    Design rows depend on the in-common values only through the pool key,
    so rows are memoised per key.  The y1 row is split into the part that
    does not involve y2 (x1_base, with a zero in the y2 column) plus the
    y2 column index, letting callers form x1.beta as base.beta + b_y2*y2.
    """

    def __init__(self, schema: InCommonSchema, design: DesignSpec):
        design.validate(schema)
        self.schema = schema
        self.design = design
        self.y2_col = design.y2_column()
        self._idx = {}          # term -> (field index, level) for indicators
        self._x1 = {}
        self._x2 = {}

    def _row(self, terms, key) -> np.ndarray:
        row = np.zeros(len(terms))
        for c, t in enumerate(terms):
            if t.kind == "intercept":
                row[c] = 1.0
            elif t.kind == "indicator":
                j = self.schema.index_of(t.field)
                row[c] = 1.0 if key[j] == t.level else 0.0
            # y2 column stays 0 in the base row
        return row

    def x1_base(self, key: tuple[int, ...]) -> np.ndarray:
        r = self._x1.get(key)
        if r is None:
            r = self._row(self.design.y1_terms, key)
            r.setflags(write=False)
            self._x1[key] = r
        return r

    def x2(self, key: tuple[int, ...]) -> np.ndarray:
        r = self._x2.get(key)
        if r is None:
            r = self._row(self.design.y2_terms, key)
            r.setflags(write=False)
            self._x2[key] = r
        return r

    def x1(self, key: tuple[int, ...], y2: float) -> np.ndarray:
        row = self.x1_base(key).copy()
        if self.y2_col >= 0:
            row[self.y2_col] = y2
        return row
