"""Cross-layer Assist matrices.

``B[a1, a2] = (1 / u[a1]) * sum_c M1[c, a1] * M2[c, a2] / d2[c]`` is the
probability that a random walker starting on activity ``a1`` reaches
``a2`` after one hop to a country with advantage in ``a1`` and one hop from
that country to one of its ``L2`` activities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import STACK_SEP, BinaryMatrix, LayerId, Pooling, TimeWindow, split_row_id
from .errors import MatrixError


@dataclass(frozen=True)
class Side:
    """Layer, window and aggregation level of one end of an Assist matrix."""

    layer: LayerId
    window: TimeWindow
    level: int | None = None

    @property
    def label(self):
        level = "" if self.level is None else f":{self.level}"
        return f"{self.layer}:{self.window.label}{level}"


@dataclass(frozen=True, eq=False)
class AssistMatrix:
    source: Side
    target: Side
    rows: tuple
    cols: tuple
    values: np.ndarray
    omitted_rows: tuple = ()
    dropped_countries: tuple = ((), ())
    substochastic_rows: tuple = ()
    n_countries: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def y1(self) -> int:
        return self.source.window.start_year

    @property
    def y2(self) -> int:
        return self.target.window.start_year

    @property
    def dy(self) -> int:
        return self.y2 - self.y1

    @property
    def shape(self):
        return self.values.shape

    def row_sums(self) -> np.ndarray:
        return self.values.sum(axis=1)

    def value(self, source_code, target_code) -> float:
        return float(self.values[self.rows.index(source_code), self.cols.index(target_code)])

    def edges(self, nonzero=True):
        for i, a1 in enumerate(self.rows):
            for j, a2 in enumerate(self.cols):
                v = float(self.values[i, j])
                if v or not nonzero:
                    yield a1, a2, v


def assist_values(m1, m2):
    """Assist values for aligned dense 0/1 arrays (countries x activities).

    Returns ``(B, u1)``. Rows with ``u1 == 0`` are left at zero; countries
    with zero diversification in ``m2`` contribute nothing.
    """
    m1 = np.asarray(m1, dtype=np.float64)
    m2 = np.asarray(m2, dtype=np.float64)
    u1 = m1.sum(axis=0)
    d2 = m2.sum(axis=1)
    inv_d2 = np.divide(1.0, d2, out=np.zeros_like(d2), where=d2 > 0)
    B = m1.T @ (m2 * inv_d2[:, None])
    np.divide(B, u1[:, None], out=B, where=u1[:, None] > 0)
    return B, u1


def _alignment_key(row: str, window: TimeWindow) -> str:
    if window.pooling is Pooling.STACK and window.span > 1:
        country, year = split_row_id(row)
        if year is None:
            raise MatrixError(f"stacked row {row!r} has no year suffix")
        return f"{country}{STACK_SEP}+{year - window.start_year}"
    return row


def align_countries(m1: BinaryMatrix, m2: BinaryMatrix):
    """Restrict both matrices to their common countries, in ``m1``'s order.

    Stacked rows are matched by country and position within the window, so
    ``c@2001`` in a 2000-2002 window pairs with ``c@2004`` in 2003-2005.
    Returns ``(a1, a2, dropped1, dropped2)``; aligned rows carry the shared
    alignment key as their label.
    """
    keys1 = [_alignment_key(r, m1.window) for r in m1.rows]
    keys2 = [_alignment_key(r, m2.window) for r in m2.rows]
    index2 = {k: r for k, r in zip(keys2, m2.rows)}
    common = [(k, r) for k, r in zip(keys1, m1.rows) if k in index2]
    if not common:
        raise MatrixError(f"no common countries between {m1.layer}:{m1.window.label} "
                          f"and {m2.layer}:{m2.window.label}")
    shared = {k for k, _ in common}
    keys = [k for k, _ in common]
    a1 = m1.select(rows=[r for _, r in common], relabel_rows=keys)
    a2 = m2.select(rows=[index2[k] for k in keys], relabel_rows=keys)
    dropped1 = tuple(r for k, r in zip(keys1, m1.rows) if k not in shared)
    dropped2 = tuple(r for k, r in zip(keys2, m2.rows) if k not in shared)
    return a1, a2, dropped1, dropped2


def assist(m1: BinaryMatrix, m2: BinaryMatrix) -> AssistMatrix:
    """Assist matrix from ``m1`` (source layer) to ``m2`` (target layer).

    Countries are aligned by intersection. Source activities left with
    zero ubiquity are omitted from the result and listed in
    ``omitted_rows``. Rows receiving weight from a country with zero target
    diversification sum to less than one and are listed in
    ``substochastic_rows``.
    """
    a1, a2, dropped1, dropped2 = align_countries(m1, m2)
    M1, M2 = a1.dense(), a2.dense()
    B, u1 = assist_values(M1, M2)
    keep = u1 > 0
    d2 = M2.sum(axis=1)
    lossy = (M1[d2 == 0].sum(axis=0) > 0) & keep
    rows = tuple(c for c, k in zip(a1.cols, keep) if k)
    values = B[keep]
    values.flags.writeable = False
    return AssistMatrix(
        source=Side(m1.layer, m1.window, m1.level),
        target=Side(m2.layer, m2.window, m2.level),
        rows=rows,
        cols=a2.cols,
        values=values,
        omitted_rows=tuple(c for c, k in zip(a1.cols, keep) if not k),
        dropped_countries=(dropped1, dropped2),
        substochastic_rows=tuple(c for c, k in zip(a1.cols, lossy) if k),
        n_countries=len(a1.rows),
    )


def assist_lagged(store, L1, L2, y1: int, y2: int, level1=None, level2=None,
                  pooling="sum", span: int = 1) -> AssistMatrix:
    """Assist matrix from ``(L1, y1)`` to ``(L2, y2)`` read from a store.

    Windows start at ``y1``/``y2`` and cover ``span`` years pooled with
    ``pooling``. ``y1 > y2`` is allowed and uses the same formula.
    """
    from .errors import MissingDataError

    L1, L2 = LayerId.parse(L1), LayerId.parse(L2)
    w1 = TimeWindow(y1, span, Pooling.parse(pooling))
    w2 = TimeWindow(y2, span, Pooling.parse(pooling))
    missing = store.missing(L1, w1) + store.missing(L2, w2)
    if missing:
        raise MissingDataError(set(missing))
    return assist(store.binary(L1, w1, level1), store.binary(L2, w2, level2))
