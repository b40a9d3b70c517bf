"""Shared domain types: layers, code hierarchies, time windows and matrices.

Matrices are stored as ``scipy.sparse`` CSR arrays whose row and column
labels are the original string identifiers; labels are interned to dense
integer positions by their order in ``rows``/``cols``. All types are frozen
after construction and their arrays are flagged read-only, so they can be
shared across workers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import HierarchyError, MatrixError

#: separator between country and year in stacked row identifiers
STACK_SEP = "@"


class LayerKind(enum.Enum):
    SCIENCE = "science"
    TECHNOLOGY = "technology"
    PRODUCTS = "products"
    CUSTOM = "custom"


_CANONICAL = {
    LayerKind.SCIENCE: "S",
    LayerKind.TECHNOLOGY: "T",
    LayerKind.PRODUCTS: "P",
}
_ALIASES = {
    "s": LayerKind.SCIENCE,
    "science": LayerKind.SCIENCE,
    "t": LayerKind.TECHNOLOGY,
    "technology": LayerKind.TECHNOLOGY,
    "p": LayerKind.PRODUCTS,
    "products": LayerKind.PRODUCTS,
    "production": LayerKind.PRODUCTS,
}


@dataclass(frozen=True)
class LayerId:
    """A named layer of activities.

    The three canonical layers are named ``S``, ``T`` and ``P``; any other
    name gives a user-defined layer of kind ``CUSTOM``.
    """

    name: str
    kind: LayerKind = LayerKind.CUSTOM

    def __post_init__(self):
        if not self.name or any(ch in self.name for ch in ",:\n/"):
            raise ValueError(f"invalid layer name {self.name!r}")

    @classmethod
    def parse(cls, text: "str | LayerId") -> "LayerId":
        if isinstance(text, LayerId):
            return text
        kind = _ALIASES.get(text.strip().lower())
        if kind is not None:
            return cls(_CANONICAL[kind], kind)
        return cls(text.strip(), LayerKind.CUSTOM)

    def __str__(self):
        return self.name


SCIENCE = LayerId("S", LayerKind.SCIENCE)
TECHNOLOGY = LayerId("T", LayerKind.TECHNOLOGY)
PRODUCTS = LayerId("P", LayerKind.PRODUCTS)


class Hierarchy:
    """Code hierarchy of one layer.

    By default codes are prefix-based: the level of a code is its length in
    characters and truncating to level ``k`` keeps the first ``k``
    characters. ``prefix_lengths`` restricts the admissible levels (HS codes
    use ``(2, 4, 6)``). A parent map ``{child: (parent, child_level)}``
    overrides prefixing for taxonomies that are not prefix-coded.
    """

    def __init__(self, prefix_lengths: Sequence[int] | None = None,
                 parents: Mapping[str, tuple[str, int]] | None = None):
        self.prefix_lengths = tuple(sorted(prefix_lengths)) if prefix_lengths else None
        self.parents = dict(parents) if parents else None
        if self.parents is not None:
            self._levels = {child: level for child, (_, level) in self.parents.items()}
            for child, (parent, level) in self.parents.items():
                if parent and parent not in self._levels:
                    self._levels[parent] = level - 1

    def __repr__(self):
        if self.parents is not None:
            return f"Hierarchy(parents=<{len(self.parents)} codes>)"
        return f"Hierarchy(prefix_lengths={self.prefix_lengths})"

    @classmethod
    def from_parent_file(cls, path) -> "Hierarchy":
        """Read a ``child_code,parent_code,level`` override file."""
        import csv

        from .errors import ParseError

        parents = {}
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["child_code", "parent_code", "level"]:
                raise ParseError(path, 1, "expected header child_code,parent_code,level")
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 3:
                    raise ParseError(path, lineno, f"expected 3 fields, got {len(row)}")
                try:
                    level = int(row[2])
                except ValueError:
                    raise ParseError(path, lineno, f"non-integer level {row[2]!r}") from None
                parents[row[0].strip()] = (row[1].strip(), level)
        return cls(parents=parents)

    def level_of(self, code: str) -> int:
        if self.parents is not None:
            try:
                return self._levels[code]
            except KeyError:
                raise HierarchyError(code, "not present in the parent map") from None
        if self.prefix_lengths is not None and len(code) not in self.prefix_lengths:
            raise HierarchyError(
                code, f"length {len(code)} is not one of the levels {self.prefix_lengths}")
        return len(code)

    def truncate(self, code: str, level: int) -> str:
        """Return the ancestor of ``code`` at ``level`` (``code`` itself if equal)."""
        own = self.level_of(code)
        if level > own:
            raise HierarchyError(code, f"cannot truncate level {own} code to finer level {level}")
        if self.parents is not None:
            while own > level:
                parent = self.parents.get(code, ("", 0))[0]
                if not parent:
                    raise HierarchyError(code, f"has no ancestor at level {level}")
                code = parent
                own = self.level_of(code)
            if own != level:
                raise HierarchyError(code, f"has no ancestor at level {level}")
            return code
        if self.prefix_lengths is not None and level not in self.prefix_lengths:
            raise HierarchyError(code, f"level {level} is not one of {self.prefix_lengths}")
        return code[:level]

    def is_descendant(self, code: str, ancestor: str) -> bool:
        try:
            return self.truncate(code, self.level_of(ancestor)) == ancestor
        except HierarchyError:
            return False


#: default hierarchies; HS product codes come in 2-digit steps
DEFAULT_HIERARCHIES = {
    PRODUCTS: Hierarchy(prefix_lengths=(2, 4, 6)),
}


def hierarchy_for(layer: LayerId, overrides: Mapping[LayerId, Hierarchy] | None = None) -> Hierarchy:
    if overrides and layer in overrides:
        return overrides[layer]
    return DEFAULT_HIERARCHIES.get(layer, Hierarchy())


@dataclass(frozen=True)
class ActivityCode:
    layer: LayerId
    code: str
    level: int

    @classmethod
    def of(cls, layer: LayerId, code: str, hierarchy: Hierarchy | None = None) -> "ActivityCode":
        h = hierarchy or hierarchy_for(layer)
        return cls(layer, code, h.level_of(code))

    def truncate(self, level: int, hierarchy: Hierarchy | None = None) -> "ActivityCode":
        h = hierarchy or hierarchy_for(self.layer)
        return ActivityCode(self.layer, h.truncate(self.code, level), level)


class Pooling(enum.Enum):
    SUM = "sum"
    STACK = "stack"

    @classmethod
    def parse(cls, value: "str | Pooling") -> "Pooling":
        if isinstance(value, Pooling):
            return value
        return cls(value.strip().lower())


@dataclass(frozen=True)
class TimeWindow:
    start_year: int
    span: int = 1
    pooling: Pooling = Pooling.SUM

    def __post_init__(self):
        if self.span < 1:
            raise ValueError(f"window span must be >= 1, got {self.span}")
        object.__setattr__(self, "pooling", Pooling.parse(self.pooling))

    @property
    def end_year(self) -> int:
        return self.start_year + self.span - 1

    @property
    def years(self) -> range:
        return range(self.start_year, self.start_year + self.span)

    @property
    def label(self) -> str:
        if self.span == 1:
            return str(self.start_year)
        return f"{self.start_year}-{self.end_year}"

    def shifted(self, dy: int) -> "TimeWindow":
        return TimeWindow(self.start_year + dy, self.span, self.pooling)


def _check_labels(labels, what):
    labels = tuple(str(x) for x in labels)
    if len(set(labels)) != len(labels):
        seen = set()
        dup = next(x for x in labels if x in seen or seen.add(x))
        raise MatrixError(f"duplicate {what} identifier {dup!r}")
    return labels


def _freeze(mat: sp.csr_matrix) -> sp.csr_matrix:
    for arr in (mat.data, mat.indices, mat.indptr):
        arr.flags.writeable = False
    return mat


@dataclass(frozen=True, eq=False)
class RawMatrix:
    """Sparse non-negative country x activity weights for one layer and window."""

    layer: LayerId
    window: TimeWindow
    rows: tuple
    cols: tuple
    values: sp.csr_matrix
    level: int | None = None

    def __post_init__(self):
        rows = _check_labels(self.rows, "row")
        cols = _check_labels(self.cols, "column")
        values = sp.csr_matrix(self.values, dtype=np.float64, copy=True)
        if values.shape != (len(rows), len(cols)):
            raise MatrixError(f"values shape {values.shape} does not match labels "
                              f"({len(rows)}, {len(cols)})")
        values.sum_duplicates()
        if values.nnz and (not np.all(np.isfinite(values.data)) or values.data.min() < 0):
            raise MatrixError("raw weights must be finite and non-negative")
        values.eliminate_zeros()
        values.sort_indices()
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "values", _freeze(values))

    @classmethod
    def from_entries(cls, layer, window, entries: Iterable[tuple[str, str, float]],
                     level=None, rows=None, cols=None) -> "RawMatrix":
        """Build from ``(row, col, value)`` triples; repeated cells are summed.

        Row and column orders default to the sorted identifiers.
        """
        entries = list(entries)
        if rows is None:
            rows = sorted({r for r, _, _ in entries})
        if cols is None:
            cols = sorted({c for _, c, _ in entries})
        ri = {r: i for i, r in enumerate(rows)}
        ci = {c: i for i, c in enumerate(cols)}
        data = np.array([float(v) for _, _, v in entries], dtype=np.float64)
        i = np.array([ri[r] for r, _, _ in entries], dtype=np.int64)
        j = np.array([ci[c] for _, c, _ in entries], dtype=np.int64)
        values = sp.coo_matrix((data, (i, j)), shape=(len(rows), len(cols)))
        return cls(LayerId.parse(layer), window, tuple(rows), tuple(cols), values.tocsr(), level)

    @classmethod
    def from_dense(cls, layer, window, array, rows=None, cols=None, level=None) -> "RawMatrix":
        array = np.asarray(array, dtype=np.float64)
        if rows is None:
            rows = tuple(f"c{i}" for i in range(array.shape[0]))
        if cols is None:
            cols = tuple(f"a{j}" for j in range(array.shape[1]))
        return cls(LayerId.parse(layer), window, tuple(rows), tuple(cols), sp.csr_matrix(array), level)

    @property
    def shape(self):
        return self.values.shape

    def total(self) -> float:
        return float(self.values.sum())

    def dense(self) -> np.ndarray:
        return self.values.toarray()

    def entries(self):
        """Yield ``(row, col, value)`` in row-major sorted-index order."""
        coo = self.values.tocoo()
        for i, j, v in zip(coo.row, coo.col, coo.data):
            yield self.rows[i], self.cols[j], float(v)


@dataclass(frozen=True, eq=False)
class BinaryMatrix:
    """RCA-binarized matrix with cached diversification and ubiquity.

    ``dropped_rows``/``dropped_cols`` list identifiers removed upstream
    because their raw weights were all zero.
    """

    layer: LayerId
    window: TimeWindow
    rows: tuple
    cols: tuple
    entries: sp.csr_matrix
    level: int | None = None
    dropped_rows: tuple = ()
    dropped_cols: tuple = ()
    diversification: np.ndarray = field(init=False, repr=False)
    ubiquity: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rows = _check_labels(self.rows, "row")
        cols = _check_labels(self.cols, "column")
        entries = sp.csr_matrix(self.entries, copy=True)
        if entries.shape != (len(rows), len(cols)):
            raise MatrixError(f"entries shape {entries.shape} does not match labels "
                              f"({len(rows)}, {len(cols)})")
        entries.sum_duplicates()
        entries.eliminate_zeros()
        entries.data = np.ones_like(entries.data, dtype=np.int8)
        entries = sp.csr_matrix(entries, dtype=np.int8)
        entries.sort_indices()
        d = np.diff(entries.indptr).astype(np.int64)
        u = np.bincount(entries.indices, minlength=len(cols)).astype(np.int64)
        d.flags.writeable = False
        u.flags.writeable = False
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "entries", _freeze(entries))
        object.__setattr__(self, "dropped_rows", tuple(self.dropped_rows))
        object.__setattr__(self, "dropped_cols", tuple(self.dropped_cols))
        object.__setattr__(self, "diversification", d)
        object.__setattr__(self, "ubiquity", u)

    @classmethod
    def from_dense(cls, layer, window, array, rows=None, cols=None, level=None) -> "BinaryMatrix":
        array = np.asarray(array).astype(bool)
        if rows is None:
            rows = tuple(f"c{i}" for i in range(array.shape[0]))
        if cols is None:
            cols = tuple(f"a{j}" for j in range(array.shape[1]))
        return cls(LayerId.parse(layer), window, tuple(rows), tuple(cols),
                   sp.csr_matrix(array.astype(np.int8)), level)

    @property
    def shape(self):
        return self.entries.shape

    @property
    def nnz(self) -> int:
        return int(self.entries.nnz)

    def dense(self) -> np.ndarray:
        return self.entries.toarray().astype(bool)

    def pairs(self):
        coo = self.entries.tocoo()
        return [(self.rows[i], self.cols[j]) for i, j in zip(coo.row, coo.col)]

    def select(self, rows: Sequence[str] | None = None, cols: Sequence[str] | None = None,
               relabel_rows: Sequence[str] | None = None) -> "BinaryMatrix":
        """Sub-matrix on the given identifiers, in the given order."""
        mat = self.entries
        new_rows, new_cols = self.rows, self.cols
        if rows is not None:
            index = {r: i for i, r in enumerate(self.rows)}
            mat = mat[[index[r] for r in rows], :]
            new_rows = tuple(rows)
        if cols is not None:
            index = {c: i for i, c in enumerate(self.cols)}
            mat = mat[:, [index[c] for c in cols]]
            new_cols = tuple(cols)
        if relabel_rows is not None:
            new_rows = tuple(relabel_rows)
        return BinaryMatrix(self.layer, self.window, new_rows, new_cols, mat, self.level,
                            self.dropped_rows, self.dropped_cols)


def split_row_id(row: str) -> tuple[str, int | None]:
    """Split a stacked row identifier ``country@year`` into its parts."""
    country, sep, year = row.rpartition(STACK_SEP)
    if sep and year.lstrip("-").isdigit():
        return country, int(year)
    return row, None


def aggregate(raw: RawMatrix, target_level: int, hierarchy: Hierarchy | None = None) -> RawMatrix:
    """Truncate column codes to ``target_level`` and sum merged columns.

    Rows are unchanged and the total mass is conserved.
    """
    h = hierarchy or hierarchy_for(raw.layer)
    new_codes = [h.truncate(code, target_level) for code in raw.cols]
    merged = sorted(set(new_codes))
    index = {c: j for j, c in enumerate(merged)}
    n = len(raw.cols)
    indicator = sp.csr_matrix(
        (np.ones(n), (np.arange(n), [index[c] for c in new_codes])), shape=(n, len(merged)))
    values = raw.values @ indicator
    return RawMatrix(raw.layer, raw.window, raw.rows, tuple(merged), values, target_level)


def pool(raws: Sequence[RawMatrix], pooling: "Pooling | str" = Pooling.SUM) -> RawMatrix:
    """Combine single-year matrices for consecutive years into one window.

    ``SUM`` adds the matrices cell by cell (rows and columns are the sorted
    union). ``STACK`` keeps each ``(country, year)`` as its own row, labelled
    ``country@year``.
    """
    pooling = Pooling.parse(pooling)
    if not raws:
        raise MatrixError("pool needs at least one matrix")
    layer = raws[0].layer
    level = raws[0].level
    for r in raws:
        if r.layer != layer:
            raise MatrixError(f"cannot pool layers {layer} and {r.layer}")
        if r.level != level:
            raise MatrixError(f"cannot pool aggregation levels {level} and {r.level}")
        if r.window.span != 1:
            raise MatrixError("pool expects single-year matrices")
    years = [r.window.start_year for r in raws]
    if years != list(range(years[0], years[0] + len(years))):
        raise MatrixError(f"years {years} are not consecutive")
    window = TimeWindow(years[0], len(raws), pooling)
    if len(raws) == 1 and pooling is Pooling.SUM:
        return RawMatrix(layer, window, raws[0].rows, raws[0].cols, raws[0].values, level)

    cols = tuple(sorted(set().union(*(r.cols for r in raws))))
    col_index = {c: j for j, c in enumerate(cols)}

    def widen(r, row_index, n_rows):
        coo = r.values.tocoo()
        return sp.coo_matrix(
            (coo.data, ([row_index[r.rows[i]] for i in coo.row], [col_index[r.cols[j]] for j in coo.col])),
            shape=(n_rows, len(cols)))

    if pooling is Pooling.SUM:
        rows = tuple(sorted(set().union(*(r.rows for r in raws))))
        row_index = {c: i for i, c in enumerate(rows)}
        total = sp.csr_matrix((len(rows), len(cols)))
        for r in raws:
            total = total + widen(r, row_index, len(rows)).tocsr()
        return RawMatrix(layer, window, rows, cols, total, level)

    blocks, rows = [], []
    for r in raws:
        y = r.window.start_year
        labels = [f"{c}{STACK_SEP}{y}" for c in r.rows]
        blocks.append(widen(r, {c: i for i, c in enumerate(r.rows)}, len(r.rows)))
        rows.extend(labels)
    return RawMatrix(layer, window, tuple(rows), cols, sp.vstack(blocks).tocsr(), level)
