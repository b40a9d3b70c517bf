"""Matrix store: raw matrices keyed by (layer, year), on disk or in memory.

On disk the store is a directory with one ``<layer>_<year>.csv`` file per
matrix in the ``country,code,year,value`` record format.
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Iterable, Mapping

from .core import (BinaryMatrix, Hierarchy, LayerId, Pooling, RawMatrix, TimeWindow,
                   aggregate, hierarchy_for, pool)
from .errors import MissingDataError
from .ingest import load_table, write_table
from .rca import binarize

_FILE_RE = re.compile(r"^(?P<layer>[^_/]+)_(?P<year>-?\d+)\.csv$")


class MatrixStore:
    """Raw single-year matrices plus cached binarized windows."""

    def __init__(self, directory=None, hierarchies: Mapping[LayerId, Hierarchy] | None = None):
        self.directory = Path(directory) if directory is not None else None
        self.hierarchies = dict(hierarchies or {})
        self._raw: dict[tuple[LayerId, int], RawMatrix] = {}
        self._binary: dict = {}
        if self.directory is not None and self.directory.is_dir():
            for path in sorted(self.directory.iterdir()):
                m = _FILE_RE.match(path.name)
                if m:
                    self._raw[(LayerId.parse(m["layer"]), int(m["year"]))] = None  # lazy

    @classmethod
    def from_matrices(cls, raws: Iterable[RawMatrix], hierarchies=None) -> "MatrixStore":
        store = cls(None, hierarchies)
        for raw in raws:
            store.put(raw, persist=False)
        return store

    def path_for(self, layer, year) -> Path:
        return self.directory / f"{LayerId.parse(layer).name}_{year}.csv"

    def put(self, raw: RawMatrix, persist: bool = True):
        if raw.window.span != 1:
            raise ValueError("the store holds single-year matrices only")
        key = (raw.layer, raw.window.start_year)
        self._raw[key] = raw
        self._binary.clear()
        if persist and self.directory is not None:
            write_table(raw, self.path_for(*key))

    def layers(self) -> list[LayerId]:
        return sorted({layer for layer, _ in self._raw}, key=lambda l: l.name)

    def years(self, layer) -> list[int]:
        layer = LayerId.parse(layer)
        return sorted(y for l, y in self._raw if l == layer)

    def has(self, layer, year) -> bool:
        return (LayerId.parse(layer), year) in self._raw

    def raw(self, layer, year) -> RawMatrix:
        key = (LayerId.parse(layer), year)
        if key not in self._raw:
            raise MissingDataError([(key[0].name, year)])
        if self._raw[key] is None:
            mats = load_table(self.path_for(*key), key[0])
            if not mats:
                raise MissingDataError([(key[0].name, year)])
            self._raw[key] = mats[0]
        return self._raw[key]

    def hierarchy(self, layer) -> Hierarchy:
        return hierarchy_for(LayerId.parse(layer), self.hierarchies)

    def missing(self, layer, window: TimeWindow) -> list[tuple[str, int]]:
        layer = LayerId.parse(layer)
        return [(layer.name, y) for y in window.years if not self.has(layer, y)]

    def window_raw(self, layer, window: TimeWindow, level: int | None = None) -> RawMatrix:
        """Aggregate each year to ``level`` then pool over ``window``."""
        layer = LayerId.parse(layer)
        missing = self.missing(layer, window)
        if missing:
            raise MissingDataError(missing)
        raws = [self.raw(layer, y) for y in window.years]
        if level is not None:
            h = self.hierarchy(layer)
            raws = [aggregate(r, level, h) for r in raws]
        return pool(raws, window.pooling)

    def binary(self, layer, window: TimeWindow, level: int | None = None) -> BinaryMatrix:
        layer = LayerId.parse(layer)
        key = (layer, window, level)
        if key not in self._binary:
            self._binary[key] = binarize(self.window_raw(layer, window, level))
        return self._binary[key]

    def codes(self, layer, level: int | None = None) -> list[str]:
        """Every code of ``layer`` seen in any year, optionally truncated."""
        layer = LayerId.parse(layer)
        codes = set()
        h = self.hierarchy(layer)
        for y in self.years(layer):
            for c in self.raw(layer, y).cols:
                codes.add(h.truncate(c, level) if level is not None else c)
        return sorted(codes)


def window(start_year: int, span: int = 1, pooling="sum") -> TimeWindow:
    return TimeWindow(start_year, span, Pooling.parse(pooling))
