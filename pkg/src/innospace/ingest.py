"""Reading raw activity records and fractional counting."""

from __future__ import annotations

import csv
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .core import LayerId, RawMatrix, TimeWindow
from .errors import ParseError

log = logging.getLogger(__name__)

TABLE_HEADER = ["country", "code", "year", "value"]
ATTRIBUTION_HEADER = ["unit", "countries", "codes", "year"]
#: separator of the country and code lists in attribution files
LIST_SEP = ";"


@dataclass(frozen=True)
class AttributionRecord:
    """One unit of output (e.g. a patent family) attributed to countries and codes."""

    unit: str
    countries: frozenset
    codes: frozenset
    year: int

    def __post_init__(self):
        object.__setattr__(self, "countries", frozenset(self.countries))
        object.__setattr__(self, "codes", frozenset(self.codes))

    @property
    def is_valid(self) -> bool:
        return bool(self.countries) and bool(self.codes)


@dataclass
class IngestReport:
    """Machine-readable summary of an ingestion run."""

    accepted: int = 0
    rejected: Counter = field(default_factory=Counter)
    warnings: list = field(default_factory=list)

    def reject(self, reason: str, detail: str | None = None):
        self.rejected[reason] += 1
        if detail:
            self.warnings.append(detail)

    def warn(self, message: str):
        log.warning(message)
        self.warnings.append(message)

    def to_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "rejected": dict(sorted(self.rejected.items())),
            "warnings": list(self.warnings),
        }


class FractionalCounter:
    """Accumulates fractional weights per ``(year, country, code)`` cell.

    Each cell keeps its list of contributions and is summed with
    ``math.fsum``, which is correctly rounded and therefore independent of
    the order in which records (or shards) arrive.
    """

    def __init__(self, report: IngestReport | None = None):
        self.report = report if report is not None else IngestReport()
        self._cells: dict = defaultdict(list)

    def add(self, record: AttributionRecord):
        if not record.countries:
            self.report.reject("empty-countries", f"unit {record.unit!r} has no country")
            return
        if not record.codes:
            self.report.reject("empty-codes", f"unit {record.unit!r} has no activity code")
            return
        share = 1.0 / (len(record.countries) * len(record.codes))
        for country in record.countries:
            for code in record.codes:
                self._cells[(record.year, country, code)].append(share)
        self.report.accepted += 1

    def update(self, records: Iterable[AttributionRecord]) -> "FractionalCounter":
        for record in records:
            self.add(record)
        return self

    def merge(self, other: "FractionalCounter") -> "FractionalCounter":
        for key, parts in other._cells.items():
            self._cells[key].extend(parts)
        self.report.accepted += other.report.accepted
        self.report.rejected.update(other.report.rejected)
        self.report.warnings.extend(other.report.warnings)
        return self

    def years(self) -> list[int]:
        return sorted({year for year, _, _ in self._cells})

    def matrices(self, layer) -> dict[int, RawMatrix]:
        layer = LayerId.parse(layer)
        per_year = defaultdict(list)
        for (year, country, code) in sorted(self._cells):
            per_year[year].append((country, code, math.fsum(self._cells[(year, country, code)])))
        return {year: RawMatrix.from_entries(layer, TimeWindow(year), entries)
                for year, entries in per_year.items()}


def fractional_count(records: Iterable[AttributionRecord], layer, report: IngestReport | None = None) -> RawMatrix:
    """Split each record's unit weight evenly over its countries x codes.

    All records must share one year; use :func:`fractional_count_by_year`
    for mixed streams. The matrix total equals the number of accepted
    records.
    """
    counter = FractionalCounter(report).update(records)
    mats = counter.matrices(layer)
    if len(mats) > 1:
        raise ValueError(f"records span several years {sorted(mats)}; group them by year first")
    if not mats:
        raise ValueError("no valid attribution records")
    return next(iter(mats.values()))


def fractional_count_by_year(records: Iterable[AttributionRecord], layer,
                             report: IngestReport | None = None) -> dict[int, RawMatrix]:
    return FractionalCounter(report).update(records).matrices(layer)


def _check_header(path, header, expected):
    if header is None:
        return False
    if [h.strip().lower() for h in header] != expected:
        raise ParseError(path, 1, f"expected header {','.join(expected)}, got {','.join(header)}")
    return True


def _parse_year(path, lineno, text):
    try:
        return int(text)
    except ValueError:
        raise ParseError(path, lineno, f"non-integer year {text!r}") from None


def load_table(path, layer, report: IngestReport | None = None) -> list[RawMatrix]:
    """Load a ``country,code,year,value`` file into one RawMatrix per year.

    Repeated ``(country, code, year)`` lines are summed; zero values are
    dropped. Raises :class:`ParseError` with the line number on a missing
    header, a malformed line, or a non-numeric or negative value.
    """
    report = report if report is not None else IngestReport()
    layer = LayerId.parse(layer)
    cells = defaultdict(list)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if not _check_header(path, next(reader, None), TABLE_HEADER):
            report.warn(f"{path}: empty file")
            return []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 4:
                raise ParseError(path, lineno, f"expected 4 fields, got {len(row)}")
            country, code, year, value = (x.strip() for x in row)
            if not country or not code:
                raise ParseError(path, lineno, "empty country or code")
            year = _parse_year(path, lineno, year)
            try:
                v = float(value)
            except ValueError:
                raise ParseError(path, lineno, f"non-numeric value {value!r}") from None
            if not math.isfinite(v):
                raise ParseError(path, lineno, f"non-finite value {value!r}")
            if v < 0:
                raise ParseError(path, lineno, f"negative value {value!r}")
            report.accepted += 1
            if v > 0:
                cells[(year, country, code)].append(v)
    if not cells:
        report.warn(f"{path}: no positive values")
    per_year = defaultdict(list)
    for (year, country, code) in sorted(cells):
        per_year[year].append((country, code, math.fsum(cells[(year, country, code)])))
    return [RawMatrix.from_entries(layer, TimeWindow(year), per_year[year]) for year in sorted(per_year)]


def write_table(raw: RawMatrix, path, year: int | None = None):
    """Write a matrix in the ``country,code,year,value`` record format.

    Values use ``repr`` so reading the file back reproduces them exactly.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    year = raw.window.start_year if year is None else year
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TABLE_HEADER)
        for country, code, value in raw.entries():
            writer.writerow([country, code, year, repr(value)])


def read_attributions(path, report: IngestReport | None = None) -> list[AttributionRecord]:
    """Read a ``unit,countries,codes,year`` file; lists are ``;``-separated."""
    report = report if report is not None else IngestReport()
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if not _check_header(path, next(reader, None), ATTRIBUTION_HEADER):
            report.warn(f"{path}: empty file")
            return []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ParseError(path, lineno, f"expected 4 fields, got {len(row)}")
            unit, countries, codes, year = row
            records.append(AttributionRecord(
                unit.strip(),
                frozenset(c.strip() for c in countries.split(LIST_SEP) if c.strip()),
                frozenset(c.strip() for c in codes.split(LIST_SEP) if c.strip()),
                _parse_year(path, lineno, year.strip()),
            ))
    return records
