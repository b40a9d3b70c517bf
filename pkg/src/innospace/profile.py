"""Per-target significance profiles.

For one target activity the profile lists every source activity with its
observed Assist value, the 95th percentile of the null distribution of
that link and the significance flag, optionally drilling into one source
branch at a finer level.
"""

from __future__ import annotations

import difflib
import warnings
from dataclasses import dataclass, field
from typing import Sequence


from .assist import align_countries, assist
from .bicm import DEFAULT_TOL, fit_model
from .core import LayerId, TimeWindow
from .errors import UnknownCodeError
from .rng import derive_seed
from .significance import check_resolution, null_assist_ensemble, p_values

UNTESTABLE = "untestable"


@dataclass(frozen=True)
class ProfileRow:
    level: int | None
    source_code: str
    B: float
    null_q95: float
    p: float
    significant: bool
    status: str = "ok"


@dataclass(frozen=True)
class ProfileTable:
    target_layer: LayerId
    target_code: str
    source_layer: LayerId
    threshold: float
    ensemble: int
    status: str = "ok"
    rows: tuple = field(default=())

    def ranked(self) -> list[ProfileRow]:
        return sorted(self.rows, key=lambda r: (-r.B, r.source_code))

    def row(self, source_code, level=None) -> ProfileRow:
        for r in self.rows:
            if r.source_code == source_code and (level is None or r.level == level):
                return r
        raise KeyError(source_code)


def _suggest(code: str, known: Sequence[str], n: int = 5) -> list[str]:
    # rank by similarity, ties broken by code so the output is stable
    scored = []
    for k in known:
        ratio = difflib.SequenceMatcher(None, code, k).ratio()
        if ratio >= 0.5:
            scored.append((-ratio, k))
    return [k for _, k in sorted(scored)[:n]]


def _profile_level(store, source, target, code, w1, w2, level1, level2, ensemble, seed, threshold,
                   only=None, tol=DEFAULT_TOL, workers=1):
    m1 = store.binary(source, w1, level1)
    m2 = store.binary(target, w2, level2)
    if code not in m2.cols:
        return None
    a1, a2, _, _ = align_countries(m1, m2)
    if a2.ubiquity[a2.cols.index(code)] == 0:
        return None
    observed = assist(m1, m2)
    model1 = fit_model(a1, tol)
    model2 = fit_model(a2, tol)
    ens = null_assist_ensemble(model1, model2, ensemble, seed, observed=observed, keep_samples=True,
                               sample_cols=[code], workers=workers)
    res = p_values(observed, ens)
    j = res.cols.index(code)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        q95 = ens.quantile(0.95, [code])[:, 0]
    rindex = {r: i for i, r in enumerate(ens.rows)}
    sig = res.significant(threshold)[:, j]
    p = res.p[:, j]
    rows = []
    for i, a in enumerate(res.rows):
        if only is not None and a not in only:
            continue
        rows.append(ProfileRow(level1, a, float(res.values[i, j]), float(q95[rindex[a]]), float(p[i]),
                               bool(sig[i])))
    return rows


def _finer_level(store, layer, code) -> int | None:
    h = store.hierarchy(layer)
    own = h.level_of(code)
    finer = set()
    for c in store.codes(layer):
        lv = h.level_of(c)
        if lv > own and h.is_descendant(c, code):
            if h.prefix_lengths is not None:
                finer.update(k for k in h.prefix_lengths if own < k <= lv)
            else:
                finer.add(lv)
    return min(finer) if finer else None


def profile_target(store, target_layer, target_code: str, source_layer, target_window: TimeWindow,
                   source_window: TimeWindow, levels: Sequence[int | None] = (None,),
                   target_level: int | None = None, ensemble: int = 1000, seed: int = 0,
                   threshold: float = 0.95, drill: str | None = None, drill_level: int | None = None,
                   tol: float = DEFAULT_TOL, workers: int = 1) -> ProfileTable:
    """Ranked significance table of every source activity for one target.

    ``levels`` lists the source aggregation levels to profile. ``drill``
    names one source code whose descendants at ``drill_level`` (by default
    the next finer level present) are added; a code with no finer level
    yields a single row for the code itself.

    Raises :class:`UnknownCodeError` with close matches when the target
    code never occurs in the store. A target with zero ubiquity in its
    window gives a table with status ``"untestable"`` and no rows.
    """
    target, source = LayerId.parse(target_layer), LayerId.parse(source_layer)
    check_resolution(threshold, ensemble, strict=True)
    known = store.codes(target, target_level)
    if target_code not in known:
        raise UnknownCodeError(target_code, _suggest(target_code, known))
    rows = []
    plan = [(lv, None) for lv in levels]
    if drill is not None:
        h = store.hierarchy(source)
        finer = drill_level if drill_level is not None else _finer_level(store, source, drill)
        if finer is None:
            plan.append((h.level_of(drill), {drill}))
        else:
            children = {c for c in store.codes(source, finer) if h.is_descendant(c, drill)}
            plan.append((finer, children))
    for lv, only in plan:
        s = derive_seed(seed, "profile", source.name, target.name, target_code, -1 if lv is None else lv)
        part = _profile_level(store, source, target, target_code, source_window, target_window, lv,
                              target_level, ensemble, s, threshold, only, tol, workers)
        if part is None:
            return ProfileTable(target, target_code, source, threshold, ensemble, UNTESTABLE, ())
        rows.extend(part)
    return ProfileTable(target, target_code, source, threshold, ensemble, "ok", tuple(rows))
