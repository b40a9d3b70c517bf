"""Lagged signal-to-noise ratio between two layers.

For a lag ``dy`` the ratio is the mean, over every start year ``y`` with
data for both windows, of the fraction of testable links of
``B(L1 @ y -> L2 @ y + dy)`` that are significant at the threshold.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .assist import align_countries, assist
from .bicm import DEFAULT_TOL, fit_model
from .core import LayerId, Pooling, TimeWindow
from .rng import derive_seed
from .significance import check_resolution, null_assist_ensemble, p_values

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SignalConfig:
    threshold: float = 0.99
    ensemble: int = 1000
    pool: int = 3
    pooling: Pooling = Pooling.SUM
    level1: int | None = None
    level2: int | None = None
    seed: int = 0
    #: restrict candidate start years of the source window
    years: tuple | None = None
    tol: float = DEFAULT_TOL
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "pooling", Pooling.parse(self.pooling))
        if self.years is not None:
            object.__setattr__(self, "years", tuple(self.years))


@dataclass(frozen=True)
class PairFraction:
    y1: int
    y2: int
    fraction: float
    n_links: int
    n_significant: int


@dataclass(frozen=True)
class PhiPoint:
    dy: int
    mean: float
    sigma: float
    count: int
    links_mean: float
    pairs: tuple = ()


@dataclass(frozen=True)
class SignalCurve:
    source: LayerId
    target: LayerId
    level1: int | None
    level2: int | None
    threshold: float
    ensemble: int
    points: tuple = field(default=())

    @property
    def lags(self) -> list[int]:
        return [p.dy for p in self.points]

    def peak(self) -> int:
        return max(self.points, key=lambda p: p.mean).dy

    def rows(self):
        for p in self.points:
            yield {"dy": p.dy, "phi_mean": p.mean, "phi_sigma": p.sigma,
                   "n_pairs": p.count, "n_links_mean": p.links_mean}


def year_pairs(store, L1, L2, dy: int, pool: int = 1, years: Iterable[int] | None = None) -> list[int]:
    """Start years ``y`` for which both windows ``y`` and ``y + dy`` are complete."""
    L1, L2 = LayerId.parse(L1), LayerId.parse(L2)
    have1, have2 = set(store.years(L1)), set(store.years(L2))
    candidates = sorted(have1) if years is None else sorted(years)
    out = []
    for y in candidates:
        if all(y + k in have1 for k in range(pool)) and all(y + dy + k in have2 for k in range(pool)):
            out.append(y)
    return out


def pair_fraction(store, L1, L2, y1: int, y2: int, config: SignalConfig) -> PairFraction:
    """Significant share of testable links for one year pair.

    Testable links join a source activity with positive ubiquity to a
    target activity with positive ubiquity, after country alignment.
    """
    L1, L2 = LayerId.parse(L1), LayerId.parse(L2)
    w1 = TimeWindow(y1, config.pool, config.pooling)
    w2 = TimeWindow(y2, config.pool, config.pooling)
    m1 = store.binary(L1, w1, config.level1)
    m2 = store.binary(L2, w2, config.level2)
    a1, a2, _, _ = align_countries(m1, m2)
    observed = assist(m1, m2)
    model1 = _null_model(store, a1, config)
    model2 = _null_model(store, a2, config)
    seed = derive_seed(config.seed, "phi", L1.name, L2.name, y1, y2,
                       -1 if config.level1 is None else config.level1,
                       -1 if config.level2 is None else config.level2)
    ens = null_assist_ensemble(model1, model2, config.ensemble, seed, observed=observed,
                               workers=config.workers, source=observed.source, target=observed.target)
    res = p_values(observed, ens)
    col_ok = a2.ubiquity > 0
    sig = res.significant(config.threshold)[:, col_ok]
    n_links = int(sig.size)
    n_sig = int(sig.sum())
    return PairFraction(y1, y2, n_sig / n_links if n_links else float("nan"), n_links, n_sig)


def _null_model(store, m, config):
    # stores that know their generating model (self-null experiments) supply it
    known = getattr(store, "null_model", None)
    if known is not None:
        return known(m)
    return fit_model(m, config.tol)


def phi(store, L1, L2, dy: int, config: SignalConfig) -> PhiPoint | None:
    """Mean and standard deviation of the significant-link fraction at lag ``dy``.

    Returns ``None`` when no year pair has data for this lag.
    """
    check_resolution(config.threshold, config.ensemble, strict=True)
    ys = year_pairs(store, L1, L2, dy, config.pool, config.years)
    fracs = []
    for y in ys:
        pf = pair_fraction(store, L1, L2, y, y + dy, config)
        if pf.n_links:
            fracs.append(pf)
    if not fracs:
        log.info("no year pair for %s->%s at lag %d", L1, L2, dy)
        return None
    values = np.array([f.fraction for f in fracs])
    return PhiPoint(dy, float(values.mean()), float(values.std()), len(fracs),
                    float(np.mean([f.n_links for f in fracs])), tuple(fracs))


def phi_curve(store, L1, L2, lags: Sequence[int], config: SignalConfig) -> SignalCurve:
    """Signal-to-noise curve over ``lags``; lags without data are omitted."""
    L1, L2 = LayerId.parse(L1), LayerId.parse(L2)
    points = []
    for dy in sorted(set(int(x) for x in lags)):
        p = phi(store, L1, L2, dy, config)
        if p is not None:
            points.append(p)
    return SignalCurve(L1, L2, config.level1, config.level2, config.threshold, config.ensemble, tuple(points))


def parse_lags(text: str) -> list[int]:
    """Parse ``"a..b"``, ``"a,b,c"`` or a single integer."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in text.split(",") if x.strip()]
