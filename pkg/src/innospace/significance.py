"""Null Assist ensembles and empirical p-values.

Null Assist matrices are obtained by drawing one matrix from each of the
two fitted BiCMs and contracting them exactly like the observed pair. A
link's p-value is the add-one estimate ``(1 + #{B_null >= B_obs}) / (1 + S)``.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .assist import AssistMatrix, Side, assist_values
from .bicm import BicmModel
from .errors import EnsembleSizeError, MatrixError
from .rng import substream

log = logging.getLogger(__name__)

#: null values within this of the observed value count as ties (exceedances)
TIE_ATOL = 1e-12


def required_ensemble_size(threshold: float) -> int:
    """Smallest S whose p-value grid reaches ``1 - threshold``.

    The add-one estimator cannot go below ``1 / (S + 1)``, so a threshold
    ``t`` needs ``S >= 1 / (1 - t) - 1``.
    """
    if not 0 < threshold < 1:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    return max(1, math.ceil(1.0 / (1.0 - threshold) - 1.0 - 1e-9))


def resolution_message(threshold: float, size: int) -> str:
    need = required_ensemble_size(threshold)
    return (
        f"an ensemble of {size} null samples cannot resolve the {threshold:g} threshold: "
        f"the smallest attainable p-value is 1/(S+1) = {1.0 / (size + 1):.3g} > {1.0 - threshold:.3g}. "
        f"Use at least {need} samples (about 1/(1 - threshold)); e.g. 99% needs ~100 "
        f"and 99.9% needs ~1000 null realizations.")


def check_resolution(threshold: float, size: int, strict: bool = True):
    """Raise :class:`EnsembleSizeError` (or warn) when S is too small for ``threshold``."""
    if size < required_ensemble_size(threshold):
        msg = resolution_message(threshold, size)
        if strict:
            raise EnsembleSizeError(msg)
        warnings.warn(msg, stacklevel=3)
        log.warning(msg)
        return False
    return True


@dataclass(frozen=True, eq=False)
class NullEnsemble:
    """Streaming summary of S null Assist matrices.

    ``exceed[i, j]`` counts draws with ``B_null >= observed`` (ties count);
    draws where source activity ``i`` has zero sampled ubiquity leave ``B``
    undefined and count as non-exceedances. ``defined``, ``total`` and
    ``total_sq`` accumulate over defined draws only. ``samples`` is kept
    when requested (optionally restricted to ``sample_cols``), with NaN for
    undefined rows.
    """

    source: Side | None
    target: Side | None
    rows: tuple
    cols: tuple
    size: int
    seed: int
    observed: np.ndarray | None
    exceed: np.ndarray | None
    defined: np.ndarray
    total: np.ndarray
    total_sq: np.ndarray
    samples: np.ndarray | None = None
    sample_cols: tuple | None = None

    def mean(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.defined[:, None] > 0, self.total / self.defined[:, None], np.nan)

    def quantile(self, q: float, cols: Sequence[str] | None = None) -> np.ndarray:
        """Per-link null quantile; needs stored samples."""
        if self.samples is None:
            raise ValueError("ensemble was built without keep_samples")
        data = self.samples
        if cols is not None:
            stored = self.sample_cols if self.sample_cols is not None else self.cols
            idx = [stored.index(c) for c in cols]
            data = data[:, :, idx]
        return np.nanquantile(data, q, axis=0)


def _draw_chunk(model1, model2, seed, indices, observed, keep, sample_idx):
    n1, n2 = len(model1.cols), len(model2.cols)
    exceed = np.zeros((n1, n2), dtype=np.int64) if observed is not None else None
    defined = np.zeros(n1, dtype=np.int64)
    total = np.zeros((n1, n2))
    total_sq = np.zeros((n1, n2))
    kept = [] if keep else None
    for i in indices:
        gen = substream(seed, i)
        m1 = model1.draw(gen)
        m2 = model2.draw(gen)
        B, u1 = assist_values(m1, m2)
        ok = u1 > 0
        defined += ok
        Bd = np.where(ok[:, None], B, 0.0)
        total += Bd
        total_sq += Bd * Bd
        if exceed is not None:
            exceed += (B >= observed - TIE_ATOL) & ok[:, None]
        if kept is not None:
            Bn = np.where(ok[:, None], B, np.nan)
            kept.append(Bn if sample_idx is None else Bn[:, sample_idx])
    return exceed, defined, total, total_sq, kept


def null_assist_ensemble(model1: BicmModel, model2: BicmModel, size: int, seed: int,
                         observed: "AssistMatrix | np.ndarray | None" = None,
                         keep_samples: bool = False, sample_cols: Sequence[str] | None = None,
                         thresholds: Sequence[float] = (), workers: int = 1,
                         source: Side | None = None, target: Side | None = None) -> NullEnsemble:
    """Draw ``size`` null Assist matrices from two BiCMs over aligned countries.

    Draw ``i`` takes both matrices from the substream ``(seed, i)``, so the
    result is independent of ``workers``. With ``observed`` given,
    exceedance counts are streamed; otherwise samples are kept.
    Too small an ensemble for any of ``thresholds`` only warns here.
    """
    if size < 1:
        raise ValueError("ensemble size must be >= 1")
    if model1.rows != model2.rows:
        raise MatrixError("BiCM models are not fitted on the same aligned country set")
    for t in thresholds:
        check_resolution(t, size, strict=False)
    obs = None
    if observed is not None:
        obs = _observed_grid(observed, model1.cols, model2.cols)
    keep = keep_samples or observed is None
    sample_idx = None
    if sample_cols is not None:
        sample_idx = [model2.cols.index(c) for c in sample_cols]

    workers = max(1, int(workers))
    chunks = [range(k, size, workers) for k in range(workers)] if workers > 1 else [range(size)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda ix: _draw_chunk(model1, model2, seed, ix, obs, keep, sample_idx), chunks))
    else:
        parts = [_draw_chunk(model1, model2, seed, chunks[0], obs, keep, sample_idx)]

    exceed = sum(p[0] for p in parts) if obs is not None else None
    defined = sum(p[1] for p in parts)
    total = sum(p[2] for p in parts)
    total_sq = sum(p[3] for p in parts)
    samples = None
    if keep:
        # restore index order regardless of chunking
        ordered = [None] * size
        for chunk, part in zip(chunks, parts):
            for i, s in zip(chunk, part[4]):
                ordered[i] = s
        samples = np.stack(ordered)
    return NullEnsemble(source, target, model1.cols, model2.cols, size, seed, obs, exceed,
                        defined, total, total_sq, samples,
                        tuple(sample_cols) if sample_cols is not None else None)


def _observed_grid(observed, rows, cols) -> np.ndarray:
    """Observed values on the ensemble grid; rows missing from ``observed`` get +inf."""
    if isinstance(observed, AssistMatrix):
        grid = np.full((len(rows), len(cols)), np.inf)
        col_idx = [cols.index(c) for c in observed.cols]
        rindex = {r: i for i, r in enumerate(rows)}
        for k, r in enumerate(observed.rows):
            grid[rindex[r], col_idx] = observed.values[k]
        return grid
    grid = np.asarray(observed, dtype=np.float64)
    if grid.shape != (len(rows), len(cols)):
        raise MatrixError(f"observed shape {grid.shape} does not match ensemble {(len(rows), len(cols))}")
    return grid


@dataclass(frozen=True, eq=False)
class SignificanceResult:
    """Observed B, empirical p-values and per-threshold flags for one layer pair."""

    source: Side | None
    target: Side | None
    rows: tuple
    cols: tuple
    values: np.ndarray
    exceed: np.ndarray
    size: int
    thresholds: tuple = ()
    flags: dict = field(default_factory=dict)

    @property
    def p(self) -> np.ndarray:
        return (1.0 + self.exceed) / (1.0 + self.size)

    def significant(self, threshold: float) -> np.ndarray:
        """Mask of links with ``p <= 1 - threshold`` (decided on integer counts)."""
        # (1 + k) / (1 + S) <= 1 - t  <=>  1 + k <= (1 - t)(1 + S)
        return (1 + self.exceed) <= (1.0 - threshold) * (1 + self.size) * (1 + 1e-12)

    def fraction_significant(self, threshold: float) -> float:
        n = self.exceed.size
        return float(self.significant(threshold).sum()) / n if n else float("nan")

    def links(self):
        p = self.p
        for i, a1 in enumerate(self.rows):
            for j, a2 in enumerate(self.cols):
                yield a1, a2, float(self.values[i, j]), float(p[i, j])


def p_values(observed: AssistMatrix, ensemble: NullEnsemble,
             thresholds: Sequence[float] = ()) -> SignificanceResult:
    """Empirical p-values of every observed link against the ensemble."""
    if ensemble.exceed is not None and ensemble.observed is not None:
        grid = _observed_grid(observed, ensemble.rows, ensemble.cols)
        finite = np.isfinite(grid)
        if not np.array_equal(grid[finite], ensemble.observed[finite]):
            raise MatrixError("ensemble was accumulated against different observed values")
        exceed_full = ensemble.exceed
    else:
        if ensemble.samples is None or ensemble.sample_cols is not None:
            raise MatrixError("ensemble holds neither exceedance counts nor full samples")
        grid = _observed_grid(observed, ensemble.rows, ensemble.cols)
        exceed_full = np.sum(np.nan_to_num(ensemble.samples, nan=-np.inf) >= grid - TIE_ATOL, axis=0)
    rindex = {r: i for i, r in enumerate(ensemble.rows)}
    cindex = [ensemble.cols.index(c) for c in observed.cols]
    exceed = exceed_full[np.ix_([rindex[r] for r in observed.rows], cindex)]
    result = SignificanceResult(observed.source, observed.target, observed.rows, observed.cols,
                                observed.values, exceed, ensemble.size, tuple(thresholds))
    for t in thresholds:
        result.flags[t] = result.significant(t)
    return result


@dataclass(frozen=True)
class Edge:
    source_layer: str
    source_code: str
    target_layer: str
    target_code: str
    B: float
    p: float


@dataclass(frozen=True, eq=False)
class ValidatedNetwork:
    threshold: float
    edges: tuple
    degrees: dict

    def node_key(self, layer, code):
        return (str(layer), code)


def validated_network(results: Sequence[SignificanceResult], threshold: float) -> ValidatedNetwork:
    """Multilayer edge list of links with ``p <= 1 - threshold``.

    Raises :class:`EnsembleSizeError` when any result's ensemble is too
    small to resolve ``threshold``. Node degree counts incident edges
    regardless of direction.
    """
    edges = []
    degrees: dict = {}
    for res in results:
        check_resolution(threshold, res.size, strict=True)
        mask = res.significant(threshold)
        p = res.p
        sl = str(res.source.layer) if res.source else "L1"
        tl = str(res.target.layer) if res.target else "L2"
        for i, j in zip(*np.nonzero(mask)):
            edges.append(Edge(sl, res.rows[i], tl, res.cols[j], float(res.values[i, j]), float(p[i, j])))
    for e in edges:
        for key in ((e.source_layer, e.source_code), (e.target_layer, e.target_code)):
            degrees[key] = degrees.get(key, 0) + 1
    return ValidatedNetwork(threshold, tuple(edges), degrees)


def validate_pair(m1, m2, size: int, seed: int, thresholds: Sequence[float] = (), workers: int = 1,
              tol: float | None = None):
    """Observed Assist plus BiCM null for one pair of binary matrices.

    Returns ``(observed, result)``.
    """
    from .assist import align_countries, assist
    from .bicm import DEFAULT_TOL, fit_model

    a1, a2, _, _ = align_countries(m1, m2)
    observed = assist(m1, m2)
    model1 = fit_model(a1, tol or DEFAULT_TOL)
    model2 = fit_model(a2, tol or DEFAULT_TOL)
    ens = null_assist_ensemble(model1, model2, size, seed, observed=observed, thresholds=thresholds,
                               workers=workers, source=observed.source, target=observed.target)
    return observed, p_values(observed, ens, thresholds)


