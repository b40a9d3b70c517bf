"""Synthetic multilayer data with planted ground truth.

Countries hold hidden capability endowments that drift from year to year.
Each activity requires a set of capabilities, and a country is active in
it when its endowment covers the set. Every planted group shares one
requirement set between one activity in each layer, so those activities
co-occur across layers; layers read the endowment with per-layer delays,
which turns the co-occurrence into a time-lagged one.
"""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bicm import FREE, BicmModel
from .core import BinaryMatrix, LayerId, RawMatrix, TimeWindow
from .rng import substream
from .store import MatrixStore


@dataclass(frozen=True)
class CapabilityWorld:
    countries: int = 30
    capabilities: int = 100
    activities: tuple = (20, 20, 20)
    layers: tuple = ("S", "T", "P")
    planted: int = 15
    lag: int = 3
    noise: float = 0.05
    first_year: int = 2000
    n_years: int = 15
    requirement_size: int = 2
    #: range of per-country probabilities of holding each capability
    richness: tuple = (0.4, 0.8)
    #: yearly probability that a country redraws each capability
    churn: float = 0.3
    #: fraction of an activity's requirements a country must hold (1.0 = all-of)
    coverage: float = 1.0
    #: per-layer delays; default is 0 for the first layer and ``lag`` for the rest
    delays: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "activities", tuple(int(a) for a in self.activities))
        object.__setattr__(self, "layers", tuple(str(l) for l in self.layers))
        if len(self.activities) != len(self.layers):
            raise ValueError("need one activity count per layer")
        if self.planted > min(self.activities):
            raise ValueError("more planted groups than activities in some layer")
        if not 0 <= self.noise <= 1:
            raise ValueError("noise must lie in [0, 1]")
        if self.requirement_size < 1 or self.requirement_size > self.capabilities:
            raise ValueError("requirement_size must lie in [1, capabilities]")
        if self.delays is None:
            object.__setattr__(self, "delays", (0,) + (self.lag,) * (len(self.layers) - 1))
        object.__setattr__(self, "delays", tuple(int(d) for d in self.delays))
        if len(self.delays) != len(self.layers):
            raise ValueError("need one delay per layer")

    @property
    def years(self) -> range:
        return range(self.first_year, self.first_year + self.n_years)


@dataclass(frozen=True)
class PlantedPair:
    source_layer: str
    source_code: str
    target_layer: str
    target_code: str
    lag: int


@dataclass
class SynthResult:
    world: CapabilityWorld
    seed: int
    store: MatrixStore
    planted: tuple
    requirements: dict = field(repr=False)
    binary: dict = field(repr=False, default_factory=dict)

    def planted_for(self, source_layer, target_layer) -> set:
        s, t = str(source_layer), str(target_layer)
        return {(p.source_code, p.target_code) for p in self.planted
                if p.source_layer == s and p.target_layer == t}

    def lag_for(self, source_layer, target_layer) -> int:
        i = self.world.layers.index(str(source_layer))
        j = self.world.layers.index(str(target_layer))
        return self.world.delays[j] - self.world.delays[i]


def activity_codes(layer: str, n: int) -> list[str]:
    return [f"{layer}{k:03d}" for k in range(n)]


def country_codes(n: int) -> list[str]:
    return [f"C{k:03d}" for k in range(n)]


def _requirements(world: CapabilityWorld, gen) -> dict:
    """Requirement sets; planted groups share one set across layers.

    Sets are drawn disjoint while the capability pool lasts, then at
    random; non-planted cross-layer pairs never share a full set.
    """
    r = world.requirement_size
    n_sets = world.planted + sum(a - world.planted for a in world.activities)
    pool = list(gen.permutation(world.capabilities))
    for attempt in range(1000):
        sets = []
        for k in range(n_sets):
            if len(pool) >= r:
                sets.append(frozenset(int(c) for c in pool[:r]))
                pool = pool[r:]
            else:
                sets.append(frozenset(int(c) for c in gen.choice(world.capabilities, r, replace=False)))
        planted_sets = sets[:world.planted]
        rest = iter(sets[world.planted:])
        req = {}
        for layer, n in zip(world.layers, world.activities):
            codes = activity_codes(layer, n)
            for k, code in enumerate(codes):
                req[(layer, code)] = planted_sets[k] if k < world.planted else next(rest)
        if _planted_overlap_is_strict(world, req):
            return req
        pool = list(gen.permutation(world.capabilities))
    raise RuntimeError("could not draw requirement sets with strict planted overlap")


def _planted_overlap_is_strict(world, req) -> bool:
    planted_min = world.requirement_size
    for (l1, n1), (l2, n2) in itertools.combinations(zip(world.layers, world.activities), 2):
        for k1, c1 in enumerate(activity_codes(l1, n1)):
            for k2, c2 in enumerate(activity_codes(l2, n2)):
                if k1 == k2 and k1 < world.planted:
                    continue
                if len(req[(l1, c1)] & req[(l2, c2)]) >= planted_min:
                    return False
    return True


def _endowments(world: CapabilityWorld, gen) -> tuple[dict, np.ndarray]:
    lo, hi = world.richness
    richness = gen.uniform(lo, hi, world.countries)
    start = world.first_year - max(world.delays)
    E = gen.random((world.countries, world.capabilities)) < richness[:, None]
    out = {start: E}
    for y in range(start + 1, world.first_year + world.n_years):
        redraw = gen.random(E.shape) < world.churn
        fresh = gen.random(E.shape) < richness[:, None]
        E = np.where(redraw, fresh, E)
        out[y] = E
    return out, richness


def generate(world: CapabilityWorld, seed: int, out_dir=None) -> SynthResult:
    """Generate raw matrices (unit weights) for every layer and year.

    With ``out_dir`` the store files, ``planted_pairs.csv`` and
    ``world.json`` are written there.
    """
    req = _requirements(world, substream(seed, "requirements"))
    endow, _ = _endowments(world, substream(seed, "endowments"))
    countries = country_codes(world.countries)
    store = MatrixStore(out_dir)
    binary = {}
    for li, (layer, n) in enumerate(zip(world.layers, world.activities)):
        codes = activity_codes(layer, n)
        R = np.zeros((world.capabilities, n))
        for k, code in enumerate(codes):
            R[list(req[(layer, code)]), k] = 1.0
        need = R.sum(axis=0)
        for y in world.years:
            E = endow[y - world.delays[li]].astype(np.float64)
            covered = (E @ R) >= world.coverage * need - 1e-9
            flips = substream(seed, "noise", layer, y).random(covered.shape) < world.noise
            M = covered ^ flips
            binary[(layer, y)] = M
            raw = RawMatrix.from_dense(LayerId.parse(layer), TimeWindow(y), M.astype(np.float64),
                                       rows=countries, cols=codes)
            store.put(raw, persist=out_dir is not None)
    planted = []
    for i, j in itertools.permutations(range(len(world.layers)), 2):
        li, lj = world.layers[i], world.layers[j]
        lag = world.delays[j] - world.delays[i]
        ci, cj = activity_codes(li, world.activities[i]), activity_codes(lj, world.activities[j])
        for k in range(world.planted):
            planted.append(PlantedPair(li, ci[k], lj, cj[k], lag))
    result = SynthResult(world, seed, store, tuple(planted), req, binary)
    if out_dir is not None:
        write_truth(result, out_dir)
    return result


def write_truth(result: SynthResult, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "planted_pairs.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source_layer", "source_code", "target_layer", "target_code", "lag"])
        for p in result.planted:
            w.writerow([p.source_layer, p.source_code, p.target_layer, p.target_code, p.lag])
    with open(out / "world.json", "w") as fh:
        json.dump({"seed": result.seed, "world": asdict(result.world)}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_planted(path) -> list[PlantedPair]:
    with open(path, newline="") as fh:
        return [PlantedPair(r["source_layer"], r["source_code"], r["target_layer"], r["target_code"],
                            int(r["lag"])) for r in csv.DictReader(fh)]


def generate_null(countries: int = 40, activities=(25, 25), layers=("S", "T"), first_year: int = 2000,
                  n_years: int = 6, seed: int = 0, mean_count: float = 4.0, spread: float = 0.6,
                  out_dir=None) -> MatrixStore:
    """Layers with no cross-layer structure at all.

    Counts are Poisson with a product-form intensity (lognormal country and
    activity sizes), drawn independently per layer and year, so after RCA
    binarization the only regularity left is degree heterogeneity.
    """
    store = MatrixStore(out_dir)
    rows = country_codes(countries)
    for layer, n in zip(layers, activities):
        gen = substream(seed, "null-sizes", layer)
        x = gen.lognormal(0.0, spread, countries)
        a = gen.lognormal(0.0, spread, n)
        lam = mean_count * np.outer(x / x.mean(), a / a.mean())
        for y in range(first_year, first_year + n_years):
            W = substream(seed, "null-counts", layer, y).poisson(lam).astype(np.float64)
            raw = RawMatrix.from_dense(LayerId.parse(layer), TimeWindow(y), W, rows=rows,
                                       cols=activity_codes(layer, n))
            store.put(raw, persist=out_dir is not None)
    return store


class SelfNullStore:
    """Binary layers drawn from known BiCMs, for null-calibration runs.

    Each layer has a fixed product-form probability matrix; every year is
    an independent draw from it. The store answers ``binary`` queries
    directly (no RCA step) and exposes the generating model through
    ``null_model``, so significance is assessed against the exact null the
    observations came from.
    """

    def __init__(self, countries: int = 80, activities=(40, 40), layers=("S", "T"), first_year: int = 2000,
                 n_years: int = 12, seed: int = 0, density: float = 0.3, spread: float = 0.8):
        self.rows = tuple(country_codes(countries))
        self.first_year = first_year
        self.n_years = n_years
        self.seed = seed
        self.models = {}
        self._cache = {}
        base = np.log(density / (1 - density))
        for layer, n in zip(layers, activities):
            layer_id = LayerId.parse(layer)
            gen = substream(seed, "self-null-model", layer_id.name)
            x = gen.normal(base / 2, spread, countries)
            y = gen.normal(base / 2, spread, n)
            self.models[layer_id] = BicmModel(self.rows, tuple(activity_codes(layer_id.name, n)), np.exp(x),
                                              np.exp(y), np.full(countries, FREE), np.full(n, FREE),
                                              layer=layer_id)

    def layers(self) -> list:
        return list(self.models)

    def years(self, layer) -> list[int]:
        return list(range(self.first_year, self.first_year + self.n_years)) \
            if LayerId.parse(layer) in self.models else []

    def binary(self, layer, window: TimeWindow, level=None) -> BinaryMatrix:
        layer = LayerId.parse(layer)
        if window.span != 1:
            raise ValueError("self-null store holds single-year windows only")
        key = (layer, window.start_year)
        if key not in self._cache:
            model = self.models[layer]
            M = model.draw(substream(self.seed, "self-null-draw", layer.name, window.start_year))
            self._cache[key] = BinaryMatrix.from_dense(layer, window, M, rows=model.rows, cols=model.cols)
        return self._cache[key]

    def null_model(self, m: BinaryMatrix) -> BicmModel:
        model = self.models[m.layer]
        if tuple(m.rows) != model.rows or tuple(m.cols) != model.cols:
            raise ValueError("matrix does not match the generating model's labels")
        return model
