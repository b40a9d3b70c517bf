"""Config-driven batch runs with a provenance manifest.

A run reads (or generates) a matrix store, then executes its task list in
order. Every file written is listed in ``manifest.json`` with its SHA-256
together with the resolved configuration. The manifest holds no
timestamps, so identical inputs, config and seed give identical bytes.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import export
from .assist import assist_lagged
from .core import Hierarchy, LayerId, Pooling, TimeWindow
from .errors import ConfigError, InnospaceError, PipelineError
from .ingest import IngestReport, fractional_count_by_year, load_table, read_attributions
from .rng import derive_seed
from .significance import check_resolution, validate_pair, validated_network
from .store import MatrixStore

log = logging.getLogger(__name__)

TASK_KINDS = ("binarize", "assist", "validate", "signal", "export", "profile")
DEFAULTS = {"pool": 1, "pooling": "sum", "threshold": 0.99, "ensemble": 1000, "workers": 1}
MANIFEST = "manifest.json"


def parse_side(text: str, need_year: bool = True):
    """Parse ``layer:year:level`` (or ``layer:level`` without a year).

    An empty or missing level means the finest level present.
    """
    parts = str(text).split(":")
    n = 3 if need_year else 2
    if not 1 <= len(parts) <= n or (need_year and len(parts) < 2):
        form = "layer:year[:level]" if need_year else "layer[:level]"
        raise ConfigError(f"cannot parse {text!r}; expected {form}")
    try:
        layer = LayerId.parse(parts[0])
        year = int(parts[1]) if need_year else None
        rest = parts[2:] if need_year else parts[1:]
        level = int(rest[0]) if rest and rest[0] != "" else None
    except ValueError as exc:
        raise ConfigError(f"cannot parse {text!r}: {exc}") from None
    return (layer, year, level) if need_year else (layer, level)


def _hierarchies(spec: dict, base: Path) -> dict:
    out = {}
    for name, h in (spec or {}).items():
        layer = LayerId.parse(name)
        if "parents" in h:
            out[layer] = Hierarchy.from_parent_file(base / h["parents"])
        else:
            out[layer] = Hierarchy(prefix_lengths=h.get("prefix_lengths"))
    return out


@dataclass
class PipelineConfig:
    """Resolved run configuration.

    ``raw`` keeps the document as loaded (with CLI overrides applied) and
    is embedded verbatim in the manifest.
    """

    raw: dict
    base: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, data: dict | None, base=None) -> "PipelineConfig":
        cfg = cls(copy.deepcopy(data or {}), Path(base) if base is not None else Path.cwd())
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path, overrides: dict | None = None, default_output_dir=None) -> "PipelineConfig":
        path = Path(path)
        try:
            data = yaml.safe_load(path.read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must be a mapping at the top level")
        for k, v in (overrides or {}).items():
            if v is not None:
                data[k] = v
        if default_output_dir is not None:
            data.setdefault("output_dir", default_output_dir)
        return cls.from_dict(data, path.parent)

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 0))

    @property
    def output_dir(self) -> Path:
        out = self.raw.get("output_dir")
        if out is None:
            raise ConfigError("config has no output_dir")
        return self.base / out

    @property
    def defaults(self) -> dict:
        d = dict(DEFAULTS)
        d.update(self.raw.get("defaults") or {})
        return d

    def tasks(self) -> list[dict]:
        out = []
        for i, t in enumerate(self.raw.get("tasks") or []):
            t = dict(t)
            t.setdefault("name", f"{t.get('kind')}_{i}")
            out.append(t)
        return out

    def validate(self):
        known = {"seed", "output_dir", "store", "hierarchies", "synth", "layers", "defaults", "tasks"}
        extra = set(self.raw) - known
        if extra:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(extra))}")
        if "output_dir" not in self.raw:
            raise ConfigError("config has no output_dir")
        sources = [k for k in ("store", "synth") if self.raw.get(k) is not None]
        if len(sources) > 1 or (sources == ["store"] and self.raw.get("layers")):
            raise ConfigError("use exactly one of store, synth or layers as the data source "
                              "(synth may be combined with layers)")
        if "store" in self.raw and not (self.base / self.raw["store"]).is_dir():
            raise ConfigError(f"store directory {self.raw['store']!r} does not exist")
        for spec in self.raw.get("layers") or []:
            for key in ("input", "attribution"):
                if spec.get(key) and not (self.base / spec[key]).is_file():
                    raise ConfigError(f"layer {spec.get('name')!r}: {key} file {spec[key]!r} does not exist")
        for name, h in (self.raw.get("hierarchies") or {}).items():
            if "parents" in h and not (self.base / h["parents"]).is_file():
                raise ConfigError(f"hierarchy file for {name!r} does not exist")
        d = self.defaults
        names = set()
        for t in self.tasks():
            if t.get("kind") not in TASK_KINDS:
                raise ConfigError(f"task {t['name']!r}: kind must be one of {', '.join(TASK_KINDS)}")
            if t["name"] in names:
                raise ConfigError(f"duplicate task name {t['name']!r}")
            names.add(t["name"])
            threshold = float(t.get("threshold", d["threshold"]))
            if not 0 < threshold < 1:
                raise ConfigError(f"task {t['name']!r}: threshold must lie in (0, 1)")
            if t["kind"] in ("validate", "signal", "profile"):
                try:
                    check_resolution(threshold, int(t.get("ensemble", d["ensemble"])), strict=True)
                except InnospaceError as exc:
                    raise ConfigError(f"task {t['name']!r}: {exc}") from None


@dataclass
class Manifest:
    config: dict
    outputs: list = field(default_factory=list)
    status: str = "ok"
    error: dict | None = None
    ingest: dict = field(default_factory=dict)

    def add(self, root: Path, path: Path, stage: str):
        data = Path(path).read_bytes()
        self.outputs.append({"path": Path(path).relative_to(root).as_posix(), "stage": stage,
                             "sha256": hashlib.sha256(data).hexdigest(), "stale": False})

    def to_dict(self) -> dict:
        d = {"config": self.config, "status": self.status,
             "outputs": sorted(self.outputs, key=lambda o: o["path"])}
        if self.ingest:
            d["ingest"] = self.ingest
        if self.error is not None:
            d["error"] = self.error
        return d

    def write(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def _window(task, defaults, year):
    return TimeWindow(int(year), int(task.get("pool", defaults["pool"])),
                      Pooling.parse(task.get("pooling", defaults["pooling"])))


class _Run:
    def __init__(self, config: PipelineConfig):
        self.config = config
        self.out = config.output_dir
        self.defaults = config.defaults
        self.manifest = Manifest(copy.deepcopy(config.raw))
        self.results: dict = {}
        self.store = None

    def emit(self, path: Path, stage: str):
        self.manifest.add(self.out, path, stage)

    def build_store(self):
        cfg = self.config
        hier = _hierarchies(cfg.raw.get("hierarchies"), cfg.base)
        if cfg.raw.get("synth") is not None:
            from .synth import CapabilityWorld, generate

            store_dir = self.out / "store"
            world = CapabilityWorld(**cfg.raw["synth"])
            generate(world, derive_seed(cfg.seed, "synth"), store_dir)
            for p in sorted(store_dir.iterdir()):
                self.emit(p, "synth")
            self.store = MatrixStore(store_dir, hier)
        elif cfg.raw.get("store") is not None:
            self.store = MatrixStore(cfg.base / cfg.raw["store"], hier)
        else:
            self.store = MatrixStore(self.out / "store", hier)
        if cfg.raw.get("layers"):
            report = IngestReport()
            target = self.store
            for spec in cfg.raw["layers"]:
                layer = LayerId.parse(spec["name"])
                mats = {}
                if spec.get("input"):
                    for raw in load_table(cfg.base / spec["input"], layer, report):
                        mats[raw.window.start_year] = raw
                if spec.get("attribution"):
                    recs = read_attributions(cfg.base / spec["attribution"], report)
                    for year, raw in fractional_count_by_year(recs, layer, report).items():
                        if year in mats:
                            raise ConfigError(f"layer {layer}: year {year} present in both input and attribution")
                        mats[year] = raw
                for year in sorted(mats):
                    target.put(mats[year])
                    self.emit(target.path_for(layer, year), "ingest")
            self.manifest.ingest = report.to_dict()

    def binarize(self, t):
        layer = LayerId.parse(t["layer"])
        m = self.store.binary(layer, _window(t, self.defaults, t["year"]), t.get("level"))
        path = self.out / f"{t['name']}.csv"
        export.write_binary(m, path)
        self.emit(path, t["name"])

    def assist(self, t):
        L1, y1, l1 = parse_side(t["from"])
        L2, y2, l2 = parse_side(t["to"])
        pool = int(t.get("pool", self.defaults["pool"]))
        B = assist_lagged(self.store, L1, L2, y1, y2, l1, l2, t.get("pooling", self.defaults["pooling"]), pool)
        path = self.out / f"{t['name']}.csv"
        export.write_assist(B, path)
        self.emit(path, t["name"])

    def validate(self, t):
        L1, y1, l1 = parse_side(t["from"])
        L2, y2, l2 = parse_side(t["to"])
        threshold = float(t.get("threshold", self.defaults["threshold"]))
        size = int(t.get("ensemble", self.defaults["ensemble"]))
        m1 = self.store.binary(L1, _window(t, self.defaults, y1), l1)
        m2 = self.store.binary(L2, _window(t, self.defaults, y2), l2)
        seed = derive_seed(self.config.seed, "validate", t["name"])
        _, res = validate_pair(m1, m2, size, seed, (threshold,), int(t.get("workers", self.defaults["workers"])))
        self.results[t["name"]] = res
        path = self.out / f"{t['name']}.csv"
        export.write_edges(export.result_rows(res, threshold), path)
        self.emit(path, t["name"])

    def signal(self, t):
        from .signal import SignalConfig, parse_lags, phi_curve

        L1, l1 = parse_side(t["from"], need_year=False)
        L2, l2 = parse_side(t["to"], need_year=False)
        cfg = SignalConfig(threshold=float(t.get("threshold", self.defaults["threshold"])),
                           ensemble=int(t.get("ensemble", self.defaults["ensemble"])),
                           pool=int(t.get("pool", 3)), pooling=t.get("pooling", self.defaults["pooling"]),
                           level1=l1, level2=l2, seed=derive_seed(self.config.seed, "signal", t["name"]),
                           workers=int(t.get("workers", self.defaults["workers"])))
        curve = phi_curve(self.store, L1, L2, parse_lags(str(t.get("lags", "0..5"))), cfg)
        path = self.out / f"{t['name']}.csv"
        export.write_curve(curve, path)
        self.emit(path, t["name"])

    def export(self, t):
        names = t.get("inputs") or [n for n in self.results]
        missing = [n for n in names if n not in self.results]
        if missing:
            raise ConfigError(f"export inputs are not earlier validate tasks: {', '.join(missing)}")
        threshold = float(t.get("threshold", self.defaults["threshold"]))
        network = validated_network([self.results[n] for n in names], threshold)
        fmt = export.format_for("x", t.get("format", "graphml"))
        suffix = {"csv": ".csv", "graphml": ".graphml", "dot": ".dot"}[fmt]
        path = self.out / f"{t['name']}{suffix}"
        export.export_graph(network, path, fmt)
        self.emit(path, t["name"])

    def profile(self, t):
        from .profile import profile_target

        target, ty, tl = parse_side(t["target"])
        code = t["code"]
        source = LayerId.parse(t["source"])
        sy = int(t.get("source_year", ty))
        table = profile_target(self.store, target, code, source, _window(t, self.defaults, ty),
                               _window(t, self.defaults, sy), levels=t.get("levels", [None]), target_level=tl,
                               ensemble=int(t.get("ensemble", self.defaults["ensemble"])),
                               seed=derive_seed(self.config.seed, "profile", t["name"]),
                               threshold=float(t.get("threshold", 0.95)), drill=t.get("drill"),
                               drill_level=t.get("drill_level"))
        path = self.out / f"{t['name']}.csv"
        export.write_profile(table, path)
        self.emit(path, t["name"])


def run_pipeline(config: PipelineConfig) -> dict:
    """Run every configured stage and write ``manifest.json``.

    A failing stage stops the run: files already written are kept but
    marked stale, the manifest records the failing stage, and a
    :class:`PipelineError` naming the stage is raised.
    """
    run = _Run(config)
    run.out.mkdir(parents=True, exist_ok=True)
    stage = "store"
    try:
        if config.raw.get("synth") is not None or config.raw.get("layers") or config.tasks():
            run.build_store()
        for t in config.tasks():
            stage = t["name"]
            log.info("running %s (%s)", stage, t["kind"])
            getattr(run, t["kind"])(t)
    except Exception as exc:
        for o in run.manifest.outputs:
            o["stale"] = True
        err = PipelineError(stage, exc)
        run.manifest.status = "failed"
        run.manifest.error = err.to_dict()
        run.manifest.write(run.out / MANIFEST)
        raise err from exc
    run.manifest.write(run.out / MANIFEST)
    return run.manifest.to_dict()
