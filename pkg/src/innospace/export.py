"""Edge-list, GraphML and DOT export plus the tabular writers."""

from __future__ import annotations

import csv
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigError
from .significance import Edge, SignificanceResult, ValidatedNetwork

FORMATS = ("csv", "graphml", "dot")
_SUFFIX = {".csv": "csv", ".graphml": "graphml", ".xml": "graphml", ".dot": "dot", ".gv": "dot"}

EDGE_COLUMNS = ["source_layer", "source_code", "target_layer", "target_code", "B", "p", "significant"]
CURVE_COLUMNS = ["dy", "phi_mean", "phi_sigma", "n_pairs", "n_links_mean"]
GRAPHML_NS = "http://graphml.graphdrawing.org/xmlns"


def _num(x: float) -> str:
    return repr(float(x))


def format_for(path, fmt: str | None = None) -> str:
    """Resolve an export format from ``fmt`` or the file suffix."""
    if fmt is None:
        fmt = _SUFFIX.get(Path(path).suffix.lower())
        if fmt is None:
            raise ConfigError(f"cannot infer graph format from {str(path)!r}; "
                              f"supported formats: {', '.join(FORMATS)}")
    fmt = fmt.lower()
    if fmt == "edges":
        fmt = "csv"
    if fmt not in FORMATS:
        raise ConfigError(f"unknown graph format {fmt!r}; supported formats: {', '.join(FORMATS)}")
    return fmt


def node_degrees(edges: Iterable[Edge]) -> dict:
    deg: dict = {}
    for e in edges:
        for key in ((e.source_layer, e.source_code), (e.target_layer, e.target_code)):
            deg[key] = deg.get(key, 0) + 1
    return deg


def _nodes(edges: Sequence[Edge]) -> list:
    return sorted(node_degrees(edges))


def _node_id(layer, code) -> str:
    return f"{layer}:{code}"


def write_edges(rows: Iterable, path):
    """Write ``(source_layer, source_code, target_layer, target_code, B, p, significant)`` rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EDGE_COLUMNS)
        for sl, sc, tl, tc, B, p, sig in rows:
            w.writerow([sl, sc, tl, tc, _num(B), _num(p), int(bool(sig))])


def result_rows(result: SignificanceResult, threshold: float, only_significant: bool = False):
    """Edge-table rows for every link of one significance result."""
    sig = result.significant(threshold)
    p = result.p
    sl = str(result.source.layer) if result.source else "L1"
    tl = str(result.target.layer) if result.target else "L2"
    for i, a1 in enumerate(result.rows):
        for j, a2 in enumerate(result.cols):
            if only_significant and not sig[i, j]:
                continue
            yield sl, a1, tl, a2, result.values[i, j], p[i, j], sig[i, j]


def read_edges(path, significant_only: bool = True) -> list[Edge]:
    out = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            if significant_only and r.get("significant", "1") not in ("1", "True", "true"):
                continue
            out.append(Edge(r["source_layer"], r["source_code"], r["target_layer"], r["target_code"],
                            float(r["B"]), float(r["p"])))
    return out


def graphml_document(edges: Sequence[Edge]) -> ET.ElementTree:
    ET.register_namespace("", GRAPHML_NS)
    q = lambda tag: f"{{{GRAPHML_NS}}}{tag}"
    root = ET.Element(q("graphml"))
    keys = [("layer", "node", "string"), ("code", "node", "string"), ("degree", "node", "int"),
            ("B", "edge", "double"), ("p", "edge", "double")]
    for name, domain, typ in keys:
        ET.SubElement(root, q("key"), {"id": name, "for": domain, "attr.name": name, "attr.type": typ})
    graph = ET.SubElement(root, q("graph"), {"id": "G", "edgedefault": "directed"})
    deg = node_degrees(edges)
    for layer, code in _nodes(edges):
        node = ET.SubElement(graph, q("node"), {"id": _node_id(layer, code)})
        for k, v in (("layer", layer), ("code", code), ("degree", str(deg[(layer, code)]))):
            ET.SubElement(node, q("data"), {"key": k}).text = v
    for k, e in enumerate(edges):
        edge = ET.SubElement(graph, q("edge"), {"id": f"e{k}", "source": _node_id(e.source_layer, e.source_code),
                                                "target": _node_id(e.target_layer, e.target_code)})
        ET.SubElement(edge, q("data"), {"key": "B"}).text = _num(e.B)
        ET.SubElement(edge, q("data"), {"key": "p"}).text = _num(e.p)
    ET.indent(root)
    return ET.ElementTree(root)


def _dot_quote(s: str) -> str:
    return '"' + str(s).replace("\\", "\\\\").replace('"', '\\"') + '"'


def dot_text(edges: Sequence[Edge]) -> str:
    deg = node_degrees(edges)
    lines = ["digraph multilayer {"]
    for layer, code in _nodes(edges):
        lines.append(f"  {_dot_quote(_node_id(layer, code))} [layer={_dot_quote(layer)}, "
                     f"code={_dot_quote(code)}, degree={deg[(layer, code)]}];")
    for e in edges:
        lines.append(f"  {_dot_quote(_node_id(e.source_layer, e.source_code))} -> "
                     f"{_dot_quote(_node_id(e.target_layer, e.target_code))} "
                     f"[B={_dot_quote(_num(e.B))}, p={_dot_quote(_num(e.p))}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_graph(network: "ValidatedNetwork | Sequence[Edge]", path, fmt: str | None = None) -> Path:
    """Write a validated multilayer network as an edge CSV, GraphML or DOT file.

    Nodes are ``layer:code`` with ``layer`` and ``degree`` attributes;
    edges carry ``B`` and ``p``.
    """
    fmt = format_for(path, fmt)
    edges = list(network.edges if isinstance(network, ValidatedNetwork) else network)
    path = Path(path)
    if fmt == "csv":
        write_edges(((e.source_layer, e.source_code, e.target_layer, e.target_code, e.B, e.p, True)
                     for e in edges), path)
    elif fmt == "graphml":
        graphml_document(edges).write(path, encoding="utf-8", xml_declaration=True)
        with open(path, "a") as fh:
            fh.write("\n")
    else:
        path.write_text(dot_text(edges))
    return path


def write_curve(curve, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for r in curve.rows():
            w.writerow([r["dy"], _num(r["phi_mean"]), _num(r["phi_sigma"]), r["n_pairs"], _num(r["n_links_mean"])])


def write_assist(B, path, nonzero: bool = True):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source_code", "target_code", "value"])
        for a1, a2, v in B.edges(nonzero=nonzero):
            w.writerow([a1, a2, _num(v)])


def write_profile(table, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level", "source_code", "B", "null_q95", "p", "significant", "status"])
        for r in table.rows:
            w.writerow([r.level if r.level is not None else "", r.source_code, _num(r.B), _num(r.null_q95),
                        _num(r.p), int(r.significant), r.status])


def write_binary(m, path):
    """Write the ones of a binary matrix as ``country,code,year,value`` records."""
    year = m.window.start_year
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["country", "code", "year", "value"])
        for c, a in m.pairs():
            w.writerow([c, a, year, 1])
