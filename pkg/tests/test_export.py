import xml.etree.ElementTree as ET

import networkx as nx
import pydot
import pytest

from innospace.errors import ConfigError
from innospace.export import (EDGE_COLUMNS, GRAPHML_NS, export_graph, format_for, read_edges,
                              result_rows, write_edges)
from innospace.significance import Edge, validated_network

TOY = [Edge("S", "s1", "T", "t1", 0.5, 0.001), Edge("S", "s1", "P", "p1", 0.25, 0.002)]


def test_graphml_hand_checkable(tmp_path):
    path = export_graph(TOY, tmp_path / "g.graphml")
    root = ET.parse(path).getroot()
    ns = {"g": GRAPHML_NS}
    nodes = root.findall("g:graph/g:node", ns)
    edges = root.findall("g:graph/g:edge", ns)
    assert sorted(n.get("id") for n in nodes) == ["P:p1", "S:s1", "T:t1"]
    assert len(edges) == 2
    deg = {n.get("id"): n.find("g:data[@key='degree']", ns).text for n in nodes}
    assert deg == {"S:s1": "2", "T:t1": "1", "P:p1": "1"}
    g = nx.read_graphml(path)
    assert g.nodes["S:s1"]["layer"] == "S" and g.nodes["S:s1"]["degree"] == 2
    assert g.edges["S:s1", "T:t1"]["B"] == 0.5 and g.edges["S:s1", "T:t1"]["p"] == 0.001


def test_dot_parses(tmp_path):
    path = export_graph(TOY, tmp_path / "g.dot")
    (graph,) = pydot.graph_from_dot_file(str(path))
    names = {n.get_name().strip('"') for n in graph.get_nodes()}
    assert {"S:s1", "T:t1", "P:p1"} <= names
    assert len(graph.get_edges()) == 2
    node = graph.get_node('"S:s1"')[0]
    assert node.get("degree") == "2" and node.get("layer").strip('"') == "S"


@pytest.mark.parametrize("fmt", ["csv", "graphml", "dot"])
def test_empty_graph(tmp_path, fmt):
    path = export_graph([], tmp_path / f"empty.{fmt}", fmt)
    if fmt == "graphml":
        assert nx.read_graphml(path).number_of_nodes() == 0
    elif fmt == "dot":
        (graph,) = pydot.graph_from_dot_file(str(path))
        assert not graph.get_edges()
    else:
        assert path.read_text().strip() == ",".join(EDGE_COLUMNS)


def test_unknown_format(tmp_path):
    with pytest.raises(ConfigError, match="csv, graphml, dot"):
        export_graph(TOY, tmp_path / "g.json", "json")
    with pytest.raises(ConfigError, match="supported formats"):
        format_for(tmp_path / "g.png")


def test_edge_csv_round_trip(tmp_path):
    export_graph(TOY, tmp_path / "e.csv")
    assert read_edges(tmp_path / "e.csv") == TOY


def test_synth_network_degrees(tmp_path):
    from innospace.core import TimeWindow
    from innospace.significance import validate_pair
    from innospace.synth import CapabilityWorld, generate

    res = generate(CapabilityWorld(n_years=6), seed=1)
    results = []
    for L1, L2 in (("S", "T"), ("T", "P")):
        lag = res.lag_for(L1, L2)
        m1 = res.store.binary(L1, TimeWindow(2000, 3, "stack"))
        m2 = res.store.binary(L2, TimeWindow(2000 + lag, 3, "stack"))
        results.append(validate_pair(m1, m2, 99, 3)[1])
    net = validated_network(results, 0.99)
    assert net.edges
    path = export_graph(net, tmp_path / "net.graphml")
    g = nx.read_graphml(path)
    # degree recount from the edge list in the file
    recount = {n: 0 for n in g.nodes}
    for a, b in g.edges():
        recount[a] += 1
        recount[b] += 1
    assert all(g.nodes[n]["degree"] == recount[n] for n in g.nodes)
    assert {f"{l}:{c}": k for (l, c), k in net.degrees.items()} == recount
    rows = list(result_rows(results[0], 0.99))
    write_edges(rows, tmp_path / "all.csv")
    assert len(read_edges(tmp_path / "all.csv", significant_only=False)) == results[0].exceed.size
