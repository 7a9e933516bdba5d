# conftest.py
import os

import numpy as np
import pandas as pd
import pytest

from geograph import GeoNode, RawEdge, build_graph
from pointpattern import pattern_from_arrays


def pytest_addoption(parser):
    parser.addoption(
        "--update-golden",
        action="store_true",
        default=False,
        help="rewrite the golden output files under data/golden from the current run",
    )


# ---- Graph factories ----
def grid(nx_: int, ny: int, spacing: float = 1.0, directed: bool = False):
    """
    nx_ x ny lattice, node id = row * nx_ + col + 1. Directed grids point
    right and up, so the top-right corner has no out-edges.
    """
    nodes = [GeoNode(r * nx_ + c + 1, c * spacing, r * spacing) for r in range(ny) for c in range(nx_)]
    edges = []
    e = 0
    for r in range(ny):
        for c in range(nx_):
            v = r * nx_ + c + 1
            if c < nx_ - 1:
                e += 1
                edges.append(RawEdge(e, v, v + 1, directed))
            if r < ny - 1:
                e += 1
                edges.append(RawEdge(e, v, v + nx_, directed))
    return build_graph(nodes, edges)


def random_graph(rng: np.random.Generator, max_nodes: int = 12, allow_directed: bool = True, allow_parallel: bool = True):
    n = int(rng.integers(1, max_nodes + 1))
    cells = rng.choice(400, size=n, replace=False)
    nodes = [GeoNode(i + 1, float(cell % 20), float(cell // 20)) for i, cell in enumerate(cells)]
    edges = []
    if n >= 2:
        m = int(rng.integers(0, 2 * n + 1))
        pairs = set()
        for e in range(m):
            a, b = rng.choice(n, size=2, replace=False) + 1
            key = frozenset((int(a), int(b)))
            if key in pairs and not allow_parallel:
                continue
            pairs.add(key)
            directed = bool(allow_directed and rng.random() < 0.3)
            edges.append(RawEdge(e + 1, int(a), int(b), directed))
    return build_graph(nodes, edges)


@pytest.fixture
def path3():
    """1 - 2 - 3 along the x axis, unit spacing."""
    return build_graph(
        [GeoNode(1, 0.0, 0.0), GeoNode(2, 1.0, 0.0), GeoNode(3, 2.0, 0.0)],
        [RawEdge("a", 1, 2), RawEdge("b", 2, 3)],
    )


@pytest.fixture
def two_cliques():
    """Two K4s (nodes 1-4 and 5-8) joined by the bridge 4-5."""
    coords = [(0, 0), (1, 0), (0, 1), (1, 1), (3, 0), (4, 0), (3, 1), (4, 1)]
    nodes = [GeoNode(i + 1, float(x), float(y)) for i, (x, y) in enumerate(coords)]
    edges = []
    e = 0
    for block in ((1, 2, 3, 4), (5, 6, 7, 8)):
        for i, a in enumerate(block):
            for b in block[i + 1:]:
                e += 1
                edges.append(RawEdge(e, a, b))
    edges.append(RawEdge(e + 1, 4, 5))
    return build_graph(nodes, edges)


@pytest.fixture
def mixed_star():
    """
    Centre 1 with an undirected edge to 2, an in-edge from 3 and an out-edge
    to 4; node 5 is isolated.
    """
    return build_graph(
        [GeoNode(1, 0.0, 0.0), GeoNode(2, 2.0, 0.0), GeoNode(3, 0.0, 4.0), GeoNode(4, -1.0, 0.0), GeoNode(5, 9.0, 9.0)],
        [RawEdge(10, 1, 2), RawEdge(11, 3, 1, True), RawEdge(12, 1, 4, True)],
    )


@pytest.fixture
def events_on_path3():
    """Three events on edge a, one on edge b."""
    return pattern_from_arrays([0.2, 0.5, 0.8, 1.5], [0.0, 0.0, 0.0, 0.0])


@pytest.fixture
def write_csv(tmp_path):
    def _write(name: str, text: str) -> str:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)
    return _write


@pytest.fixture
def grid_factory():
    return grid


@pytest.fixture
def random_graph_factory():
    return random_graph


def frame_of(values: dict, ids) -> pd.DataFrame:
    return pd.DataFrame(values, index=pd.Index(list(ids), name="node_id"))


@pytest.fixture
def covariate_frame():
    return frame_of


@pytest.fixture
def data_dir():
    from config import DATA_DIR
    return DATA_DIR


@pytest.fixture
def golden(request, data_dir):
    """
    check(path, name): the file at ``path`` must equal data/golden/<name>
    byte for byte. A missing golden file (or --update-golden) records the
    current output and skips.
    """
    update = request.config.getoption("--update-golden")
    folder = os.path.join(data_dir, "golden")

    def check(path, name: str) -> None:
        with open(path, "rb") as fh:
            produced = fh.read()
        target = os.path.join(folder, name)
        if update or not os.path.exists(target):
            os.makedirs(folder, exist_ok=True)
            with open(target, "wb") as fh:
                fh.write(produced)
            pytest.skip(f"recorded golden file data/golden/{name}")
        with open(target, "rb") as fh:
            expected = fh.read()
        assert produced == expected, f"{name} differs from data/golden/{name} (rerun with --update-golden after an intended change)"

    return check
