import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from milpgen import _pykernels, kernels
from milpgen.generators import gen_mis, gen_setcover
from milpgen.milp import to_bipartite

compiled = pytest.importorskip("milpgen._ckernels")


@st.composite
def bipartite_edges(draw):
    m = draw(st.integers(1, 12))
    n = draw(st.integers(1, 12))
    cells = draw(st.sets(st.tuples(st.integers(0, m - 1), st.integers(0, n - 1)), max_size=m * n))
    cells = sorted(cells)
    ci = np.array([c[0] for c in cells], dtype=np.int64)
    vi = np.array([c[1] for c in cells], dtype=np.int64)
    return m, n, ci, vi


@settings(max_examples=200)
@given(bipartite_edges())
def test_backends_bit_identical(case):
    m, n, ci, vi = case
    assert np.array_equal(_pykernels.bipartite_clustering(m, n, ci, vi),
                          compiled.bipartite_clustering(m, n, ci, vi))
    assert np.array_equal(_pykernels.greedy_modularity(m + n, ci, vi + m),
                          compiled.greedy_modularity(m + n, ci, vi + m))


@pytest.mark.parametrize("inst", [gen_mis(200, 4, seed=1),
                                  gen_mis(150, 6, seed=2, graph="barabasi_albert", formulation="clique"),
                                  gen_setcover(60, 120, 0.05, seed=3)], ids=["mis", "mis-ba", "setcover"])
def test_backends_identical_on_families(inst):
    g = to_bipartite(inst)
    ci, vi = g.edge_index
    assert np.array_equal(_pykernels.bipartite_clustering(g.m, g.n, ci, vi),
                          compiled.bipartite_clustering(g.m, g.n, ci, vi))
    assert np.array_equal(_pykernels.greedy_modularity(g.m + g.n, ci, vi + g.m),
                          compiled.greedy_modularity(g.m + g.n, ci, vi + g.m))


def test_edge_order_irrelevant(rng):
    g = to_bipartite(gen_mis(80, 4, seed=4))
    ci, vi = g.edge_index
    p = rng.permutation(ci.size)
    for impl in (_pykernels, compiled):
        assert np.array_equal(impl.greedy_modularity(g.m + g.n, ci, vi + g.m),
                              impl.greedy_modularity(g.m + g.n, ci[p], vi[p] + g.m))


def test_exact_tie_uses_index_rule():
    # after the first merges three candidate merges gain the same; the smallest pair wins
    edges = [(1, 9), (2, 8), (2, 11), (4, 9), (4, 10), (4, 11), (5, 10), (6, 8), (6, 9), (6, 10)]
    u, v = np.array(edges).T
    for impl in (_pykernels, compiled):
        assert impl.greedy_modularity(12, u, v).tolist() == [0, 1, 2, 3, 4, 5, 1, 7, 2, 1, 5, 4]


def _backend(env_value):
    env = dict(os.environ)
    env.pop("MILPGEN_PURE", None)
    if env_value is not None:
        env["MILPGEN_PURE"] = env_value
    out = subprocess.run([sys.executable, "-c", "import milpgen.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    return out.stdout.strip()


def test_backend_selection():
    assert _backend(None) == "compiled"
    assert _backend("1") == "python"
    assert kernels.BACKEND in ("compiled", "python")
