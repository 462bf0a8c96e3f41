"""Compare the compiled and pure-Python graph kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Checks that both backends agree bit for bit, then reports the median wall
time per call and the speedup on a few corpus sizes.
"""

import argparse
import statistics
import time

import numpy as np

from milpgen import _pykernels
from milpgen.generators import gen_mis, gen_setcover
from milpgen.milp import to_bipartite

try:
    from milpgen import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _cases():
    yield "mis 100 nodes", gen_mis(100, 4.0, seed=1)
    yield "mis 500 nodes", gen_mis(500, 7.8, seed=1)
    yield "mis 500 BA clique", gen_mis(500, 7.8, seed=1, graph="barabasi_albert", formulation="clique")
    yield "setcover 250x500", gen_setcover(250, 500, 0.05, seed=1)


def _median_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return statistics.median(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled kernels unavailable; build with `pip install -e . --no-build-isolation`")
        return 1
    print(f"{'case':<22}{'kernel':<12}{'python ms':>11}{'compiled ms':>13}{'speedup':>9}")
    for name, inst in _cases():
        g = to_bipartite(inst)
        m, n = g.m, g.n
        ev, ew = g.edge_index
        uu, vv = ev, ew + m
        jobs = {
            "clustering": (lambda k: k.bipartite_clustering(m, n, ev, ew)),
            "modularity": (lambda k: k.greedy_modularity(m + n, uu, vv)),
        }
        for kname, job in jobs.items():
            a, b = job(_pykernels), job(_ckernels)
            if not np.array_equal(a, b):
                raise SystemExit(f"backends disagree on {name} / {kname}")
            tp = _median_time(lambda: job(_pykernels), args.repeat)
            tc = _median_time(lambda: job(_ckernels), args.repeat)
            print(f"{name:<22}{kname:<12}{tp * 1e3:>11.2f}{tc * 1e3:>13.2f}{tp / tc:>8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
