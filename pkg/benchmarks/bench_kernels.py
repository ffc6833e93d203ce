"""Time the numba kernels against the numpy fallback on the same inputs.

    python3 benchmarks/bench_kernels.py [--size 256] [--repeat 5]

Each row reports the best wall time per backend and whether the two
outputs agree.  The first numba call (compilation or cache load) is
excluded by a warm-up run.
"""

import argparse
import time

import numpy as np

from percolab import kernels
from percolab.clusters import Explorer, label
from percolab.lattice import LatticeRegion
from percolab.loops import trace_edges
from percolab.sampling import sample


def best_time(fn, repeat):
    out = fn()
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return bool(np.array_equal(np.asarray(a), np.asarray(b)))


def cases(size):
    box = LatticeRegion.box(size)
    rect = LatticeRegion.rect(size, size)
    origin = box.index_of((0, 0))

    def sampling():
        return sample(box, 7, 3).words

    def labelling():
        return label(sample(box, 7, 3)).labels

    def diameters():
        lab = label(sample(box, 7, 3))
        return lab.diameters

    def exploration():
        ex = Explorer(box)
        e = ex.explore([origin], seed=7, replica=3, stop_radius=0.9 * size)
        return np.sort(e.sites), e.max_far

    def tracing():
        tr = trace_edges(sample(rect, 7, 3))
        return tr.sites, tr.dirs, tr.offsets

    return [("sample", sampling), ("label", labelling), ("diameters", diameters),
            ("explore", exploration), ("trace", tracing)]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    prev = kernels.backend_name()
    print(f"{'kernel':<12}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}  agree")
    try:
        for name, fn in cases(args.size):
            kernels.use("numba")
            t_nb, o_nb = best_time(fn, args.repeat)
            kernels.use("numpy")
            t_np, o_np = best_time(fn, args.repeat)
            print(f"{name:<12}{1e3 * t_nb:>12.2f}{1e3 * t_np:>12.2f}{t_np / t_nb:>10.1f}  {same(o_nb, o_np)}")
    finally:
        kernels.use(prev)


if __name__ == "__main__":
    main()
