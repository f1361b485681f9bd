"""Time each hot kernel under the compiled and the pure-numpy backend.

    python benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel with the best-of-N time for each backend and the
speedup. Backends that are not available are reported as missing.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from tactile_explore import _pykernels, kernels
from tactile_explore.geometry import GridSpec, generate_polygon
from tactile_explore.icp import BoundaryModel


def cases():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((64, 60, 60, 1)).astype(np.float32)
    h = rng.standard_normal((64, 30, 30, 16)).astype(np.float32)
    cols = _pykernels.im2col(x, 5, 2, 2)
    pooled, idx = _pykernels.maxpool_forward(h, 2)
    poly = generate_polygon(3).vertices
    pts = rng.uniform(-0.15, 0.15, (20_000, 2))
    spec = GridSpec()
    r, v = rng.standard_normal(2048), rng.standard_normal(2048)
    d = (rng.random(2048) < 0.01).astype(float)
    m = BoundaryModel.from_polygon(generate_polygon(5))
    cloud = m.points()[::7] + rng.normal(0, 0.001, (len(m.points()[::7]), 2))
    th = np.linspace(0, 2 * np.pi, 36, endpoint=False)
    t0 = np.zeros((36, 2))
    return {
        "im2col (64x60x60x1, k5 s2)": lambda k: k.im2col(x, 5, 2, 2),
        "col2im (64x60x60x1, k5 s2)": lambda k: k.col2im(cols, x.shape, 5, 2, 2),
        "maxpool_forward (64x30x30x16)": lambda k: k.maxpool_forward(h, 2),
        "maxpool_backward (64x30x30x16)": lambda k: k.maxpool_backward(pooled, idx, h.shape, 2),
        "points_in_polygon (20k points)": lambda k: k.points_in_polygon(pts, poly),
        "rasterize_polygon (60x60)": lambda k: k.rasterize_polygon(poly, spec.n, spec.n, spec.cell_size,
                                                                  spec.origin[0], spec.origin[1]),
        "gae (2048 steps)": lambda k: k.gae(r, v, d, 0.0, 0.99, 0.95),
        "icp_batch (36 starts)": lambda k: k.icp_batch(cloud, m.starts, m.directions, m.lengths, m.counts,
                                                       th, t0, 100, 1e-9, 1),
    }


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = kernels.backends()
    print(f"active backend: {kernels.BACKEND}; available: {', '.join(backends)}")
    print(f"{'kernel':34s} {'compiled ms':>12s} {'python ms':>10s} {'speedup':>8s}")
    for name, fn in cases().items():
        times = {}
        for b in ("compiled", "python"):
            mod = backends.get(b)
            if mod is None:
                continue
            fn(mod)  # warm up
            times[b] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat)) * 1e3
        c, p = times.get("compiled"), times.get("python")
        speed = f"{p / c:7.1f}x" if c and p else "    n/a"
        print(f"{name:34s} {c if c is not None else float('nan'):12.3f} {p:10.3f} {speed}")


if __name__ == "__main__":
    main()
