"""Time the compiled and numpy kernel backends on training-sized shapes.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]
"""

import argparse
import json
import timeit

import numpy as np

from scene_ensemble import nn
from scene_ensemble.nn import kernels

# (label, input shape, kernel) roughly matching one batch of 50 in each model
CASES = [
    ("cnn2d conv1 im2col", (50, 1, 66, 66), (3, 3)),
    ("cnn2d conv2 im2col", (50, 32, 34, 34), (3, 3)),
    ("cnn1d conv1 im2col", (50, 20, 1, 309), (1, 100)),
    ("cnn1d conv2 im2col", (50, 128, 1, 210), (1, 30)),
]
POOLS = [
    ("cnn2d pool1", (50, 32, 64, 64), (2, 2)),
    ("cnn1d pool1", (50, 128, 1, 181), (1, 2)),
]


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench(repeat):
    rng = np.random.default_rng(0)
    rows = []
    backends = kernels.available_backends()
    for label, shape, (kh, kw) in CASES:
        x = rng.standard_normal(shape).astype(np.float32)
        cols = kernels.im2col(x, kh, kw, impl=backends["numpy"])
        for name, impl in backends.items():
            rows.append((label, name, best_of(lambda: kernels.im2col(x, kh, kw, impl=impl), repeat)))
            rows.append((label.replace("im2col", "col2im"), name,
                         best_of(lambda: kernels.col2im(cols, shape, kh, kw, impl=impl), repeat)))
    for label, shape, (kh, kw) in POOLS:
        x = rng.standard_normal(shape).astype(np.float32)
        out, arg = kernels.maxpool_forward(x, kh, kw, impl=backends["numpy"])
        for name, impl in backends.items():
            rows.append((label + " fwd", name, best_of(lambda: kernels.maxpool_forward(x, kh, kw, impl=impl), repeat)))
            rows.append((label + " bwd", name,
                         best_of(lambda: kernels.maxpool_backward(out, arg, shape, kh, kw, impl=impl), repeat)))
    return rows


def layer_step(repeat):
    """Forward + backward of the first 2D conv block with the active backend."""
    rng = np.random.default_rng(1)
    conv, pool = nn.Conv2D(1, 32, 3, rng=rng), nn.MaxPool2D(2)
    x = rng.random((50, 1, 64, 64), dtype=np.float32)

    def step():
        y = pool.forward(np.maximum(conv.forward(x, training=True), 0), training=True)
        conv.backward(pool.backward(np.ones_like(y)))

    return best_of(step, repeat)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args(argv)
    rows = bench(args.repeat)
    by_case = {}
    for label, name, t in rows:
        by_case.setdefault(label, {})[name] = t
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'kernel':<24}{'numpy ms':>10}{'cython ms':>11}{'speedup':>9}")
    for label, t in by_case.items():
        c = t.get("cython")
        speed = f"{t['numpy'] / c:8.1f}x" if c else "     n/a"
        print(f"{label:<24}{1e3 * t['numpy']:>10.2f}{(1e3 * c if c else float('nan')):>11.2f}{speed}")
    step = layer_step(args.repeat)
    print(f"conv block fwd+bwd (batch 50, {kernels.BACKEND}): {1e3 * step:.1f} ms")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"kernels": by_case, "conv_block_ms": 1e3 * step, "backend": kernels.BACKEND}, fh, indent=2)


if __name__ == "__main__":
    main()
