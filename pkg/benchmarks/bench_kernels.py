"""Compare the compiled kernels with the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--size 64]
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from glyphforge import _pykernels, kernels
from glyphforge.attention import gaussian_kernel


def cases(size: int, rng: np.random.Generator):
    h = w = size
    x = rng.standard_normal((h, w, 4))
    subs = rng.standard_normal((2, h, w, 4))
    masks = np.zeros((2, h, w))
    masks[0, :, : w // 3] = 1
    masks[1, :, -w // 3 :] = 1
    surr, uc = rng.standard_normal((2, h, w, 4))
    gammas = np.array([0.8, 0.8])
    blob = rng.random((size * 8, size * 8)) > 0.6
    img = rng.random((size * 8, size * 8))
    scores = rng.standard_normal((8, 256, 256))
    k = gaussian_kernel(2.0)
    return {
        "fused_step": lambda m: m.fused_step(x, subs, masks, gammas, surr, uc, 7.5, 0.5, 0.86, 0.6, 0.8, False),
        "label_components": lambda m: m.label_components(blob, 8),
        "blur_separable": lambda m: m.blur_separable(img, k),
        "attention_received": lambda m: m.attention_received(scores),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--size", type=int, default=64, help="latent side; images are 8x larger")
    args = ap.parse_args(argv)

    impls = [("python", _pykernels)]
    if kernels.compiled_impl is not None:
        impls.append(("cython", kernels.compiled_impl))
    else:
        print("compiled extension not available; timing the fallback only")

    rng = np.random.default_rng(0)
    print(f"{'kernel':<20}" + "".join(f"{name:>12}" for name, _ in impls) + ("     speedup" if len(impls) == 2 else ""))
    for name, fn in cases(args.size, rng).items():
        times = []
        for _, mod in impls:
            fn(mod)  # warm up
            times.append(min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat)) * 1e3)
        row = f"{name:<20}" + "".join(f"{t:10.2f}ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
