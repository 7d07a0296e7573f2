#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-NumPy fallback.

Times the two hot kernels (same-size complex convolution, ring-patch
encoding) and the full per-image descriptor on a 128x128 chip, verifying
along the way that both backends produce identical output.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from aspectrec import _kernels
from aspectrec._kernels import available_backends
from aspectrec.features import (FeatureConfig, GaborParams, TplbpParams,
                                extract, gabor_kernel, ring_offsets,
                                _valid_rect)


def best_of(fn, repeats):
    fn()  # warm up allocator and caches before timing
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    backends = available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; only the numpy fallback is "
              "available (pip install -e . builds it)")

    rng = np.random.default_rng(0)
    image = np.ascontiguousarray(rng.random((128, 128)))
    kernel = np.ascontiguousarray(gabor_kernel(GaborParams(wavelength=8.0,
                                                           theta=0.7)))
    tp = TplbpParams()
    dy, dx = ring_offsets(tp)
    rect = _valid_rect(image.shape, dy, dx, tp.patch_size)

    cases = {
        "conv2d 128x128 (29x29 kernel)":
            lambda mod: mod.conv2d_same(image, kernel),
        "tplbp 128x128 (r=12, S=8, w=3)":
            lambda mod: mod.tplbp_codes(image, dy, dx, tp.patch_size,
                                        tp.alpha, tp.tau, *rect),
    }

    print(f"{'kernel':36s}" + "".join(f"{name:>12s}" for name in backends)
          + f"{'speedup':>10s}")
    for label, call in cases.items():
        times = {}
        outputs = {}
        for name, mod in backends.items():
            times[name] = best_of(lambda m=mod: call(m), args.repeats)
            outputs[name] = call(mod)
        if len(outputs) == 2:
            a, b = outputs.values()
            assert np.array_equal(a, b), f"{label}: backends disagree"
        row = f"{label:36s}"
        for name in backends:
            row += f"{1e3 * times[name]:>10.2f}ms"
        if "compiled" in times:
            row += f"{times['numpy'] / times['compiled']:>9.1f}x"
        print(row)

    cfg = FeatureConfig()
    for name, mod in backends.items():
        _kernels._active = mod
        t = best_of(lambda: extract(image, cfg), max(1, args.repeats - 1))
        print(f"{'full extract 128x128 (6 orient.)':36s}{name:>10s} "
              f"{1e3 * t:>9.2f}ms")


if __name__ == "__main__":
    main()
