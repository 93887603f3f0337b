"""Compare the numba kernels against the pure-numpy fallbacks.

    python3 benchmarks/bench_backends.py [--repeat 3] [--quick]

Every kernel runs once per backend before timing so numba compilation is not
counted. Outputs of the two backends are compared before any timing is shown.
"""
import argparse
import time

import numpy as np

from lesionseg import _accel
from lesionseg.augment import rotate
from lesionseg.interp import TRILINEAR, sample_grid
from lesionseg.metrics import connected_components
from lesionseg.unet import ops
from lesionseg.volume import Volume3D


def cases(rng, quick):
    n = 32 if quick else 64
    x4 = rng.normal(size=(4, n, n, n)).astype(np.float32)
    w48 = rng.normal(size=(8, 4, 3, 3, 3)).astype(np.float32)
    x32 = rng.normal(size=(32, n // 2, n // 2, n // 2)).astype(np.float32)
    w32 = rng.normal(size=(32, 32, 3, 3, 3)).astype(np.float32)
    wt = rng.normal(size=(32, 16, 2, 2, 2)).astype(np.float32)
    b8, b16, b32 = (np.zeros(c, np.float32) for c in (8, 16, 32))
    big = 2 * n
    mask = (rng.random((big, big, big)) < 0.3).astype(np.uint8)
    vol = rng.normal(size=(n, n, n)).astype(np.float32)
    cz, cy, cx = (np.linspace(0, n - 1, int(n * 1.5)) for _ in range(3))
    image = Volume3D(vol, (1.5, 1.0, 1.0))
    return [
        (f"conv3d 4->8 @ {n}^3", lambda: ops.conv3d(x4, w48, b8)),
        (f"conv3d 32->32 @ {n // 2}^3", lambda: ops.conv3d(x32, w32, b32)),
        (f"conv_transpose 32->16 @ {n // 2}^3", lambda: ops.conv_transpose3d(x32, wt, b16)),
        (f"components 26-conn @ {big}^3", lambda: connected_components(mask, 26).labels),
        (f"trilinear resample {n}^3 -> {int(n * 1.5)}^3", lambda: sample_grid(vol, cz, cy, cx, TRILINEAR)),
        (f"rotate (10, -7, 5) deg @ {n}^3", lambda: rotate(image, (10.0, -7.0, 5.0)).data),
    ]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="half-size inputs")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':40s} {'numba s':>9s} {'numpy s':>9s} {'numpy/numba':>12s}")
    for name, fn in cases(rng, args.quick):
        results, timings = {}, {}
        for b in ("numba", "numpy"):
            with _accel.use_backend(b):
                results[b] = fn()
                timings[b] = best_of(fn, args.repeat)
        a, c = results["numba"], results["numpy"]
        if a.dtype.kind in "iu":
            assert np.array_equal(a, c), name
        else:
            assert np.allclose(a, c, rtol=1e-4, atol=1e-4), name
        ratio = timings["numpy"] / timings["numba"]
        print(f"{name:40s} {timings['numba']:9.4f} {timings['numpy']:9.4f} {ratio:12.2f}")


if __name__ == "__main__":
    main()
