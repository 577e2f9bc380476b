"""Compare the compiled and numpy im2col/col2im backends.

Run with ``python benchmarks/bench_kernels.py [--repeat N]``. Reports the
median wall time per call for the lowering kernels at the generator's layer
geometries and for one forward/backward pass of fisher-base.
"""
import argparse
import statistics
import time

import numpy as np

from densegan import arch, kernels
from densegan.tensor import Tape, Tensor, backward

CASES = [
    # (name, batch, channels, size, k, stride, pad)
    ("k4s2p1 256ch 4px", 64, 256, 4, 4, 2, 1),
    ("k4s2p1 128ch 8px", 64, 128, 8, 4, 2, 1),
    ("k3s1p1 64ch 16px", 64, 64, 16, 3, 1, 1),
    ("k4s2p1 64ch 32px", 64, 64, 32, 4, 2, 1),
]


def _median_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return statistics.median(times)


def bench_kernels(repeat):
    rng = np.random.default_rng(0)
    rows = []
    for name, n, c, h, k, s, p in CASES:
        x = rng.standard_normal((n, c, h, h))
        for backend, impl in kernels.backends().items():
            cols = impl.im2col(x, k, s, p)
            t_fwd = _median_time(lambda: impl.im2col(x, k, s, p), repeat)
            t_bwd = _median_time(lambda: impl.col2im(cols, c, h, h, k, s, p), repeat)
            rows.append((name, backend, t_fwd, t_bwd))
    return rows


def bench_network(repeat, batch=16):
    gen = arch.build_generator("fisher-base", np.random.default_rng(0))
    z = Tensor(np.random.default_rng(1).standard_normal((batch, 100, 1, 1)))

    def step():
        with Tape() as tape:
            loss = (gen(z) ** 2).sum()
        backward(loss, tape)
        for p in gen.parameters():
            p.zero_grad()

    rows = []
    original = kernels._impl
    try:
        for backend, impl in kernels.backends().items():
            kernels._impl = impl
            rows.append((backend, _median_time(step, repeat)))
    finally:
        kernels._impl = original
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    print(f"default backend: {kernels.BACKEND}")
    print(f"{'case':<20} {'backend':<8} {'im2col ms':>10} {'col2im ms':>10}")
    for name, backend, fwd, bwd in bench_kernels(args.repeat):
        print(f"{name:<20} {backend:<8} {fwd * 1e3:>10.2f} {bwd * 1e3:>10.2f}")
    print("\nfisher-base forward+backward, batch 16")
    for backend, t in bench_network(args.repeat):
        print(f"  {backend:<8} {t * 1e3:.1f} ms")


if __name__ == "__main__":
    main()
