"""Benchmark the numba kernels against the pure-numpy fallback.

Run with `python -m rdncnn.bench`. Times the convolution forward/backward
kernels and a full training step on both backends and reports the speedup
plus the worst-case output disagreement.
"""

import argparse
import time

import numpy as np

from . import backend, ops
from .network import NetworkConfig, build_network
from .optim import AdamState, adam_step


def _time(fn, repeats):
    fn()  # warm-up (JIT compile on the numba path)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_conv(batch, channels, filters, size, repeats):
    gen = np.random.default_rng(0)
    x = gen.standard_normal((batch, channels, size, size)).astype(np.float32)
    kernel = gen.standard_normal((filters, channels, 3, 3)).astype(np.float32)
    bias = gen.standard_normal(filters).astype(np.float32)
    grad_out = gen.standard_normal((batch, filters, size, size)).astype(np.float32)

    results = {}
    for name in ("numba", "numpy"):
        if name == "numba" and not backend.HAVE_NUMBA:
            continue
        backend.set_backend(name)
        fwd = _time(lambda: ops.conv2d_forward(x, kernel, bias), repeats)
        bwd = _time(lambda: ops.conv2d_backward(grad_out, x, kernel), repeats)
        out = ops.conv2d_forward(x, kernel, bias)
        grads = ops.conv2d_backward(grad_out, x, kernel)
        results[name] = (fwd, bwd, out, grads)
    return results


def bench_train_step(repeats):
    cfg = NetworkConfig(depth=5, filters=16, kernel_size=3)
    gen = np.random.default_rng(1)
    clean = gen.uniform(0, 1, (16, 1, 40, 40)).astype(np.float32)
    noisy = clean + 0.1 * gen.standard_normal(clean.shape).astype(np.float32)

    results = {}
    for name in ("numba", "numpy"):
        if name == "numba" and not backend.HAVE_NUMBA:
            continue
        backend.set_backend(name)
        net = build_network(cfg, seed=0)
        opt = AdamState.fresh(net.parameters())

        def step():
            residual = net.forward(noisy, mode="train")
            _, grad = ops.residual_mse_loss(residual, noisy, clean)
            net.backward(grad)
            adam_step(net.parameters(), net.gradients(), opt, 1e-3)

        results[name] = _time(step, repeats)
    return results


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args(argv)

    saved = backend.current_backend()
    try:
        conv = bench_conv(batch=16, channels=16, filters=16, size=40,
                          repeats=args.repeats)
        print(f"{'kernel':<22} {'numba':>10} {'numpy':>10} {'speedup':>8}")
        if "numba" in conv:
            nb, npy = conv["numba"], conv["numpy"]
            print(f"{'conv2d forward':<22} {nb[0]*1e3:>8.2f}ms {npy[0]*1e3:>8.2f}ms "
                  f"{npy[0]/nb[0]:>7.1f}x")
            print(f"{'conv2d backward':<22} {nb[1]*1e3:>8.2f}ms {npy[1]*1e3:>8.2f}ms "
                  f"{npy[1]/nb[1]:>7.1f}x")
            fwd_diff = float(np.max(np.abs(nb[2] - npy[2])))
            bwd_diff = max(float(np.max(np.abs(a - b)))
                           for a, b in zip(nb[3], npy[3]))
            print(f"max |numba - numpy|: forward {fwd_diff:.2e}, backward {bwd_diff:.2e}")
        else:
            print(f"{'conv2d forward':<22} {'n/a':>10} {conv['numpy'][0]*1e3:>8.2f}ms")

        step = bench_train_step(args.repeats)
        if "numba" in step:
            print(f"{'training step':<22} {step['numba']*1e3:>8.2f}ms "
                  f"{step['numpy']*1e3:>8.2f}ms {step['numpy']/step['numba']:>7.1f}x")
        else:
            print(f"{'training step':<22} {'n/a':>10} {step['numpy']*1e3:>8.2f}ms")
    finally:
        backend.set_backend(saved)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
