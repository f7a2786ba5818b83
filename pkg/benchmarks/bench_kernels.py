"""Benchmark the compiled kernel backend against the numpy fallback.

Times the individual hot kernels on training-sized tensors, then a full
adversarial training step (generate + discriminator step with gradient
penalty + generator step) under each backend.

Run: python benchmarks/bench_kernels.py [--repeat N]
"""

from __future__ import annotations

import argparse
import importlib
import os
import sys
import time

import numpy as np


def bench(fn, repeat: int) -> float:
    fn()  # warm up
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_cases(mod, rng):
    b, n, t, width = 16, 10, 5, 128
    x = rng.standard_normal((b * n, width)).astype(np.float32)
    w = rng.standard_normal((width, width)).astype(np.float32)
    bias = rng.standard_normal(width).astype(np.float32)
    adj = rng.standard_normal((b, n, n)).astype(np.float32)
    h = rng.standard_normal((b, n, width)).astype(np.float32)
    logits = rng.standard_normal((b, n * n, t)).astype(np.float32)
    packed = rng.integers(0, 2**63, (256, 32)).astype(np.uint64)
    return {
        "matmul 160x128 @ 128x128": lambda: mod.matmul(x, w),
        "bmm 16x(10x10 @ 10x128)": lambda: mod.bmm(adj, h),
        "tanh 20480": lambda: mod.tanh(x),
        "sigmoid 20480": lambda: mod.sigmoid(x),
        "softmax rows 1600x5": lambda: mod.softmax_last(logits),
        "add_bias 160x128": lambda: mod.add_bias(x, bias),
        "mul 20480": lambda: mod.mul(x, x),
        "sum_last 160x128": lambda: mod.sum_last(x),
        "argmax_onehot 1600x5": lambda: mod.argmax_onehot_last(logits),
        "tanimoto 256x256x2048b": lambda: mod.pair_intersect_counts(packed, packed),
    }


def training_step(seed: int):
    from fedmolgan import gan

    rng = np.random.default_rng(seed)
    gen = gan.GeneratorModel([32, 128], rng)
    disc = gan.DiscriminatorModel([32, 64], 32, [64, 1], rng)
    v = np.zeros((16, 10, 10), dtype=np.float32)
    v[:, :, 0] = 1
    a = np.zeros((16, 10, 10, 5), dtype=np.float32)
    a[:, :, :, 0] = 1
    opts = gan.TrainOptions()

    def step():
        gan.local_epoch(gen, disc, [(v, a)], opts, rng)

    return step


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=30)
    args = parser.parse_args()

    from fedmolgan.kernels import available_backends, load_backend

    backends = available_backends()
    rng = np.random.default_rng(0)
    mods = {name: load_backend(name) for name in backends}
    print(f"backends: {', '.join(backends)}\n")

    rows = []
    names = list(kernel_cases(mods[backends[0]], rng))
    for case in names:
        timings = {}
        for name, mod in mods.items():
            timings[name] = bench(kernel_cases(mod, rng)[case], args.repeat)
        rows.append((case, timings))

    width = max(len(c) for c in names)
    header = f"{'kernel'.ljust(width)} | " + " | ".join(f"{n:>12}" for n in backends)
    if len(backends) > 1:
        header += " | speedup"
    print(header)
    print("-" * len(header))
    for case, timings in rows:
        line = f"{case.ljust(width)} | " + " | ".join(
            f"{timings[n] * 1e6:>10.1f}us" for n in backends
        )
        if len(backends) > 1:
            line += f" | {timings['python'] / timings['compiled']:>6.2f}x"
        print(line)

    print("\nfull adversarial training step (batch 16, n_max 10):")
    for name in backends:
        os.environ["FEDMOLGAN_BACKEND"] = name
        for mod_name in [m for m in list(sys.modules) if m.startswith("fedmolgan")]:
            del sys.modules[mod_name]
        importlib.invalidate_caches()
        step = training_step(0)
        dt = bench(step, max(3, args.repeat // 10))
        print(f"  {name:>9}: {dt * 1e3:.1f} ms/step")
    os.environ.pop("FEDMOLGAN_BACKEND", None)
    return 0


if __name__ == "__main__":
    sys.exit(main())
