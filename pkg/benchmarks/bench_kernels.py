"""Compare the compiled and numpy kernel backends.

Times the spiral gather/scatter primitives and a full denoiser
forward+backward step on a few mesh sizes. Run directly:

    python benchmarks/bench_kernels.py
"""

import os
import time

import numpy as np

from meshanim.kernels import _fallback
from meshanim.network import DenoiserConfig, DenoiserNetwork
from meshanim.schedule import linear_schedule
from meshanim.spirals import build_spirals
from meshanim.synth import icosphere
from meshanim.training import DiffusionBatchLoss

try:
    from meshanim.kernels import _spiralcore

    BACKENDS = {"numpy": _fallback, "cython": _spiralcore}
except ImportError:
    BACKENDS = {"numpy": _fallback}
    print("compiled backend not available; timing numpy only")


def timeit(fn, repeats=30):
    fn()  # warm up
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats


def bench_primitives():
    print(f"{'mesh':>8} {'L*C':>6} {'op':>11} " + " ".join(f"{n:>12}" for n in BACKENDS))
    for level in (2, 3, 4):
        mesh = icosphere(level)
        n = mesh.n_vertices
        L, C = 12, 64
        table = build_spirals(mesh.faces, n, L)
        g = np.random.default_rng(0)
        values = g.standard_normal((8, n, C))
        grad = g.standard_normal((8, n, L * C))
        row = {name: timeit(lambda b=b: b.gather(values, table.sequences, n))
               for name, b in BACKENDS.items()}
        print(f"{n:>8} {L * C:>6} {'gather':>11} "
              + " ".join(f"{row[k] * 1e3:>10.3f}ms" for k in BACKENDS))
        row = {name: timeit(lambda b=b: b.scatter_add(grad, table.sequences, n, n))
               for name, b in BACKENDS.items()}
        print(f"{n:>8} {L * C:>6} {'scatter_add':>11} "
              + " ".join(f"{row[k] * 1e3:>10.3f}ms" for k in BACKENDS))


def bench_train_step():
    print("\nfull denoiser forward+backward (batch 32):")
    mesh = icosphere(2)
    n = mesh.n_vertices
    cfg = DenoiserConfig(widths=(16, 32, 64, 128), lengths=(9, 9, 12, 12),
                         n_classes=3, T=100)
    net = DenoiserNetwork(mesh.faces, n, cfg, seed=0)
    sched = linear_schedule(100, 1e-4, 0.2)
    g = np.random.default_rng(1)
    B = 32
    loss = DiffusionBatchLoss(
        net, sched,
        d0=g.standard_normal((B, n, 3)),
        ts=g.integers(1, 101, B),
        expr=g.random((B, 3)),
        eps=g.standard_normal((B, n, 3)),
    )
    dt = timeit(lambda: loss.value_and_gradients(), repeats=10)
    print(f"  N={n}: {dt * 1e3:.1f} ms/step ({os.environ.get('MESHANIM_KERNELS', 'auto')} backend)")


if __name__ == "__main__":
    bench_primitives()
    bench_train_step()
