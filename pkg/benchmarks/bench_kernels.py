"""Timing comparison: numba-jitted kernels vs the same code as pure Python.

Runs each hot kernel through its compiled dispatcher and through the
uncompiled ``py_func`` on identical inputs, then prints a speedup table.
With HYBRIDFLEET_NO_JIT=1 only the pure path exists, so both columns match.

Usage: python benchmarks/bench_kernels.py
"""
import time

import numpy as np

from hybridfleet import kernels


def pure(fn):
    return fn.py_func if hasattr(fn, "py_func") else fn


def timeit(fn, args_list, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        for args in args_list:
            fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def _equal(a, b):
    if isinstance(a, tuple):
        return len(a) == len(b) and all(_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def bench(name, fn, args_list, check_args=None):
    jit_fn, py_fn = fn, pure(fn)
    if check_args is not None:  # sanity: both paths agree bit-for-bit
        a = jit_fn(*[np.copy(x) if isinstance(x, np.ndarray) else x
                     for x in check_args])
        b = py_fn(*[np.copy(x) if isinstance(x, np.ndarray) else x
                    for x in check_args])
        assert _equal(a, b), f"{name}: jit and python paths disagree"
    jit_fn(*args_list[0])  # trigger compilation outside the timed region
    t_jit = timeit(jit_fn, args_list)
    t_py = timeit(py_fn, args_list)
    speedup = t_py / t_jit if t_jit > 0 else float("inf")
    print(f"{name:<22} jit {t_jit * 1e3:9.2f} ms   python {t_py * 1e3:9.2f} ms"
          f"   speedup {speedup:7.1f}x")


def sym_matrix(rng, n):
    m = rng.uniform(1, 100, (n, n))
    m = (m + m.T) / 2
    np.fill_diagonal(m, 0)
    return m


def main():
    print(f"JIT enabled: {kernels.JIT_ENABLED}")
    rng = np.random.default_rng(0)

    m60 = sym_matrix(rng, 60)
    orders = [np.arange(60) for _ in range(20)]
    bench("two_opt (n=60)", kernels.two_opt,
          [(m60, o, True) for o in orders],
          check_args=(sym_matrix(rng, 20), np.arange(20), True))

    m12 = sym_matrix(rng, 12)
    bench("held_karp (n=12)", kernels.held_karp, [(m12, True)] * 3,
          check_args=(sym_matrix(rng, 9), True))

    n = 200
    px = np.cumsum(rng.uniform(20, 120, n))
    py = np.zeros(n)
    node = np.arange(n)
    arrive, depart = kernels.build_timetable(np.diff(px) / 8.0, np.zeros(n))
    sortie_args = [(px, py, node, arrive, depart, n, 0.0,
                    float(rng.uniform(0, 2000)), float(rng.uniform(-500, 500)),
                    12.0, 30.0, 1200.0) for _ in range(2000)]
    bench("best_sortie (200 pts)", kernels.best_sortie, sortie_args,
          check_args=sortie_args[0])

    nb = 50
    vx, vy, offs, hts = [], [], [0], []
    bb = [[], [], [], []]
    for _ in range(nb):
        cx, cy = rng.uniform(0, 800, 2)
        w, d = rng.uniform(10, 30, 2)
        vx += [cx - w, cx + w, cx + w, cx - w]
        vy += [cy - d, cy - d, cy + d, cy + d]
        offs.append(len(vx))
        hts.append(float(rng.uniform(6, 24)))
        bb[0].append(cx - w)
        bb[1].append(cx + w)
        bb[2].append(cy - d)
        bb[3].append(cy + d)
    seg_a = rng.uniform(0, 800, (5000, 3))
    seg_b = rng.uniform(0, 800, (5000, 3))
    seg_a[:, 2] = rng.uniform(0, 60, 5000)
    seg_b[:, 2] = 0.0
    los_args = (seg_a[:, 0], seg_a[:, 1], seg_a[:, 2],
                seg_b[:, 0], seg_b[:, 1], seg_b[:, 2],
                np.array(vx), np.array(vy), np.array(offs, np.int64),
                np.array(hts), *(np.array(x) for x in bb))
    bench("los_batch (5k segs)", kernels.los_blocked_batch, [los_args],
          check_args=los_args)

    xs, ys = rng.uniform(0, 1000, (2, 800))
    bench("pairwise (n=800)", kernels.pairwise_distances, [(xs, ys)] * 5,
          check_args=(xs[:50], ys[:50]))


if __name__ == "__main__":
    main()
