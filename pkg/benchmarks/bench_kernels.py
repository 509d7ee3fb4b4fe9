"""Benchmark the numba kernels against the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py [--images N] [--classes C]
                                        [--texts-per-class K] [--repeats R]

Times the stage-1 heuristic reduction and the support-affinity transform on
a workload shaped like a large run (many images, 10^4-scale text sets).
The numba column is absent when CODER_DISABLE_NUMBA is set.
"""

import argparse
import time

import numpy as np

from coder import kernels
from coder.bundle import TextFamily, TextRecord
from coder.core import ClassPartition


def build_workload(rng, n_images, n_classes, texts_per_class):
    records = []
    weights = {TextFamily.CLASS_NAME: 1, TextFamily.ATTRIBUTE: 6,
               TextFamily.ANALOGOUS_CLASS: 2, TextFamily.SYNONYM: 1}
    per_family = []
    for fam, w in weights.items():
        per_family.extend([fam] * max(1, round(texts_per_class * w / 10)))
    for c in range(n_classes):
        for k, fam in enumerate(per_family[:texts_per_class]):
            records.append(TextRecord(len(records), f"c{c} t{k}", fam, c))
    partition = ClassPartition.from_records(records, n_classes)
    values = rng.uniform(-1, 1, (n_images, len(records))).astype(np.float32)
    return values, partition


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--images", type=int, default=2000)
    parser.add_argument("--classes", type=int, default=100)
    parser.add_argument("--texts-per-class", type=int, default=100)
    parser.add_argument("--support", type=int, default=1600)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    values, partition = build_workload(rng, args.images, args.classes,
                                       args.texts_per_class)
    sims = rng.uniform(-20, 20, (args.images, args.support))

    print(f"workload: {args.images} images x {values.shape[1]} texts, "
          f"{args.classes} classes; affinity {args.images} x {args.support}")
    if kernels.HAVE_NUMBA:
        kernels.warmup()

    rows = []
    for name, fn in [
        ("stage1 reduce", lambda use: kernels.stage1_reduce(
            values, partition.mean_idx, partition.mean_start,
            partition.max_idx, partition.max_start, use_numba=use)),
        ("affinity minmax", lambda use: kernels.affinity_transform(
            sims, 5.5, 3.0, "minmax", use_numba=use)),
        ("affinity l2", lambda use: kernels.affinity_transform(
            sims, 5.5, 3.0, "l2", use_numba=use)),
    ]:
        t_numpy = timeit(lambda: fn(False), args.repeats)
        if kernels.HAVE_NUMBA:
            t_numba = timeit(lambda: fn(True), args.repeats)
            rows.append((name, t_numpy, t_numba, t_numpy / t_numba))
        else:
            rows.append((name, t_numpy, None, None))

    header = f"{'kernel':<18} {'numpy (s)':>10} {'numba (s)':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, t_np, t_nb, speedup in rows:
        if t_nb is None:
            print(f"{name:<18} {t_np:>10.4f} {'n/a':>10} {'n/a':>8}")
        else:
            print(f"{name:<18} {t_np:>10.4f} {t_nb:>10.4f} {speedup:>7.2f}x")


if __name__ == "__main__":
    main()
