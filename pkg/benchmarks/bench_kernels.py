"""Benchmark the hot kernels: numba @njit versus the pure-numpy fallback.

Usage:  python benchmarks/bench_kernels.py [--repeats 5]

Covers the boosted-tree split search + traversal, the SMO dual solver, and
the LOWESS smoothing pass, on shapes matching the full-scale study
(~500 training rows, ~35 encoded columns; 10k-point calibration smooth).
The numba timings exclude the first call so JIT compilation is not counted.
"""

import argparse
import time

import numpy as np

from nonunion._accel import NUMBA_AVAILABLE, set_numba_enabled
from nonunion.calibration import lowess
from nonunion.cohort import generate_synthetic_cohort, split_dataset
from nonunion.gbt import GbtConfig, predict_proba_gbt, train_gbt
from nonunion.preprocess import fit_transformer, transform, with_class_weights
from nonunion.svm import SvmConfig, train_svm


def time_call(fn, repeats):
    fn()  # warm-up (JIT compile / cache load)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def build_cases():
    dataset, _ = generate_synthetic_cohort(797, 7)
    split = split_dataset(dataset, 0.2, 7)
    train = dataset.subset(split.train)
    test = dataset.subset(split.test)
    transformer = fit_transformer(train)
    matrix = with_class_weights(transform(transformer, train))
    test_values = transform(transformer, test).values

    rng = np.random.default_rng(0)
    x_smooth = rng.uniform(0, 1, 10_000)
    y_smooth = (rng.random(10_000) < x_smooth).astype(float)

    gbt_model = [None]

    def bench_gbt_train():
        gbt_model[0] = train_gbt(matrix, GbtConfig())

    def bench_gbt_predict():
        predict_proba_gbt(gbt_model[0], test_values)

    def bench_svm_train():
        train_svm(matrix, SvmConfig())

    def bench_lowess():
        lowess(x_smooth, y_smooth, robust_iters=3)

    return [
        ("gbt train (637x%d, 100 rounds)" % matrix.values.shape[1], bench_gbt_train),
        ("gbt predict (160 rows)", bench_gbt_predict),
        ("svm train incl. platt folds", bench_svm_train),
        ("lowess 10k, 3 robust iters", bench_lowess),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    cases = build_cases()
    print(f"{'kernel':<34} {'numba':>10} {'numpy':>10} {'speedup':>9}")
    for name, fn in cases:
        if NUMBA_AVAILABLE:
            set_numba_enabled(True)
            with_numba = time_call(fn, args.repeats)
        else:
            with_numba = float("nan")
        set_numba_enabled(False)
        with_numpy = time_call(fn, args.repeats)
        set_numba_enabled(True)
        ratio = with_numpy / with_numba if with_numba == with_numba else float("nan")
        print(f"{name:<34} {with_numba:>9.3f}s {with_numpy:>9.3f}s {ratio:>8.1f}x")


if __name__ == "__main__":
    main()
