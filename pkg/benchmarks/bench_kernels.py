"""Compare the compiled kernels against their pure-Python twins.

Usage:
    python3 benchmarks/bench_kernels.py [--repeat 5] [--length 40]
"""
import argparse
import random
import timeit

import numpy as np

from groundplan import _pykernels

try:
    from groundplan import _kernels
except ImportError:
    _kernels = None

TEXTS = [
    "walk to kitchen", "open fridge", "grab milk from the refrigerator", "switch on television",
    "sit on sofa", "put glass in dishwasher", "look at computer", "type on keyboard",
]


def bench_lcs(impl, pairs, as_array):
    def run():
        for a, b in pairs:
            impl.lcs_length(*((np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64))
                              if as_array else (a, b)))
    return run


def bench_features(impl, texts, dim):
    encoded = [t.encode("utf-8") for t in texts]

    def run():
        for data in encoded:
            impl.accumulate_features(data, 3, np.zeros(dim))
    return run


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--length", type=int, default=40, help="program length for the LCS pairs")
    parser.add_argument("--pairs", type=int, default=500)
    args = parser.parse_args(argv)

    rng = random.Random(0)
    pairs = [([rng.randrange(42) for _ in range(args.length)], [rng.randrange(42) for _ in range(args.length)])
             for _ in range(args.pairs)]
    texts = TEXTS * 250

    cases = [
        (f"lcs_length x{args.pairs} (len {args.length})",
         lambda impl, arr: bench_lcs(impl, pairs, arr)),
        (f"accumulate_features x{len(texts)}", lambda impl, arr: bench_features(impl, texts, 512)),
    ]
    print(f"{'kernel':<36}{'python s':>10}{'cython s':>10}{'speedup':>9}")
    for name, make in cases:
        py = min(timeit.repeat(make(_pykernels, False), number=1, repeat=args.repeat))
        if _kernels is None:
            print(f"{name:<36}{py:>10.4f}{'n/a':>10}{'':>9}")
            continue
        cy = min(timeit.repeat(make(_kernels, True), number=1, repeat=args.repeat))
        print(f"{name:<36}{py:>10.4f}{cy:>10.4f}{py / cy:>8.1f}x")


if __name__ == "__main__":
    main()
