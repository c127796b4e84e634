"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py --sizes 10 20 100 --repeat 200
"""

import argparse
import timeit

import numpy as np

from rankptron import _pykernels

try:
    from rankptron import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def cases(m: int, rng: np.random.Generator):
    s = rng.standard_normal(m)
    grades = np.sort(rng.integers(0, 5, size=m))[::-1].astype(np.int64)
    v = rng.random(m)
    ranked = np.sort(rng.integers(0, 5, size=m))[::-1].astype(np.int64)
    binary = (rng.random(m) < 0.3).astype(np.int64)
    binary[0] = 1
    return {
        "slam_terms": (s, grades, 1.0),
        "slam_loss_direction": (s, grades, v, 1.0),
        "pairwise_witness": (s, grades),
        "dcg_ranked": (ranked, min(10, m)),
        "ap_ranked": (binary,),
    }


def bench(mod, name: str, args, repeat: int) -> float:
    fn = getattr(mod, name)
    return min(timeit.repeat(lambda: fn(*args), number=repeat, repeat=3)) / repeat


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[10, 20, 100, 500])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled kernels not built; showing the numpy fallback only")
    rng = np.random.default_rng(args.seed)

    print(f"{'kernel':<22}{'m':>6}{'numpy us':>12}{'cython us':>12}{'speedup':>9}")
    for m in args.sizes:
        for name, fargs in cases(m, rng).items():
            t_py = bench(_pykernels, name, fargs, args.repeat) * 1e6
            if _ckernels is None:
                print(f"{name:<22}{m:>6}{t_py:>12.2f}{'-':>12}{'-':>9}")
                continue
            t_c = bench(_ckernels, name, fargs, args.repeat) * 1e6
            print(f"{name:<22}{m:>6}{t_py:>12.2f}{t_c:>12.2f}{t_py / t_c:>8.1f}x")


if __name__ == "__main__":
    main()
