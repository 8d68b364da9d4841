"""Compare the numba and numpy implementations of the hot kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel is called once first so numba compilation is excluded.
"""

import argparse
import timeit

import numpy as np

from sparse_detect import _kernels as k


def cases(rng):
    coords = rng.standard_normal((256, 100))
    diag = rng.uniform(0.001, 0.01, (256, 100))
    eta, zeta = rng.standard_normal((2, 1 << 20))
    logw = rng.standard_normal(1 << 20) * 5
    logw_small = logw[:400]
    return {
        "thresholded_quadratic (256 x 100)": (
            k.thresholded_quadratic_np, getattr(k, "thresholded_quadratic_nb", None),
            (coords, diag, 1.0, 2.5, 1.8, False),
        ),
        "truncated_product_sums (2^20)": (
            k.truncated_product_sums_np, getattr(k, "truncated_product_sums_nb", None),
            (eta, zeta, 1.5, 3.4),
        ),
        "logsumexp_state (400, typical)": (
            k.logsumexp_state_np, getattr(k, "logsumexp_state_nb", None), (logw_small,),
        ),
        "logsumexp_state (2^20)": (
            k.logsumexp_state_np, getattr(k, "logsumexp_state_nb", None), (logw,),
        ),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':36s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, (f_np, f_nb, a) in cases(rng).items():
        t_np = min(timeit.repeat(lambda: f_np(*a), number=1, repeat=args.repeat)) * 1e3
        if f_nb is None:
            print(f"{name:36s} {t_np:10.3f} {'n/a':>10s} {'':>8s}")
            continue
        f_nb(*a)
        t_nb = min(timeit.repeat(lambda: f_nb(*a), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:36s} {t_np:10.3f} {t_nb:10.3f} {t_np / t_nb:7.2f}x")


if __name__ == "__main__":
    main()
