"""Compare the compiled and plain kernel backends.

Times each kernel on problem sizes matching the shipped experiments and
verifies both backends agree numerically. Run from the repository root:

    python3 benchmarks/bench_backends.py [--repeats N]
"""

import argparse
import time

import numpy as np

from flowrom import kernels
from flowrom.rng import make_rng


def _time(fn, args, repeats):
    fn(*args)  # warm up (also triggers compilation)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def _pcfml_args(rng, n_full, n_red, n_mem, n_rec, batch, hidden):
    dataT = rng.normal(0.0, 1.0, (n_mem + n_rec, batch, n_full))
    p_in = rng.normal(0.0, 0.3, (n_red, n_full))
    p_out = rng.normal(0.0, 0.3, (n_full, n_red))
    sizes = [n_mem * n_red, hidden, hidden, hidden, n_red]
    blocks = []
    for i in range(4):
        blocks.append(rng.normal(0.0, 0.3, (sizes[i + 1], sizes[i])))
        blocks.append(rng.normal(0.0, 0.1, sizes[i + 1]))
    return (dataT, p_in, p_out, *blocks, n_mem, True)


def _nodal_args(rng, n_full, n_mem, n_rec, batch, hidden):
    dataT = rng.normal(0.0, 1.0, (n_mem + n_rec, batch, n_full))
    return (dataT,
            rng.normal(0.0, 0.1, (5, hidden, n_mem * n_full)),
            rng.normal(0.0, 0.1, (5, hidden)),
            rng.normal(0.0, 0.1, (5, n_full, hidden)),
            rng.normal(0.0, 0.1, (5, n_full)),
            rng.normal(0.0, 0.3, (5, 5)),
            rng.normal(0.0, 0.1, 5),
            rng.normal(0.0, 0.3, (1, 5)),
            rng.normal(0.0, 0.1, 1),
            n_mem)


def _adam_args(rng, n):
    return (rng.normal(0.0, 1.0, n), rng.normal(0.0, 1.0, n),
            np.zeros(n), np.zeros(n), 1, 1e-3, 0.9, 0.999, 1e-8)


def _leapfrog_args(rng, nx):
    xs = np.linspace(-1.0, 1.0, nx)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    u0 = np.arctan(0.5 * np.cos(np.pi * X / 2.0))
    ut0 = np.sin(np.pi * X) * np.exp(0.3 * np.sin(np.pi * Y / 2.0))
    dx = xs[1] - xs[0]
    return (u0, ut0, dx, dx, 5e-3, 2, 50)


def _agreement(a, b):
    worst = 0.0
    for xa, xb in zip(a, b):
        xa = np.asarray(xa, dtype=np.float64)
        xb = np.asarray(xb, dtype=np.float64)
        scale = max(1.0, float(np.max(np.abs(xa))))
        worst = max(worst, float(np.max(np.abs(xa - xb))) / scale)
    return worst


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    plain = kernels.get_impls("numpy")
    comp = kernels.get_impls("numba")
    if comp is None:
        raise SystemExit("compiled backend unavailable; install numba")

    rng = make_rng(0)
    cases = [
        ("pcfml_epoch  (diffusion run)",
         "pcfml_epoch", _pcfml_args(rng, 100, 2, 20, 10, 100, 10)),
        ("pcfml_epoch  (2-d wave run)",
         "pcfml_epoch", _pcfml_args(rng, 1537, 13, 20, 10, 100, 15)),
        ("nodal_epoch  (diffusion run)",
         "nodal_epoch", _nodal_args(rng, 100, 20, 10, 100, 100)),
        ("adam_update  (1e6 params)", "adam_update", _adam_args(rng, 10**6)),
        ("wave2d_leapfrog (101x101)", "wave2d_leapfrog", _leapfrog_args(
            rng, 101)),
    ]
    print(f"{'kernel':34s} {'numpy':>10s} {'numba':>10s} "
          f"{'speedup':>8s} {'agreement':>10s}")
    for label, name, case_args in cases:
        # adam mutates its inputs; give each backend its own copies
        a_args = tuple(np.array(a, copy=True) if isinstance(a, np.ndarray)
                       else a for a in case_args)
        b_args = tuple(np.array(a, copy=True) if isinstance(a, np.ndarray)
                       else a for a in case_args)
        t_plain = _time(plain[name], a_args, args.repeats)
        t_comp = _time(comp[name], b_args, args.repeats)
        out_a = plain[name](*a_args)
        out_b = comp[name](*b_args)
        if name == "adam_update":
            out_a = (a_args[0],)
            out_b = (b_args[0],)
        diff = _agreement(out_a, out_b)
        print(f"{label:34s} {t_plain * 1e3:9.2f}ms {t_comp * 1e3:9.2f}ms "
              f"{t_plain / t_comp:7.1f}x {diff:10.2e}")


if __name__ == "__main__":
    main()
