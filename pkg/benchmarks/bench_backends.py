"""Timing comparison of the numba and numpy kernel backends.

Runs each hot kernel (matrix fills, CSR matvec, history combination,
scalar mode recursion) on both implementations and reports best-of-N
wall times plus the speedup of the JIT path.

Usage::

    python3 benchmarks/bench_backends.py [--target H] [--repeats N]
"""
import argparse
import time

import numpy as np

from hifusim import _impl_numba, _impl_numpy
from hifusim.fem import get_assembler
from hifusim.kernels import L1WeightCache
from hifusim.mesh import build_domain_mesh


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def make_cases(target, rng):
    mesh = build_domain_mesh(target)
    asm = get_assembler(mesh)
    w = 0.5 + rng.random(asm.nv)
    wtri = np.ascontiguousarray(w[mesh.triangles])
    vel = np.ascontiguousarray(
        rng.standard_normal((mesh.num_triangles, 2)))
    mat = asm.weighted_stiffness(w)
    x = rng.standard_normal(asm.nv)
    hist = np.ascontiguousarray(rng.standard_normal((256, asm.nv)))
    hw = np.ascontiguousarray(rng.standard_normal(256))

    nsteps = 20000
    cache = L1WeightCache(0.8)
    powers = np.arange(nsteps + 2, dtype=np.float64) ** 0.2
    farr = np.zeros(nsteps + 2)
    vargs = (400.0, 6.0, 1e-4, nsteps, 0.45, 0.85, 0.8, cache.zeta0,
             powers, farr, 1.0, 0.0, -400.0, True)

    def case(name, fn):
        return name, fn

    cases = []
    for impl_name, impl in (("numba", _impl_numba), ("numpy", _impl_numpy)):
        out = np.zeros(asm.nnz)
        cases.append((impl_name, [
            case("mass_fill", lambda impl=impl, out=out: impl.mass_fill(
                asm.areas, wtri, asm.emap, out)),
            case("stiffness_fill",
                 lambda impl=impl, out=out: impl.stiffness_fill(
                     asm.areas, asm.grads, wtri, asm.emap, out)),
            case("convection_fill",
                 lambda impl=impl, out=out: impl.convection_fill(
                     asm.areas, asm.grads, vel, asm.emap, out)),
            case("csr_matvec", lambda impl=impl: impl.csr_matvec(
                mat.indptr, mat.indices, mat.data, x)),
            case("history_comb", lambda impl=impl: impl.history_comb(
                hist, hw)),
            case("volterra_mode", lambda impl=impl: impl.volterra_mode(
                *vargs)),
        ]))
    return mesh, cases


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--target", type=float, default=0.002,
                    help="mesh edge target in metres (default 0.002)")
    ap.add_argument("--repeats", type=int, default=5,
                    help="timing repeats, best is reported (default 5)")
    args = ap.parse_args(argv)

    rng = np.random.default_rng(42)
    mesh, cases = make_cases(args.target, rng)
    print(f"mesh: {mesh.num_vertices} vertices, "
          f"{mesh.num_triangles} triangles")
    print(f"numba jit active: {_impl_numba.USING_NUMBA}")

    results = {}
    for impl_name, fns in cases:
        for name, fn in fns:
            fn()  # warm-up (JIT compile / cache touch)
            results[(impl_name, name)] = best_of(fn, args.repeats)

    names = [n for n, _ in cases[0][1]]
    width = max(len(n) for n in names)
    print(f"\n{'kernel':<{width}}  {'numba':>10}  {'numpy':>10}  "
          f"{'speedup':>8}")
    for name in names:
        tb = results[("numba", name)]
        tp = results[("numpy", name)]
        print(f"{name:<{width}}  {tb * 1e3:>8.3f}ms  {tp * 1e3:>8.3f}ms  "
              f"{tp / tb:>7.1f}x")


if __name__ == "__main__":
    main()
