#!/usr/bin/env python3
"""Compare the compiled and pure-NumPy assembly kernels.

Times each kernel on a motor mesh, then the full residual + Jacobian
assembly with either lane patched in, and prints a table with speedups.
The two lanes are also cross-checked against each other here (the test
suite holds the authoritative equivalence test).

Usage: python3 benchmarks/bench_kernels.py [--h 0.125] [--repeats 5]
"""

import argparse
import statistics
import time
from contextlib import contextmanager

import numpy as np

from curltd import fem, generators, kernels
from curltd import material as mat
from curltd.mesh import AIR

KERNEL_NAMES = ("tet_geometry", "whitney_blocks", "gather_curls",
                "residual_accumulate", "jacobian_values")


def timeit(fn, repeats):
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


@contextmanager
def lane(backend):
    """Temporarily route the shared kernel names through one backend."""
    saved = {n: getattr(kernels, n) for n in KERNEL_NAMES}
    for n in KERNEL_NAMES:
        setattr(kernels, n, getattr(backend, n))
    try:
        yield
    finally:
        for n, fn in saved.items():
            setattr(kernels, n, fn)


def bench_kernels(backend, mesh, u, fvec, dA, repeats):
    vols, grads = backend.tet_geometry(mesh.vertices, mesh.tets)
    curlmat, mass = backend.whitney_blocks(vols, grads,
                                           mesh.tet_edge_signs)
    out = np.zeros(mesh.n_edges)
    return {
        "tet_geometry":
            timeit(lambda: backend.tet_geometry(mesh.vertices, mesh.tets),
                   repeats),
        "whitney_blocks":
            timeit(lambda: backend.whitney_blocks(vols, grads,
                                                  mesh.tet_edge_signs),
                   repeats),
        "gather_curls":
            timeit(lambda: backend.gather_curls(curlmat, mesh.tet_edges, u),
                   repeats),
        "residual_accumulate":
            timeit(lambda: backend.residual_accumulate(
                curlmat, mass, mesh.tet_edges, vols, fvec, u, 0.5, out),
                   repeats),
        "jacobian_values":
            timeit(lambda: backend.jacobian_values(curlmat, mass, vols,
                                                   dA, 0.5),
                   repeats),
    }


def bench_assembly(backend, spec, pair, u_coeff, repeats):
    with lane(backend):
        mesh = generators.generate(spec)      # fresh mesh: no cached space
        field = fem.DiscreteField(mesh, u_coeff.copy())
        smap = {t: mat.ONE for t in np.unique(mesh.region_tag)}
        settings = fem.SolveSettings()

        def run():
            fem.assemble_residual(mesh, pair, smap, field, None, settings)
            fem.assemble_jacobian(mesh, pair, smap, field, settings)

        run()                                 # warm the per-mesh caches
        return timeit(run, repeats)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--h", type=float, default=0.125,
                    help="motor mesh spacing (default 0.125)")
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    try:
        compiled = kernels.get_backend("compiled")
    except ImportError:
        raise SystemExit("compiled kernels are not built; "
                         "run pip install -e . first")
    python = kernels.get_backend("python")

    spec = generators.GeometrySpec(kind="toy-motor", h=args.h)
    mesh = generators.generate(spec)
    print(f"toy-motor h={args.h}: {mesh.n_tets} tets, "
          f"{mesh.n_edges} edges; active backend: {kernels.BACKEND}")

    rng = np.random.default_rng(0)
    u = rng.normal(size=mesh.n_edges)
    fvec = rng.normal(size=(mesh.n_tets, 3))
    dA = np.tile(np.eye(3) * 2.0, (mesh.n_tets, 1, 1))

    t_py = bench_kernels(python, mesh, u, fvec, dA, args.repeats)
    t_cc = bench_kernels(compiled, mesh, u, fvec, dA, args.repeats)

    # quick cross-check so a lane mismatch can't hide behind the timings
    jp = python.jacobian_values(*_blocks(python, mesh), dA, 0.5)
    jc = compiled.jacobian_values(*_blocks(compiled, mesh), dA, 0.5)
    rel = np.max(np.abs(jp - jc)) / np.max(np.abs(jp))
    print(f"lane cross-check: max relative block diff {rel:.2e}\n")

    width = max(len(n) for n in KERNEL_NAMES)
    print(f"{'kernel':<{width}}  {'python':>10}  {'compiled':>10}  speedup")
    for name in KERNEL_NAMES:
        p, c = t_py[name], t_cc[name]
        print(f"{name:<{width}}  {p * 1e3:>8.2f}ms  {c * 1e3:>8.2f}ms  "
              f"{p / c:>6.2f}x")

    pair = mat.MaterialPair()
    a_py = bench_assembly(python, spec, pair, u, args.repeats)
    a_cc = bench_assembly(compiled, spec, pair, u, args.repeats)
    print(f"\n{'residual+jacobian':<{width}}  {a_py * 1e3:>8.2f}ms  "
          f"{a_cc * 1e3:>8.2f}ms  {a_py / a_cc:>6.2f}x")


def _blocks(backend, mesh):
    vols, grads = backend.tet_geometry(mesh.vertices, mesh.tets)
    curlmat, mass = backend.whitney_blocks(vols, grads,
                                           mesh.tet_edge_signs)
    return curlmat, mass, vols


if __name__ == "__main__":
    main()
