"""Compare the numba and pure-numpy kernel paths on a realistic workload.

Run twice to compare:

    python benchmarks/bench_kernels.py
    LLGPC_DISABLE_NUMBA=1 python benchmarks/bench_kernels.py
"""

import argparse
import time

import numpy as np

from llgpc import accel
from llgpc.fem import build_assemblies
from llgpc.harness import init_state
from llgpc.mesh import build_cube_mesh


def bench(label, fn, repeats):
    fn()  # warm up (numba compilation)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    dt = (time.perf_counter() - t0) / repeats
    print(f"{label:24s} {dt * 1e6:10.1f} us/call")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--mesh-n", type=int, default=16)
    ap.add_argument("--repeats", type=int, default=200)
    args = ap.parse_args()

    asm = build_assemblies(build_cube_mesh(args.mesh_n, 1.0))
    st = asm.stiffness
    n = asm.n
    print(f"numba enabled: {accel.NUMBA_ENABLED}")
    print(f"mesh: n={args.mesh_n}, {n} vertices, nnz={st.nnz}")

    rng = np.random.Generator(np.random.Philox(0))
    x = rng.normal(size=n)
    m = init_state(asm.mesh, "random", seed=1)
    v = rng.normal(size=(n, 3))
    out1 = np.empty(n)
    out3 = np.empty((n, 3))

    bench("csr_matvec", lambda: accel.csr_matvec(
        st.indptr, st.indices, st.data, x, out1), args.repeats)
    bench("csr_matvec3", lambda: accel.csr_matvec3(
        st.indptr, st.indices, st.data, v, out3), args.repeats)
    bench("predictor_apply", lambda: accel.predictor_apply(
        st.indptr, st.indices, st.data, asm.beta, m, v, 5e-4, 1.0, out3),
        args.repeats)


if __name__ == "__main__":
    main()
