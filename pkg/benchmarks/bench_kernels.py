"""Timing comparison of the compiled weight-row kernel vs the NumPy fallback.

Run with::

    python3 benchmarks/bench_kernels.py [--repeats 5]

Builds a realistic 2d problem (butterfly domain), then times operator_rows
for the evaluation, Laplacian, and directional operators under both backend
implementations on identical inputs.  Results must agree to rounding; the
table reports the median wall time per call and the speedup.
"""

import argparse
import time

import numpy as np

from phsfd import kernels
from phsfd.assembly import assign_stencils
from phsfd.geometry import butterfly_domain
from phsfd.kernels import (OP_DIRECTIONAL, OP_EVAL, OP_LAPLACIAN, _core_np,
                           operator_rows)
from phsfd.pointsets import build_point_sets
from phsfd.stencil import StencilConfig, build_stencil_set

try:
    from phsfd.kernels import _core
except ImportError:
    _core = None


def build_case(spacing, degree):
    geometry = butterfly_domain()
    config = StencilConfig(degree=degree, dimension=2)
    points = build_point_sets(geometry, spacing, config.size, seed=0)
    stencils = build_stencil_set(points.nodes, config)
    eval_points = np.ascontiguousarray(points.all_points())
    assignment = np.ascontiguousarray(
        assign_stencils(eval_points, stencils.shifts), dtype=np.int64)
    directions = np.tile([0.6, 0.8], (len(eval_points), 1))
    return stencils, eval_points, assignment, directions


def time_call(fn, repeats):
    best = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best.append(time.perf_counter() - start)
    return float(np.median(best))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--spacing", type=float, default=0.02)
    parser.add_argument("--degree", type=int, default=4)
    args = parser.parse_args()

    if _core is None:
        raise SystemExit("compiled extension not importable; "
                         "nothing to compare")

    stencils, eval_points, assignment, directions = build_case(
        args.spacing, args.degree)
    print(f"case: butterfly, h={args.spacing}, p={args.degree}, "
          f"{len(stencils)} stencils, {len(eval_points)} evaluation points")

    ops = [("eval", OP_EVAL, None),
           ("laplacian", OP_LAPLACIAN, None),
           ("directional", OP_DIRECTIONAL, directions)]
    header = f"{'operator':<12} {'compiled':>12} {'numpy':>12} {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name, code, dirs in ops:
        def run(impl):
            return operator_rows(eval_points, assignment,
                                 stencils.node_coords, stencils.solve_blocks,
                                 stencils.shifts, stencils.scales,
                                 stencils.config.exponents, code,
                                 directions=dirs, impl=impl)

        fast = run(_core)
        slow = run(_core_np)
        err = np.max(np.abs(fast - slow)) / max(np.max(np.abs(slow)), 1e-300)
        if err > 1e-12:
            raise SystemExit(f"{name}: backends disagree (rel err {err:.2e})")
        t_fast = time_call(lambda: run(_core), args.repeats)
        t_slow = time_call(lambda: run(_core_np), args.repeats)
        print(f"{name:<12} {t_fast * 1e3:>10.2f}ms {t_slow * 1e3:>10.2f}ms "
              f"{t_slow / t_fast:>8.1f}x")
    print(f"active backend at import time: {kernels.BACKEND}")


if __name__ == "__main__":
    main()
