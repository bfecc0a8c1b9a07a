"""Compare the compiled kernels with the numpy fallback on representative sizes.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

from __future__ import annotations

import argparse
import json
import timeit

import numpy as np

from tnconv import _kernels_py

try:
    from tnconv import _kernels as _compiled
except ImportError:  # pragma: no cover - depends on the build
    _compiled = None


def cases(rng: np.random.Generator) -> dict[str, tuple]:
    k = 5
    return {
        "quad_max_affine": (
            rng.normal(size=(200, k)),
            rng.normal(size=(64, k)),
            rng.normal(size=64),
            rng.normal(size=(2048, k)) * 1e-3,
            np.full(2048, 1 / 2048),
        ),
        "min_dist_to_set": (rng.normal(size=(50_000, 4)), rng.normal(size=(5, 4))),
    }


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    rng = np.random.default_rng(0)
    out = {}
    for name, inputs in cases(rng).items():
        row = {"numpy": min(timeit.repeat(lambda: getattr(_kernels_py, name)(*inputs), number=1, repeat=args.repeat))}
        if _compiled is not None:
            fast = getattr(_compiled, name)
            row["cython"] = min(timeit.repeat(lambda: fast(*inputs), number=1, repeat=args.repeat))
            row["speedup"] = row["numpy"] / row["cython"]
            ref, got = getattr(_kernels_py, name)(*inputs), fast(*inputs)
            row["max_abs_difference"] = float(max(np.max(np.abs(np.asarray(a, float) - b)) for a, b in zip(ref, got)))
        out[name] = row
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
