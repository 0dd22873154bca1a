"""Numba vs numpy timings for the hot kernels.

    python benchmarks/bench_kernels.py            # kernel table
    python benchmarks/bench_kernels.py --e2e      # also whole CLI runs under both backends

Each kernel is run once to trigger compilation, checked against its numpy
twin, then timed with timeit (best of --repeat).
"""

import argparse
import os
import subprocess
import sys
import tempfile
import time
import timeit

import numpy as np
import scipy.sparse as sp

from sepmotion import _kernels as K
from sepmotion.model import ModelSpec


def cases(size: str):
    rng = np.random.default_rng(0)
    nx, nX = (261, 241) if size == "default" else (521, 481)
    spec = ModelSpec(kappa=0.5, a=1.0)
    x = np.linspace(-6.5, 6.5, nx)
    X = np.linspace(-6.0, 6.0, nX)
    xx, XX = np.meshgrid(x, X, indexing="ij")
    V = spec.potential(xx, XX)
    phi = rng.standard_normal((nx, nX))
    cx, cX = spec.kinetic_coefficients
    hx, hX = x[1] - x[0], X[1] - X[0]

    n_ch = 8
    E = rng.standard_normal((n_ch, nX))
    F = rng.standard_normal((n_ch, n_ch, nX))
    F = F - F.transpose(1, 0, 2)
    S = rng.standard_normal((n_ch, n_ch, nX))
    S = S + S.transpose(1, 0, 2)

    funcs = rng.standard_normal((nX, nx))
    w = np.full(nx, hx)
    d = np.abs(rng.standard_normal(20 * nX))
    valid = rng.random(d.size) > 0.05

    return {
        "hermite_table": ((20, np.linspace(-8, 8, 20 * nx)), {}),
        "apply_h2d": ((phi, hx, hX, cx, cX, V), {}),
        "track_phases": ((funcs, w), {}),
        "coupled_block_coo": ((E, F, S, 0.0625, hX, 2), {}),
        "local_maxima": ((d, valid), {}),
    }


def _coo_dense(t):
    rows, cols, vals = t
    n = int(max(rows.max(), cols.max())) + 1
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).toarray()


def _same(a, b) -> float:
    if isinstance(a, tuple):
        return max(_same(x, y) for x, y in zip(a, b))
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        return float("inf")
    return float(np.max(np.abs(a - b))) if a.size else 0.0


def bench(size: str, repeat: int, number: int):
    if not K.HAVE_NUMBA:
        sys.exit("numba is not installed")
    print(f"{'kernel':<20}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}{'max |diff|':>14}")
    for name, (args, kw) in cases(size).items():
        f_np = getattr(K, name + "_numpy")
        f_nb = getattr(K, name + "_numba")
        t0 = time.perf_counter()
        r_nb = f_nb(*args, **kw)
        compile_s = time.perf_counter() - t0
        r_np = f_np(*args, **kw)
        if name == "coupled_block_coo":
            # entry order differs between flavours; compare the summed matrices
            r_np, r_nb = _coo_dense(r_np), _coo_dense(r_nb)
        diff = _same(r_np, r_nb)
        t_np = min(timeit.repeat(lambda: f_np(*args, **kw), repeat=repeat, number=number)) / number
        t_nb = min(timeit.repeat(lambda: f_nb(*args, **kw), repeat=repeat, number=number)) / number
        print(f"{name:<20}{1e3 * t_np:>12.3f}{1e3 * t_nb:>12.3f}{t_np / t_nb:>10.1f}{diff:>14.2e}"
              f"   (first call {compile_s:.2f}s)")


def e2e(commands):
    print()
    print(f"{'command':<16}{'numpy s':>10}{'numba s':>10}")
    for cmd in commands:
        row = []
        for flag in ("1", "0"):
            env = dict(os.environ, SEPMOTION_DISABLE_NUMBA=flag)
            with tempfile.TemporaryDirectory() as tmp:
                t0 = time.perf_counter()
                subprocess.run([sys.executable, "-m", "sepmotion.cli", cmd, "--output", tmp],
                               env=env, check=True, stdout=subprocess.DEVNULL)
                row.append(time.perf_counter() - t0)
        print(f"{cmd:<16}{row[0]:>10.2f}{row[1]:>10.2f}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--size", choices=["default", "large"], default="default")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=3)
    ap.add_argument("--e2e", action="store_true")
    ap.add_argument("--commands", nargs="+", default=["exact", "hunter", "gcm", "channels"])
    a = ap.parse_args()
    bench(a.size, a.repeat, a.number)
    if a.e2e:
        e2e(a.commands)
