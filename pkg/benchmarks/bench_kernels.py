#!/usr/bin/env python3
"""Backend benchmark: compiled kernels against the pure numpy fallback.

Times the four hot kernels on the production grid size and a full
integrator step through each backend. The full-step comparison runs in
subprocesses because the backend is chosen at import time.

Usage: python3 benchmarks/bench_kernels.py [--grid 16,16,8] [--repeat 2000]
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def time_call(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(5):
        t0 = time.perf_counter()
        for _ in range(repeat):
            fn()
        best = min(best, (time.perf_counter() - t0) / repeat)
    return best


def bench_kernels(grid_shape, repeat: int) -> dict:
    from fastspin_pe._kernels import _purepy

    backends = {"pure": _purepy}
    try:
        from fastspin_pe._kernels import _core
        backends["compiled"] = _core
    except ImportError:
        pass

    rng = np.random.default_rng(0)
    shape = (2, *grid_shape)
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    w = rng.random(grid_shape)
    cos_t, sin_t = np.cos(0.7), np.sin(0.7)

    out = {}
    for name, mod in backends.items():
        rows = {}
        rows["symmetrize"] = time_call(lambda: mod.symmetrize(c.copy()), repeat)
        rows["rotate_pair"] = time_call(lambda: mod.rotate_pair(c.copy(), cos_t, sin_t), repeat)
        rows["scale_modes"] = time_call(lambda: mod.scale_modes(c.copy(), w), repeat)
        rows["decay_rotate"] = time_call(lambda: mod.decay_rotate(c.copy(), w, cos_t, sin_t), repeat)
        out[name] = rows
    return out


_STEP_SNIPPET = """
import json, time
import numpy as np
from fastspin_pe import Grid, NoiseSpec, RngStream, State, StepScheme, Stepper
from fastspin_pe.dynamics import Rescaled
from fastspin_pe.profiles import random_h2
import fastspin_pe._kernels as K

grid = Grid(*{grid_shape})
noise = NoiseSpec.from_powerlaw(grid, 0.5, 3.0)
stepper = Stepper(grid, Rescaled(alpha=100.0), 1.0, StepScheme(dt=1e-3), noise)
s = random_h2(grid, 1.0, RngStream(3))
rng = RngStream(4).generator()
for i in range(10):
    s = stepper.step(s, i * 1e-3, rng)
n = {steps}
t0 = time.perf_counter()
for i in range(n):
    s = stepper.step(s, i * 1e-3, rng)
dt = (time.perf_counter() - t0) / n
print(json.dumps({{"compiled": K.COMPILED, "step_seconds": dt}}))
"""


def bench_full_step(grid_shape, steps: int) -> dict:
    out = {}
    for label, env_val in (("compiled", "0"), ("pure", "1")):
        env = dict(os.environ, FASTSPIN_PE_PURE=env_val)
        snippet = _STEP_SNIPPET.format(grid_shape=tuple(grid_shape), steps=steps)
        r = subprocess.run([sys.executable, "-c", snippet], env=env,
                           capture_output=True, text=True)
        if r.returncode != 0:
            print(r.stderr, file=sys.stderr)
            raise SystemExit(f"full-step benchmark failed for {label}")
        row = json.loads(r.stdout)
        if label == "compiled" and not row["compiled"]:
            print("note: compiled backend unavailable, both rows use the fallback")
        out[label] = row["step_seconds"]
    return out


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--grid", default="16,16,8")
    ap.add_argument("--repeat", type=int, default=2000)
    ap.add_argument("--steps", type=int, default=300)
    args = ap.parse_args()
    grid_shape = tuple(int(x) for x in args.grid.split(","))

    kernels = bench_kernels(grid_shape, args.repeat)
    print(f"grid {grid_shape}, per-call microseconds (best of 5 x {args.repeat}):")
    names = list(next(iter(kernels.values())))
    width = max(len(n) for n in names)
    for n in names:
        line = f"  {n:<{width}}"
        for backend in kernels:
            line += f"  {backend} {kernels[backend][n] * 1e6:8.2f}"
        if "compiled" in kernels:
            line += f"  speedup {kernels['pure'][n] / kernels['compiled'][n]:5.2f}x"
        print(line)

    full = bench_full_step(grid_shape, args.steps)
    print(f"full integrator step: compiled {full['compiled'] * 1e3:.3f} ms, "
          f"pure {full['pure'] * 1e3:.3f} ms, "
          f"speedup {full['pure'] / full['compiled']:.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
