"""Benchmark the compiled kernel against the pure-numpy fallback.

Times the three hot operations on a representative scene (batched rollout
scoring at filter-call shape, a full sensor sweep, and a distance-field
rebuild) and prints per-call timings plus speedups.
"""

from __future__ import annotations

import time

import numpy as np

from semsafe._kernel import fallback, make_tables


def _backends() -> list[tuple[str, object]]:
    out = [("python", fallback)]
    try:
        from semsafe._kernel import _core

        out.insert(0, ("compiled", _core))
    except ImportError:
        pass
    return out


def _scene(rng: np.random.Generator):
    h, w = 160, 240
    res = 0.05
    occ = np.zeros((h, w), dtype=bool)
    occ[0, :] = occ[-1, :] = True
    occ[:, 0] = occ[:, -1] = True
    occ[50:70, 100:140] = True
    occ[100:120, 60:90] = True
    base = fallback.sdf_from_mask(occ, res)
    obj = np.zeros((h, w), dtype=bool)
    obj[80:100, 150:180] = True
    obj_sdf = fallback.sdf_from_mask(obj, res)
    tables = make_tables(base, res, [(0, obj_sdf, 0.25, None, None),
                                     (2, obj_sdf, 0.5, 0.45, 0.3),
                                     (1, None, 0.0, 0.5, None)])
    occ_idx = np.where(occ, 1, -1).astype(np.int16)
    controls = rng.normal(0.0, 0.7, (51, 20, 2))
    np.clip(controls[..., 0], -1.0, 1.0, out=controls[..., 0])
    np.clip(controls[..., 1], -3.0, 3.0, out=controls[..., 1])
    return tables, occ_idx, occ, controls, res


def _time(fn, repeats: int) -> float:
    fn()  # warm-up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def run_benchmark(repeats: int = 5) -> dict:
    rng = np.random.default_rng(7)
    tables, occ_idx, occ, controls, res = _scene(rng)
    x0 = (3.0, 4.0, 0.3, 1.2)
    bearings = np.linspace(-np.pi, np.pi, 180, endpoint=False)
    results: dict[str, dict[str, float]] = {}
    for name, impl in _backends():
        results[name] = {
            "rollout_score_51x20": _time(
                lambda: impl.rollout_min_margins(x0, controls, 0.05, 1.5, tables), repeats),
            "raycast_180": _time(
                lambda: impl.raycast(occ_idx, 3.0, 4.0, bearings, 6.0, res), repeats),
            "distance_field_160x240": _time(
                lambda: impl.sdf_from_mask(occ, res), repeats),
        }
    ops = list(next(iter(results.values())))
    print(f"{'operation':26s}" + "".join(f"{n:>14s}" for n in results) +
          ("       speedup" if len(results) == 2 else ""))
    for op in ops:
        row = f"{op:26s}"
        vals = [results[n][op] for n in results]
        for v in vals:
            row += f"{v * 1e3:11.3f} ms"
        if len(vals) == 2 and vals[0] > 0:
            row += f"{vals[1] / vals[0]:12.1f}x"
        print(row)
    return results
