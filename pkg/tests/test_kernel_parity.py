"""Both kernel backends must produce the same numbers.

The compiled extension and the numpy fallback implement identical math;
these tests hold them to near-bit agreement on random inputs.
"""

import numpy as np
import pytest

from semsafe._kernel import fallback, make_tables

compiled = pytest.importorskip("semsafe._kernel._core")


def _random_tables(rng):
    h, w = int(rng.integers(8, 40)), int(rng.integers(8, 40))
    base = rng.uniform(-1.0, 3.0, (h, w))
    constraints = []
    for _ in range(int(rng.integers(0, 4))):
        kind = int(rng.integers(0, 3))
        grid = rng.uniform(-1.0, 3.0, (h, w)) if kind != 1 else None
        v_lim = float(rng.uniform(0.2, 1.5)) if kind != 0 and rng.random() < 0.8 else None
        w_lim = float(rng.uniform(0.2, 1.0)) if kind != 0 and rng.random() < 0.5 else None
        if kind != 0 and v_lim is None and w_lim is None:
            v_lim = 0.5
        constraints.append((kind, grid, float(rng.uniform(0, 0.5)), v_lim, w_lim))
    return make_tables(base, 0.05, constraints)


def test_rollout_scores_agree(rng):
    for _ in range(20):
        tables = _random_tables(rng)
        n, horizon = int(rng.integers(1, 40)), int(rng.integers(1, 25))
        controls = rng.normal(0.0, 1.0, (n, horizon, 2))
        np.clip(controls[..., 0], -1.0, 1.0, out=controls[..., 0])
        np.clip(controls[..., 1], -3.0, 3.0, out=controls[..., 1])
        x0 = (float(rng.uniform(0, 1.5)), float(rng.uniform(0, 1.5)),
              float(rng.uniform(-3, 3)), float(rng.uniform(0, 1.5)))
        a = compiled.rollout_min_margins(x0, controls, 0.05, 1.5, tables)
        b = fallback.rollout_min_margins(x0, controls, 0.05, 1.5, tables)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_raycast_agrees(rng):
    for _ in range(20):
        h, w = int(rng.integers(10, 60)), int(rng.integers(10, 60))
        occ = np.full((h, w), -1, dtype=np.int16)
        for i in range(int(rng.integers(1, 6))):
            y, x = int(rng.integers(h)), int(rng.integers(w))
            occ[y, x] = i
        res = 0.05
        px = float(rng.uniform(0.1, (w - 1) * res))
        py = float(rng.uniform(0.1, (h - 1) * res))
        bearings = rng.uniform(-np.pi, np.pi, 90)
        ra, ha = compiled.raycast(occ, px, py, bearings, 4.0, res)
        rb, hb = fallback.raycast(occ, px, py, bearings, 4.0, res)
        np.testing.assert_allclose(ra, rb, rtol=0, atol=1e-12)
        assert np.array_equal(ha, hb)


def test_distance_transform_agrees(rng):
    for _ in range(30):
        h, w = int(rng.integers(4, 70)), int(rng.integers(4, 70))
        mask = rng.random((h, w)) < rng.uniform(0.02, 0.5)
        if not mask.any():
            mask[h // 2, w // 2] = True
        a = compiled.sdf_from_mask(mask, 0.05)
        b = fallback.sdf_from_mask(mask, 0.05)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-9)


def test_force_fallback_env_var_selects_python(tmp_path):
    import subprocess
    import sys

    code = "import semsafe._kernel as k; print(k.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                         env={"SEMSAFE_FORCE_FALLBACK": "1", "PATH": "/usr/bin:/bin"})
    assert out.stdout.strip() == "python"
