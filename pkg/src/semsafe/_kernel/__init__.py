"""Kernel backend selection.

The hot loops (batched rollout scoring, ray casting, distance transforms)
live in a compiled Cython extension; a pure-numpy implementation provides
the same API when the extension is missing. Set SEMSAFE_FORCE_FALLBACK=1
to force the numpy path (parity tests, benchmark).
"""

from __future__ import annotations

import os

from semsafe._kernel import fallback
from semsafe._kernel.tables import (
    KIND_EXCLUSION,
    KIND_HYBRID,
    KIND_KINEMATIC,
    MarginTables,
    make_tables,
)

if os.environ.get("SEMSAFE_FORCE_FALLBACK"):
    _impl = fallback
else:
    try:
        from semsafe._kernel import _core as _impl  # type: ignore[no-redef]
    except ImportError:  # extension not built; numpy path is fully equivalent
        _impl = fallback

BACKEND: str = _impl.BACKEND
rollout_min_margins = _impl.rollout_min_margins
raycast = _impl.raycast
sdf_from_mask = _impl.sdf_from_mask


def signed_field(mask, resolution: float):
    """Signed clearance field: distance to the nearest occupied cell center
    outside, zero on boundary cells, and negative with interior depth inside
    (d_out - max(d_in - res, 0), which stays 1-Lipschitz across cell pairs).
    """
    import numpy as np

    mask = np.asarray(mask, dtype=bool)
    d_out = _impl.sdf_from_mask(mask, resolution)
    inv = ~mask
    if inv.any():
        d_in = _impl.sdf_from_mask(inv, resolution)
    else:
        d_in = np.full(mask.shape, 1e6)
    return d_out - np.maximum(d_in - resolution, 0.0)

# Margin helpers are numpy-level regardless of backend; only the batched
# rollout inner loop is worth compiling.
margin_at = fallback.margin_at
margin_scalar = fallback.margin_scalar
margin_field = fallback.margin_field

__all__ = [
    "BACKEND",
    "KIND_EXCLUSION",
    "KIND_HYBRID",
    "KIND_KINEMATIC",
    "MarginTables",
    "make_tables",
    "fallback",
    "margin_at",
    "margin_field",
    "margin_scalar",
    "raycast",
    "rollout_min_margins",
    "sdf_from_mask",
    "signed_field",
]
