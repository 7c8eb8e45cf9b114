"""Grounding parsed constraints into distance fields and scalar margins.

Labeled ray hits accumulate into per-constraint hit-count grids; cells
confirmed by enough hits feed an exact Euclidean distance transform. Each
grounded constraint exposes a meters-equivalent margin: spatial exclusion
is clearance minus buffer, kinematic modulation is the scaled velocity
headroom, and hybrid constraints are safe when either far enough away or
slow enough. Failure is margin <= 0; the combined margin is the minimum
over the base field and every grounded constraint.

Velocity margins are scaled by a time constant (seconds) and angular
margins by a lever arm (meters) so that every term is commensurate with
the distance terms inside min/max compositions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from semsafe import _kernel
from semsafe._kernel import (
    KIND_EXCLUSION,
    KIND_HYBRID,
    KIND_KINEMATIC,
    MarginTables,
    make_tables,
    margin_scalar,
)
from semsafe.core import Control, RobotState
from semsafe.language import ConfigSet, Kind, SafetyConfig
from semsafe.world import SemanticScan, World


class StaleGroundingError(RuntimeError):
    """A constraint was evaluated against an out-of-date distance field."""


@dataclass(frozen=True)
class GroundingParams:
    tau: int = 3                 # hits before a cell is confirmed
    r_large: float = 1e6         # clearance sentinel for empty occupancy
    ts: float = 1.0              # velocity margin time constant, seconds
    lever: float = 0.25          # angular margin lever arm, meters
    coarse_dilation: float = 0.5 # confirmed-mask dilation in coarse mode
    # Surface hits imply occupancy extending into the object: each matching
    # ray also marks cells this far behind the hit point (the 2D analog of
    # a truncated-signed-distance integration band). Without it, flat
    # regions ground as thin shells with no interior depth.
    band: float = 0.25


# --- label matching ----------------------------------------------------------

_WORD = re.compile(r"[a-z0-9]+")


def _tokens(label: str) -> tuple[str, ...]:
    toks = _WORD.findall(label.lower())
    out = []
    for t in toks:
        if len(t) > 3 and t.endswith("s") and not t.endswith("ss"):
            t = t[:-1]
        out.append(t)
    return tuple(out)


def _load_synonyms() -> frozenset[frozenset[str]]:
    pairs = []
    raw = resources.files("semsafe").joinpath("assets/synonyms.tsv").read_text()
    for line in raw.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) == 2:
            pairs.append(frozenset((" ".join(_tokens(parts[0])), " ".join(_tokens(parts[1])))))
    return frozenset(p for p in pairs if len(p) == 2)


_SYNONYMS = _load_synonyms()


def match_label(obj: str, hit_label: str) -> bool:
    """Token-overlap label matching with a shipped synonym table.

    Tokens, not substrings: ("tree", "street") is False while
    ("standing desk", "desk") is True and ("sofa", "couch") matches via
    the table.
    """
    if not obj or not hit_label:
        return False
    ta, tb = _tokens(obj), _tokens(hit_label)
    if set(ta) & set(tb):
        return True
    pa, pb = " ".join(ta), " ".join(tb)
    if frozenset((pa, pb)) in _SYNONYMS:
        return True
    for a in ta:
        for b in tb:
            if frozenset((a, b)) in _SYNONYMS:
                return True
    return False


# --- beliefs and distance fields ---------------------------------------------

@dataclass(frozen=True)
class ObjectBelief:
    config_id: str
    label: str
    hit_counts: np.ndarray   # (H, W) uint32
    confirmed: np.ndarray    # (H, W) bool, monotone under integration
    tau: int
    version: int = 0         # bumps only when confirmed gains cells


def new_belief(config_id: str, label: str, shape: tuple[int, int], tau: int) -> ObjectBelief:
    return ObjectBelief(
        config_id=config_id,
        label=label,
        hit_counts=np.zeros(shape, dtype=np.uint32),
        confirmed=np.zeros(shape, dtype=bool),
        tau=tau,
    )


def integrate_scan(belief: ObjectBelief, scan: SemanticScan,
                   resolution: float, band: float = GroundingParams.band) -> ObjectBelief:
    """Accumulate matching labeled hits into the belief's hit counts.

    Each matching ray marks its hit cell plus the cells up to `band`
    meters behind the hit along the ray (the surface observation implies
    occupancy extends inward). No free-space carving: the world is static,
    occupancy only grows. Returns the input belief unchanged when no ray
    matches.
    """
    h, w = belief.hit_counts.shape
    rows, cols = [], []
    half_step = resolution * 0.5
    for i, label in enumerate(scan.hit_labels):
        if label is None or not match_label(belief.label, label):
            continue
        ang = scan.pose.theta + scan.bearings[i]
        dx, dy = np.cos(ang), np.sin(ang)
        seen: set[tuple[int, int]] = set()
        depth = 0.0
        while depth <= band:
            px = scan.pose.px + (scan.ranges[i] + depth) * dx
            py = scan.pose.py + (scan.ranges[i] + depth) * dy
            iy, ix = int(py / resolution), int(px / resolution)
            if 0 <= iy < h and 0 <= ix < w:
                seen.add((iy, ix))
            depth += half_step
        for iy, ix in seen:
            rows.append(iy)
            cols.append(ix)
    if not rows:
        return belief
    counts = belief.hit_counts.copy()
    np.add.at(counts, (rows, cols), 1)
    confirmed = belief.confirmed | (counts >= belief.tau)
    grew = bool(confirmed.sum() > belief.confirmed.sum())
    return replace(
        belief,
        hit_counts=counts,
        confirmed=confirmed,
        version=belief.version + 1 if grew else belief.version,
    )


@dataclass(frozen=True)
class SdfGrid:
    values: np.ndarray   # meters to nearest occupied cell center; 0 on occupied
    resolution: float
    stamp: int = 0


def rebuild_sdf(source: ObjectBelief | np.ndarray, resolution: float | None = None,
                r_large: float = GroundingParams.r_large, stamp: int | None = None,
                dilation: float = 0.0) -> SdfGrid:
    """Exact signed Euclidean distance field over confirmed occupancy.

    Values are the distance to the nearest occupied cell center outside,
    zero on occupied boundary cells, and negative inside (interior depth).
    Empty occupancy yields the r_large sentinel everywhere. A positive
    dilation grows the occupied set by that radius first (the coarse-mask
    ablation mode).
    """
    if isinstance(source, ObjectBelief):
        mask = source.confirmed
        stamp = source.version if stamp is None else stamp
    else:
        mask = np.asarray(source, dtype=bool)
        stamp = 0 if stamp is None else stamp
    if resolution is None:
        raise ValueError("resolution required")
    if not mask.any():
        values = np.full(mask.shape, r_large, dtype=np.float64)
    else:
        if dilation > 0.0:
            mask = _kernel.sdf_from_mask(mask, resolution) <= dilation
        values = _kernel.signed_field(mask, resolution)
    values.setflags(write=False)
    return SdfGrid(values=values, resolution=resolution, stamp=stamp)


# --- grounded constraints ------------------------------------------------------

_KIND_CODE = {
    Kind.SPATIAL_EXCLUSION: KIND_EXCLUSION,
    Kind.KINEMATIC_MODULATION: KIND_KINEMATIC,
    Kind.HYBRID: KIND_HYBRID,
}


@dataclass(frozen=True)
class GroundedConstraint:
    config: SafetyConfig
    belief: ObjectBelief | None = None
    sdf: SdfGrid | None = None
    ts: float = GroundingParams.ts
    lever: float = GroundingParams.lever

    def __post_init__(self) -> None:
        spatial = self.config.kind is not Kind.KINEMATIC_MODULATION
        if spatial and self.sdf is None:
            raise ValueError("spatial constraint requires a distance field")
        if not spatial and (self.belief is not None or self.sdf is not None):
            raise ValueError("global modulation carries no grounding grids")


def _interp(sdf: SdfGrid, x: RobotState) -> float:
    from semsafe._kernel.fallback import _bilinear_vec

    return float(
        _bilinear_vec(sdf.values, np.array([x.px]), np.array([x.py]), sdf.resolution)[0]
    )


def eval_constraint(gc: GroundedConstraint, x: RobotState, u: Control | None = None) -> float:
    """Meters-equivalent margin of one constraint; failure is <= 0.

    Kinematic terms use the state velocity and the commanded angular rate
    of the control being scored; a missing control means zero command (the
    terminal-state convention).
    """
    cfg = gc.config
    if cfg.kind is not Kind.KINEMATIC_MODULATION:
        if gc.sdf.stamp != (gc.belief.version if gc.belief is not None else gc.sdf.stamp):
            raise StaleGroundingError(f"stale grounding for config {cfg.id}")
        spatial = _interp(gc.sdf, x) - cfg.buffer
        if cfg.kind is Kind.SPATIAL_EXCLUSION:
            return spatial
    omega = abs(u.omega) if u is not None else 0.0
    kin = np.inf
    if cfg.vel_max is not None:
        kin = gc.ts * (cfg.vel_max - x.v)
    if cfg.angular_vel_max is not None:
        kin = min(kin, gc.lever * (cfg.angular_vel_max - omega))
    if cfg.kind is Kind.KINEMATIC_MODULATION:
        return float(kin - cfg.buffer)
    return float(max(spatial, kin))


@dataclass(frozen=True)
class FailureSetView:
    """Immutable snapshot the planner, filter, and referee evaluate against."""

    constraints: tuple[GroundedConstraint, ...]
    base_sdf: SdfGrid
    tables: MarginTables
    stamp: int = 0

    def combined(self, x: RobotState, u: Control | None = None) -> float:
        return margin_scalar(
            self.tables, x.px, x.py, x.v, u.omega if u is not None else 0.0
        )

    def margin_field(self, v: float = 0.0, omega: float = 0.0) -> np.ndarray:
        return _kernel.margin_field(self.tables, v=v, omega=omega)


def eval_combined(view: FailureSetView, x: RobotState, u: Control | None = None) -> float:
    """min over the base margin and every grounded constraint margin."""
    return view.combined(x, u)


def build_view(base_sdf: SdfGrid, constraints: list[GroundedConstraint],
               params: GroundingParams, stamp: int = 0) -> FailureSetView:
    packed = []
    for gc in constraints:
        cfg = gc.config
        packed.append(
            (
                _KIND_CODE[cfg.kind],
                gc.sdf.values if gc.sdf is not None else None,
                cfg.buffer,
                cfg.vel_max,
                cfg.angular_vel_max,
            )
        )
    tables = make_tables(
        base_sdf.values, base_sdf.resolution, packed, ts=params.ts, lever=params.lever
    )
    return FailureSetView(
        constraints=tuple(constraints), base_sdf=base_sdf, tables=tables, stamp=stamp
    )


# --- pipeline -----------------------------------------------------------------

def _shadow_filter(configs: tuple[SafetyConfig, ...]) -> list[SafetyConfig]:
    """Most-recent config wins among same-object velocity constraints."""
    out: list[SafetyConfig] = []
    seen: set[tuple[Kind, str]] = set()
    for cfg in reversed(configs):
        if cfg.kind in (Kind.KINEMATIC_MODULATION, Kind.HYBRID):
            key = (cfg.kind, " ".join(_tokens(cfg.obj)))
            if key in seen:
                continue
            seen.add(key)
        out.append(cfg)
    out.reverse()
    return out


class GroundingPipeline:
    """Owns per-constraint beliefs and publishes consistent margin snapshots.

    Coarse mode reproduces an over-conservative grounding baseline: velocity
    constraints are unsupported (global ones dropped, hybrids treated as
    plain exclusions) and confirmed masks are dilated before the distance
    transform.
    """

    def __init__(self, world: World, params: GroundingParams | None = None,
                 coarse: bool = False):
        self.params = params or GroundingParams()
        self.coarse = coarse
        self.resolution = world.resolution
        self.shape = (world.height, world.width)
        self.base_sdf = SdfGrid(values=world.base_sdf, resolution=world.resolution, stamp=0)
        self._configs: tuple[SafetyConfig, ...] = ()
        self._beliefs: dict[str, ObjectBelief] = {}
        self._sdfs: dict[str, SdfGrid] = {}
        self._stamp = 0
        self._view: FailureSetView | None = None

    def _effective_configs(self) -> list[SafetyConfig]:
        cfgs = _shadow_filter(self._configs)
        if not self.coarse:
            return cfgs
        out = []
        for cfg in cfgs:
            if cfg.kind is Kind.KINEMATIC_MODULATION:
                continue  # exclusion-only baseline
            if cfg.kind is Kind.HYBRID:
                cfg = replace(cfg, kind=Kind.SPATIAL_EXCLUSION,
                              vel_max=None, angular_vel_max=None)
            out.append(cfg)
        return out

    def sync_configs(self, cset: ConfigSet) -> None:
        self._configs = cset.configs
        wanted = {c.id: c for c in self._effective_configs() if c.obj}
        for cid in list(self._beliefs):
            if cid not in wanted:
                del self._beliefs[cid]
                self._sdfs.pop(cid, None)
        for cid, cfg in wanted.items():
            if cid not in self._beliefs:
                self._beliefs[cid] = new_belief(cid, cfg.obj, self.shape, self.params.tau)
        self._view = None

    def integrate(self, scan: SemanticScan) -> bool:
        """Returns True when any confirmed mask grew (margins changed)."""
        confirmed_changed = False
        for cid, belief in list(self._beliefs.items()):
            updated = integrate_scan(belief, scan, self.resolution, band=self.params.band)
            if updated is not belief:
                self._beliefs[cid] = updated
                if updated.version != belief.version:
                    confirmed_changed = True
        if confirmed_changed:
            self._view = None
        return confirmed_changed

    def publish(self) -> FailureSetView:
        """Current consistent snapshot; distance fields rebuilt lazily."""
        if self._view is not None:
            return self._view
        dilation = self.params.coarse_dilation if self.coarse else 0.0
        constraints = []
        for cfg in self._effective_configs():
            belief = self._beliefs.get(cfg.id)
            sdf = None
            if cfg.obj:
                sdf = self._sdfs.get(cfg.id)
                if sdf is None or sdf.stamp != belief.version:
                    sdf = rebuild_sdf(belief, self.resolution,
                                      r_large=self.params.r_large, dilation=dilation)
                    self._sdfs[cfg.id] = sdf
            constraints.append(
                GroundedConstraint(config=cfg, belief=belief, sdf=sdf,
                                   ts=self.params.ts, lever=self.params.lever)
            )
        self._stamp += 1
        self._view = build_view(self.base_sdf, constraints, self.params, stamp=self._stamp)
        return self._view


def build_reference_view(world: World, configs: list[SafetyConfig],
                         params: GroundingParams | None = None) -> FailureSetView:
    """Referee view: constraints grounded on true footprints, no base term.

    Used for semantic-violation judgments, which must never depend on what
    the robot believed.
    """
    params = params or GroundingParams()
    shape = (world.height, world.width)
    neutral = SdfGrid(values=np.full(shape, params.r_large), resolution=world.resolution)
    constraints = []
    for cfg in _shadow_filter(tuple(configs)):
        belief = None
        sdf = None
        if cfg.obj:
            mask = world.true_mask_for(lambda lbl: match_label(cfg.obj, lbl))
            belief = new_belief(cfg.id, cfg.obj, shape, tau=1)
            belief = replace(belief, confirmed=mask, version=0)
            sdf = rebuild_sdf(mask, world.resolution, r_large=params.r_large, stamp=0)
        constraints.append(
            GroundedConstraint(config=cfg, belief=belief, sdf=sdf,
                               ts=params.ts, lever=params.lever)
        )
    return build_view(neutral, constraints, params)
