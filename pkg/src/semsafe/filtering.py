"""Sampling-MPC safety scoring and the filtering policies built on it.

score() approximates the max-min safety margin over a control horizon by
iterative Gaussian refinement around an incumbent sequence; the incumbent
is always re-evaluated with the samples, so the returned score never
decreases across iterations. The least-restrictive filter passes the
nominal control whenever its one-step-ahead backup score clears a
threshold; the smooth-blending filter picks the admissible control
primitive closest to nominal under a decay condition on the safety score.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from semsafe import _kernel
from semsafe.core import Control, DynamicsParams, RobotState, clamp_control, step

DEFAULT_EPSILON = 0.25   # least-restrictive threshold, meters (robot base radius)
DEFAULT_GAMMA = 5.0      # blending decay rate, 1/s


@dataclass(frozen=True)
class SamplingMpcParams:
    n_samples: int = 50
    n_iters: int = 2
    horizon: int = 20
    sigma: tuple[float, float] = (0.5, 1.5)
    seed: int = 0
    # Optional discrete admissible sets per control dimension; samples snap
    # to the nearest entry instead of box-clamping (used by the discretized
    # oracle comparisons).
    lattice: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self) -> None:
        if self.n_samples < 1 or self.n_iters < 1 or self.horizon < 1:
            raise ValueError("n_samples, n_iters, horizon must be >= 1")
        if min(self.sigma) <= 0.0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class ScoreResult:
    v_safe: float
    best_seq: np.ndarray            # (H, 2), channels (omega, accel)
    u_shield: Control               # first element of best_seq
    iter_scores: tuple[float, ...]  # incumbent score after each iteration


class FilterMode(str, Enum):
    NOMINAL = "nominal"
    SHIELD = "shield"
    BLENDED = "blended"


@dataclass(frozen=True)
class FilterDecision:
    u_out: Control
    mode: FilterMode
    v_nom: float
    v_safe: float
    compute_time: float


@dataclass
class WarmStart:
    """Previous best control sequence, shifted forward between calls."""

    seq: np.ndarray

    @classmethod
    def zeros(cls, horizon: int) -> "WarmStart":
        return cls(seq=np.zeros((horizon, 2)))

    def update(self, best_seq: np.ndarray) -> None:
        self.seq = shift_seq(best_seq)


def shift_seq(seq: np.ndarray) -> np.ndarray:
    """Drop the executed first element; repeat the last."""
    out = np.empty_like(seq)
    out[:-1] = seq[1:]
    out[-1] = seq[-1]
    return out


def _snap_to_lattice(values: np.ndarray, options: np.ndarray) -> np.ndarray:
    options = np.asarray(options, dtype=np.float64)
    idx = np.argmin(np.abs(values[..., None] - options[None, ...]), axis=-1)
    return options[idx]


def _project(seqs: np.ndarray, dyn: DynamicsParams, p: SamplingMpcParams) -> np.ndarray:
    out = np.empty_like(seqs)
    if p.lattice is not None:
        out[..., 0] = _snap_to_lattice(seqs[..., 0], p.lattice[0])
        out[..., 1] = _snap_to_lattice(seqs[..., 1], p.lattice[1])
    else:
        out[..., 0] = np.clip(seqs[..., 0], -dyn.omega_max, dyn.omega_max)
        out[..., 1] = np.clip(seqs[..., 1], -dyn.accel_max, dyn.accel_max)
    return out


def _pad_sequence(seq: np.ndarray | None, horizon: int) -> np.ndarray:
    if seq is None or len(seq) == 0:
        return np.zeros((horizon, 2))
    seq = np.asarray(seq, dtype=np.float64).reshape(-1, 2)
    if seq.shape[0] >= horizon:
        return seq[:horizon].copy()
    pad = np.repeat(seq[-1:], horizon - seq.shape[0], axis=0)
    return np.concatenate([seq, pad], axis=0)


def batch_scores(x: RobotState, seqs: np.ndarray, env, dyn: DynamicsParams) -> np.ndarray:
    """min-over-horizon margins for a batch of control sequences.

    Uses the compiled kernel when the environment exposes packed margin
    tables; otherwise rolls out in Python against env.combined(x, u).
    Stage margins use the stage control; the terminal state is scored with
    zero control.
    """
    tables = getattr(env, "tables", None)
    if tables is not None:
        return _kernel.rollout_min_margins(x.as_tuple(), seqs, dyn.dt, dyn.v_max, tables)
    out = np.empty(seqs.shape[0])
    for n in range(seqs.shape[0]):
        state = x
        worst = np.inf
        for h in range(seqs.shape[1]):
            u = Control(float(seqs[n, h, 0]), float(seqs[n, h, 1]))
            worst = min(worst, env.combined(state, u))
            state = step(state, u, dyn)
        worst = min(worst, env.combined(state, None))
        out[n] = worst
    return out


def score(
    x_init: RobotState,
    init_seq: np.ndarray | None,
    env,
    p: SamplingMpcParams,
    dyn: DynamicsParams,
    rng: np.random.Generator | None = None,
    record=None,
) -> ScoreResult:
    """Iteratively refined sampling estimate of the max-min safety margin.

    Each iteration draws n_samples Gaussian perturbations of the incumbent
    sequence (projected into the admissible set), scores them together
    with the incumbent itself, and keeps the argmax. A negative v_safe
    means no safe backup trajectory was found.
    """
    rng = rng or np.random.default_rng(p.seed)
    sigma = np.asarray(p.sigma, dtype=np.float64)
    incumbent = _project(_pad_sequence(init_seq, p.horizon)[None, ...], dyn, p)[0]
    iter_scores: list[float] = []
    best = -np.inf
    for _ in range(p.n_iters):
        noise = rng.normal(0.0, 1.0, size=(p.n_samples, p.horizon, 2))
        cands = _project(incumbent[None, ...] + noise * sigma, dyn, p)
        batch = np.concatenate([incumbent[None, ...], cands], axis=0)
        scores = batch_scores(x_init, batch, env, dyn)
        k = int(np.argmax(scores))  # ties resolve to the incumbent first
        incumbent = batch[k].copy()
        best = float(scores[k])
        iter_scores.append(best)
    result = ScoreResult(
        v_safe=best,
        best_seq=incumbent,
        u_shield=Control(float(incumbent[0, 0]), float(incumbent[0, 1])),
        iter_scores=tuple(iter_scores),
    )
    if record is not None:
        record({"event": "score", "iter_scores": iter_scores, "v_safe": best})
    return result


def filter_least_restrictive(
    x: RobotState,
    u_nom: Control,
    env,
    p: SamplingMpcParams,
    warm: WarmStart,
    eps: float = DEFAULT_EPSILON,
    dyn: DynamicsParams = DynamicsParams(),
    rng: np.random.Generator | None = None,
    record=None,
) -> FilterDecision:
    """Pass the nominal control while a safe backup clears the threshold.

    The nominal score is min(l(x, u_nom), V_safe(f(x, u_nom))): the margin
    of executing u_nom now and still having the best discovered backup
    afterwards. Below eps the filter executes the shield control from a
    fresh score at the current state.
    """
    t0 = time.perf_counter()
    u_nom = clamp_control(u_nom, dyn)
    l_now = env.combined(x, u_nom)
    x_next = step(x, u_nom, dyn)
    backup = score(x_next, shift_seq(warm.seq), env, p, dyn, rng=rng, record=record)
    v_nom = min(l_now, backup.v_safe)
    if v_nom > eps:
        warm.update(backup.best_seq)
        return FilterDecision(
            u_out=u_nom, mode=FilterMode.NOMINAL, v_nom=v_nom,
            v_safe=backup.v_safe, compute_time=time.perf_counter() - t0,
        )
    here = score(x, warm.seq, env, p, dyn, rng=rng, record=record)
    warm.update(here.best_seq)
    return FilterDecision(
        u_out=here.u_shield, mode=FilterMode.SHIELD, v_nom=v_nom,
        v_safe=here.v_safe, compute_time=time.perf_counter() - t0,
    )


def default_primitives(dyn: DynamicsParams, per_axis: int = 5) -> tuple[Control, ...]:
    omegas = np.linspace(-dyn.omega_max, dyn.omega_max, per_axis)
    accels = np.linspace(-dyn.accel_max, dyn.accel_max, per_axis)
    return tuple(Control(float(w), float(a)) for w in omegas for a in accels)


def filter_smooth_blending(
    x: RobotState,
    u_nom: Control,
    env,
    p: SamplingMpcParams,
    warm: WarmStart,
    gamma: float = DEFAULT_GAMMA,
    primitives: tuple[Control, ...] | None = None,
    dyn: DynamicsParams = DynamicsParams(),
    rng: np.random.Generator | None = None,
    record=None,
) -> FilterDecision:
    """Choose the admissible primitive closest to the nominal control.

    A primitive is admissible when its score satisfies the per-step decay
    condition V_prim - V >= -gamma*dt*V (gamma is a continuous-time decay
    rate; the dt scaling keeps the per-step retention factor in (0, 1] so
    positive scores stay positive). Falls back to the shield control when
    nothing is admissible.
    """
    t0 = time.perf_counter()
    primitives = primitives or default_primitives(dyn)
    here = score(x, warm.seq, env, p, dyn, rng=rng, record=record)
    v_cur = here.v_safe
    threshold = -gamma * dyn.dt * v_cur
    shifted = shift_seq(warm.seq)
    candidates = []
    for i, prim in enumerate(primitives):
        prim = clamp_control(prim, dyn)
        l_now = env.combined(x, prim)
        nxt = score(step(x, prim, dyn), shifted, env, p, dyn, rng=rng, record=record)
        v_prim = min(l_now, nxt.v_safe)
        if v_prim - v_cur >= threshold:
            dist = np.hypot(
                (prim.omega - u_nom.omega) / dyn.omega_max,
                (prim.accel - u_nom.accel) / dyn.accel_max,
            )
            candidates.append((dist, abs(prim.omega), abs(prim.accel), i, prim, nxt, v_prim))
    if candidates:
        candidates.sort(key=lambda c: c[:4])
        _, _, _, _, chosen, chosen_next, v_prim = candidates[0]
        assert v_prim - v_cur >= threshold
        warm.update(chosen_next.best_seq)
        return FilterDecision(
            u_out=chosen, mode=FilterMode.BLENDED, v_nom=v_prim,
            v_safe=v_cur, compute_time=time.perf_counter() - t0,
        )
    warm.update(here.best_seq)
    return FilterDecision(
        u_out=here.u_shield, mode=FilterMode.SHIELD, v_nom=v_cur,
        v_safe=v_cur, compute_time=time.perf_counter() - t0,
    )
