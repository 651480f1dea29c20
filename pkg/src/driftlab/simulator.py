"""Seeded Euler-Maruyama trajectory generator for affine drift strategies.

One step of the discrete scheme is

    x_next = clip(x + (A x + b) * dt + sigma * sqrt(dt) * eps, low, high)

with eps a standard-normal vector. Noise comes from a counter-based
(Philox) generator keyed by (base_seed, session_index, iteration), so a
session set is bitwise reproducible no matter how the sessions are
scheduled or parallelized.

Ships the four built-in strategy presets (EF, SF, FF, AI) as diagonal
drift matrices with zero intercept and a default diffusion of 0.5 * I.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .core import (
    DimensionMismatch,
    ObjectiveVector,
    SessionSet,
    StrategySpec,
    Trajectory,
)

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

# Diagonal drift coefficients of the built-in presets, axis order
# [security, efficiency, functionality].
PRESET_DRIFT_DIAGONALS: dict[str, tuple[float, float, float]] = {
    "EF": (0.0, 0.16, 0.0),
    "SF": (0.08, -0.75, 0.0),
    "FF": (-0.82, -0.88, 0.9),
    "AI": (0.08, 0.08, 0.08),
}

DEFAULT_SIGMA = 0.5


def _splitmix64(z: int) -> int:
    """Stable 64-bit integer hash (splitmix64 finalizer)."""
    z = (z + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def session_seed(base_seed: int, session_index: int) -> int:
    """Per-session stream seed: base_seed XOR hash(session_index)."""
    return (base_seed & _MASK64) ^ _splitmix64(session_index)


def _stream(base_seed: int, session_index: int, counter_tag: int) -> np.random.Generator:
    # Iteration goes in the high counter word: low words are consumed as the
    # generator runs, so distinct tags can never overlap.
    bitgen = np.random.Philox(
        counter=[0, 0, 0, counter_tag],
        key=[session_seed(base_seed, session_index), _GOLDEN],
    )
    return np.random.Generator(bitgen)


def step_noise(base_seed: int, session_index: int, iteration: int, n: int) -> np.ndarray:
    """The standard-normal draw used for step `iteration` of one session."""
    return _stream(base_seed, session_index, iteration + 1).standard_normal(n)


def preset(strategy_id: str, sigma: float = DEFAULT_SIGMA) -> StrategySpec:
    """One of the built-in strategies with diffusion sigma * I."""
    try:
        diag = PRESET_DRIFT_DIAGONALS[strategy_id]
    except KeyError:
        raise KeyError(
            f"unknown preset {strategy_id!r}; choose from {sorted(PRESET_DRIFT_DIAGONALS)}"
        ) from None
    n = len(diag)
    return StrategySpec(
        id=strategy_id,
        drift_matrix=np.diag(diag),
        drift_intercept=np.zeros(n),
        diffusion=sigma * np.eye(n),
    )


def preset_catalog(sigma: float = DEFAULT_SIGMA) -> dict[str, StrategySpec]:
    return {sid: preset(sid, sigma) for sid in PRESET_DRIFT_DIAGONALS}


@dataclass(frozen=True)
class SimConfig:
    """Parameters of one batch simulation.

    initial_state "fixed-center" (or None) means the midpoint of the clip
    box, [5, ..., 5] when clipping is disabled. init_box, when given as
    (low, high), overrides it with a per-session uniform draw. clip_bounds
    None disables clipping entirely.
    """

    strategy: StrategySpec
    sessions: int = 1
    iterations: int = 1
    dt: float = 1.0
    initial_state: ObjectiveVector | str | None = "fixed-center"
    base_seed: int = 0
    clip_bounds: tuple[float, float] | None = (0.0, 10.0)
    init_box: tuple[float, float] | None = None

    def __post_init__(self):
        if self.sessions < 1:
            raise ValueError(f"sessions must be >= 1, got {self.sessions}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.clip_bounds is not None and not self.clip_bounds[0] < self.clip_bounds[1]:
            raise ValueError(f"clip bounds must satisfy low < high, got {self.clip_bounds}")
        if isinstance(self.initial_state, str) and self.initial_state != "fixed-center":
            raise ValueError(f"unknown initial_state {self.initial_state!r}")
        if isinstance(self.initial_state, ObjectiveVector) \
                and self.initial_state.dimension != self.strategy.dimension:
            raise DimensionMismatch(
                f"initial state dimension {self.initial_state.dimension} != "
                f"strategy dimension {self.strategy.dimension}"
            )


def drift(strategy: StrategySpec, x: ObjectiveVector | np.ndarray) -> np.ndarray:
    """Deterministic instantaneous change A x + b."""
    xv = x.values if isinstance(x, ObjectiveVector) else np.asarray(x, dtype=np.float64)
    if xv.shape != (strategy.dimension,):
        raise DimensionMismatch(
            f"state shape {xv.shape} != strategy dimension ({strategy.dimension},)"
        )
    return strategy.drift_matrix @ xv + strategy.drift_intercept


def em_step(
    x: ObjectiveVector | np.ndarray,
    strategy: StrategySpec,
    dt: float,
    noise: np.ndarray,
    bounds: tuple[float, float] | None = (0.0, 10.0),
) -> ObjectiveVector:
    """One Euler-Maruyama step. Noise is supplied by the caller (determinism)."""
    xv = x.values if isinstance(x, ObjectiveVector) else np.asarray(x, dtype=np.float64)
    eps = np.asarray(noise, dtype=np.float64)
    if eps.shape != xv.shape:
        raise DimensionMismatch(f"noise shape {eps.shape} != state shape {xv.shape}")
    nxt = xv + drift(strategy, xv) * dt + strategy.diffusion @ eps * np.sqrt(dt)
    if bounds is not None:
        nxt = np.clip(nxt, bounds[0], bounds[1])
    return ObjectiveVector(nxt)


def _resolve_initial(cfg: SimConfig, session_index: int) -> np.ndarray:
    n = cfg.strategy.dimension
    if cfg.init_box is not None:
        low, high = cfg.init_box
        return _stream(cfg.base_seed, session_index, 0).uniform(low, high, size=n)
    if isinstance(cfg.initial_state, ObjectiveVector):
        return np.array(cfg.initial_state.values)
    if cfg.clip_bounds is not None:
        center = (cfg.clip_bounds[0] + cfg.clip_bounds[1]) / 2.0
    else:
        center = 5.0
    return np.full(n, center)


def session_label(session_index: int) -> str:
    return f"s{session_index:03d}"


def simulate_session(cfg: SimConfig, session_index: int) -> Trajectory:
    """Generate one session; fully determined by (base_seed, session_index)."""
    if session_index >= cfg.sessions:
        raise ValueError(f"session index {session_index} >= sessions {cfg.sessions}")
    n = cfg.strategy.dimension
    x = _resolve_initial(cfg, session_index)
    points = [ObjectiveVector(x)]
    for t in range(cfg.iterations):
        eps = step_noise(cfg.base_seed, session_index, t, n)
        nxt = em_step(points[-1], cfg.strategy, cfg.dt, eps, bounds=cfg.clip_bounds)
        points.append(nxt)
    return Trajectory(session_label(session_index), cfg.strategy.id, points)


def simulate_set(cfg: SimConfig) -> SessionSet:
    """All sessions of a config, assembled in session-index order."""
    trajs = [simulate_session(cfg, i) for i in range(cfg.sessions)]
    return SessionSet(cfg.strategy.id, trajs)


def strategy_from_catalog(
    name: str, catalog: Mapping[str, StrategySpec] | None = None
) -> StrategySpec:
    cat = preset_catalog() if catalog is None else catalog
    if name not in cat:
        raise KeyError(f"unknown strategy {name!r}; catalog has {sorted(cat)}")
    return cat[name]
