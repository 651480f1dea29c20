"""Shared domain types, validation, and deterministic serialization.

Everything downstream (simulation, estimation, spectral analysis, Pareto
reports, control loops) speaks in the types defined here. All types are
immutable after construction and safe to share across threads; the
operations are pure functions.

Score bounds (the 0-10 scale) are enforced once, at the ingestion
boundary (`validate_trajectory` / the JSONL reader), never re-checked in
hot loops. Generated data with clipping disabled may legitimately leave
the box and still flow through the estimation pipeline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Iterable, Iterator, Mapping, Sequence, TextIO

import numpy as np

SCORE_LOW = 0.0
SCORE_HIGH = 10.0

# Fixed axis order for the three-objective instantiation.
OBJECTIVE_NAMES = ("security", "efficiency", "functionality")


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------

class DomainError(Exception):
    """Base class for all validation and analysis errors in this package."""


class DimensionMismatch(DomainError):
    pass


class OutOfRangeScore(DomainError):
    pass


class TooShort(DomainError):
    pass


class InsufficientData(DomainError):
    pass


class RankDeficientDesign(DomainError):
    pass


class DegenerateVariance(DomainError):
    """A required variance is zero; `dimension` names the offending axis."""

    def __init__(self, message: str, dimension: int | None = None):
        super().__init__(message)
        self.dimension = dimension


class TailTooLong(DomainError):
    pass


class ScheduleExhausted(DomainError):
    pass


class InvalidExpectedLength(DomainError):
    pass


class NonSquare(DomainError):
    pass


class NonFinite(DomainError):
    pass


class RecordFormatError(DomainError):
    """Raised by the JSONL reader on malformed, gapped, or split sessions."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ObjectiveVector:
    """A point in the n-dimensional objective space (n >= 2).

    Components are unitless scores; finite-ness and dimension are checked
    here, the [0, 10] range only at ingestion (see module docstring).
    """

    values: np.ndarray

    def __init__(self, values: Sequence[float] | np.ndarray):
        arr = np.array(values, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 2:
            raise DimensionMismatch(
                f"objective vector must be 1-D with n >= 2, got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise NonFinite(f"objective vector has non-finite components: {arr}")
        object.__setattr__(self, "values", _readonly(arr))

    @property
    def dimension(self) -> int:
        return self.values.size

    def __len__(self) -> int:
        return self.values.size

    def __getitem__(self, i: int) -> float:
        return float(self.values[i])

    def __eq__(self, other) -> bool:
        if not isinstance(other, ObjectiveVector):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def to_list(self) -> list[float]:
        return [float(v) for v in self.values]


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Ordered iterates of one session: points indexed by iteration t = 0..T.

    Construction is permissive (any point count, mixed dimensions) so that
    `validate_trajectory` is the single place that accepts or rejects.
    """

    session_id: str
    strategy_id: str
    points: tuple[ObjectiveVector, ...]

    def __init__(self, session_id: str, strategy_id: str,
                 points: Iterable[ObjectiveVector | Sequence[float]]):
        object.__setattr__(self, "session_id", session_id)
        object.__setattr__(self, "strategy_id", strategy_id)
        norm = tuple(
            p if isinstance(p, ObjectiveVector) else ObjectiveVector(p)
            for p in points
        )
        object.__setattr__(self, "points", norm)

    def __len__(self) -> int:
        return len(self.points)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (self.session_id == other.session_id
                and self.strategy_id == other.strategy_id
                and len(self.points) == len(other.points)
                and all(a == b for a, b in zip(self.points, other.points)))

    @property
    def dimension(self) -> int:
        return self.points[0].dimension

    @cached_property
    def values_matrix(self) -> np.ndarray:
        """(T+1, n) matrix of all points; requires a consistent dimension."""
        dims = {p.dimension for p in self.points}
        if len(dims) != 1:
            raise DimensionMismatch(
                f"trajectory {self.session_id!r} mixes dimensions {sorted(dims)}"
            )
        return _readonly(np.stack([p.values for p in self.points]))


@dataclass(frozen=True, eq=False)
class SessionSet:
    """All trajectories collected under one strategy, with a fixed dimension."""

    strategy_id: str
    trajectories: tuple[Trajectory, ...]
    dimension: int

    def __init__(self, strategy_id: str, trajectories: Iterable[Trajectory],
                 dimension: int | None = None):
        trajs = tuple(trajectories)
        if not trajs:
            raise InsufficientData("session set must contain at least one trajectory")
        dims = {t.dimension for t in trajs}
        if len(dims) != 1:
            raise DimensionMismatch(f"session set mixes dimensions {sorted(dims)}")
        n = dims.pop()
        if dimension is not None and dimension != n:
            raise DimensionMismatch(f"declared dimension {dimension} != data dimension {n}")
        bad = [t.session_id for t in trajs if t.strategy_id != strategy_id]
        if bad:
            raise DomainError(f"sessions {bad} do not belong to strategy {strategy_id!r}")
        object.__setattr__(self, "strategy_id", strategy_id)
        object.__setattr__(self, "trajectories", trajs)
        object.__setattr__(self, "dimension", n)

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self.trajectories)


@dataclass(frozen=True, eq=False)
class StrategySpec:
    """Affine drift plus constant diffusion: mu(x) = A x + b, noise scale sigma."""

    id: str
    drift_matrix: np.ndarray
    drift_intercept: np.ndarray
    diffusion: np.ndarray

    def __init__(self, id: str, drift_matrix, drift_intercept, diffusion):
        A = np.array(drift_matrix, dtype=np.float64)
        b = np.array(drift_intercept, dtype=np.float64)
        S = np.array(diffusion, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise NonSquare(f"drift matrix must be square, got shape {A.shape}")
        n = A.shape[0]
        if S.shape != (n, n):
            raise DimensionMismatch(f"diffusion shape {S.shape} != ({n}, {n})")
        if b.shape != (n,):
            raise DimensionMismatch(f"intercept shape {b.shape} != ({n},)")
        for name, arr in (("drift_matrix", A), ("drift_intercept", b), ("diffusion", S)):
            if not np.all(np.isfinite(arr)):
                raise NonFinite(f"{name} has non-finite entries")
        object.__setattr__(self, "id", id)
        object.__setattr__(self, "drift_matrix", _readonly(A))
        object.__setattr__(self, "drift_intercept", _readonly(b))
        object.__setattr__(self, "diffusion", _readonly(S))

    @property
    def dimension(self) -> int:
        return self.drift_matrix.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, StrategySpec):
            return NotImplemented
        return (self.id == other.id
                and np.array_equal(self.drift_matrix, other.drift_matrix)
                and np.array_equal(self.drift_intercept, other.drift_intercept)
                and np.array_equal(self.diffusion, other.diffusion))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "drift_matrix": [[float(v) for v in row] for row in self.drift_matrix],
            "drift_intercept": [float(v) for v in self.drift_intercept],
            "diffusion": [[float(v) for v in row] for row in self.diffusion],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "StrategySpec":
        return cls(d["id"], d["drift_matrix"], d["drift_intercept"], d["diffusion"])


@dataclass(frozen=True, eq=False)
class DriftModel:
    """Fitted local affine drift: delta ~ A_hat x + b_hat, residual cov sigma_hat."""

    A_hat: np.ndarray
    b_hat: np.ndarray
    sigma_hat: np.ndarray
    sample_count: int

    def __init__(self, A_hat, b_hat, sigma_hat, sample_count: int):
        A = np.array(A_hat, dtype=np.float64)
        b = np.array(b_hat, dtype=np.float64)
        S = np.array(sigma_hat, dtype=np.float64)
        n = A.shape[0]
        if A.shape != (n, n) or S.shape != (n, n) or b.shape != (n,):
            raise DimensionMismatch(
                f"inconsistent shapes A{A.shape} b{b.shape} sigma{S.shape}"
            )
        if not np.allclose(S, S.T, atol=1e-12):
            raise DomainError("sigma_hat must be symmetric")
        if np.min(np.linalg.eigvalsh((S + S.T) / 2.0)) < -1e-10:
            raise DomainError("sigma_hat must be positive semi-definite")
        if sample_count < n + 1:
            raise InsufficientData(
                f"sample_count {sample_count} < n+1 = {n + 1}: regression unsolvable"
            )
        object.__setattr__(self, "A_hat", _readonly(A))
        object.__setattr__(self, "b_hat", _readonly(b))
        object.__setattr__(self, "sigma_hat", _readonly(S))
        object.__setattr__(self, "sample_count", int(sample_count))

    @property
    def dimension(self) -> int:
        return self.A_hat.shape[0]

    def predict(self, states: np.ndarray) -> np.ndarray:
        """One-step delta predictions for an (N, n) state matrix."""
        return states @ self.A_hat.T + self.b_hat

    def __eq__(self, other) -> bool:
        if not isinstance(other, DriftModel):
            return NotImplemented
        return (np.array_equal(self.A_hat, other.A_hat)
                and np.array_equal(self.b_hat, other.b_hat)
                and np.array_equal(self.sigma_hat, other.sigma_hat)
                and self.sample_count == other.sample_count)

    def to_dict(self) -> dict:
        return {
            "A_hat": [[float(v) for v in row] for row in self.A_hat],
            "b_hat": [float(v) for v in self.b_hat],
            "sigma_hat": [[float(v) for v in row] for row in self.sigma_hat],
            "sample_count": self.sample_count,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DriftModel":
        return cls(d["A_hat"], d["b_hat"], d["sigma_hat"], d["sample_count"])


@dataclass(frozen=True, eq=False)
class InterferenceMatrix:
    """Zero-diagonal symmetric matrix of cross-objective step-change correlations."""

    entries: np.ndarray

    def __init__(self, entries):
        E = np.array(entries, dtype=np.float64)
        if E.ndim != 2 or E.shape[0] != E.shape[1]:
            raise NonSquare(f"interference matrix must be square, got {E.shape}")
        if np.any(np.diag(E) != 0.0):
            raise DomainError("interference diagonal must be exactly zero")
        if not np.array_equal(E, E.T):
            raise DomainError("interference matrix must be symmetric")
        if np.any(np.abs(E) > 1.0):
            raise DomainError("interference entries must lie in [-1, 1]")
        object.__setattr__(self, "entries", _readonly(E))

    @property
    def dimension(self) -> int:
        return self.entries.shape[0]

    def __getitem__(self, ij: tuple[int, int]) -> float:
        return float(self.entries[ij])

    def __eq__(self, other) -> bool:
        if not isinstance(other, InterferenceMatrix):
            return NotImplemented
        return np.array_equal(self.entries, other.entries)

    def to_dict(self) -> dict:
        return {"entries": [[float(v) for v in row] for row in self.entries]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "InterferenceMatrix":
        return cls(d["entries"])


class Regime(Enum):
    EXPONENTIAL = "Exponential"
    OSCILLATORY = "Oscillatory"
    BOUNDARY = "Boundary"
    UNSTABLE = "Unstable"


@dataclass(frozen=True)
class SpectrumReport:
    """Eigenvalue analysis verdict for one drift matrix.

    `discrete_eigenvalues[i]` is always 1 + eigenvalues[i] * dt, computed
    exactly from the continuous spectrum (never re-decomposed).
    """

    eigenvalues: tuple[complex, ...]
    discrete_eigenvalues: tuple[complex, ...]
    convergence_rate: float
    regime: Regime
    discrete_stable: bool

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [[v.real, v.imag] for v in self.eigenvalues],
            "discrete_eigenvalues": [[v.real, v.imag] for v in self.discrete_eigenvalues],
            "convergence_rate": self.convergence_rate,
            "regime": self.regime.value,
            "discrete_stable": self.discrete_stable,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SpectrumReport":
        return cls(
            eigenvalues=tuple(complex(re, im) for re, im in d["eigenvalues"]),
            discrete_eigenvalues=tuple(complex(re, im) for re, im in d["discrete_eigenvalues"]),
            convergence_rate=float(d["convergence_rate"]),
            regime=Regime(d["regime"]),
            discrete_stable=bool(d["discrete_stable"]),
        )


@dataclass(frozen=True)
class PredictionReport:
    """Pooled and per-dimension one-step R-squared for a fitted drift model."""

    r_squared: float
    per_dimension_r_squared: tuple[float, ...]
    step_count: int

    def to_dict(self) -> dict:
        return {
            "r_squared": self.r_squared,
            "per_dimension_r_squared": list(self.per_dimension_r_squared),
            "step_count": self.step_count,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PredictionReport":
        return cls(
            r_squared=float(d["r_squared"]),
            per_dimension_r_squared=tuple(float(v) for v in d["per_dimension_r_squared"]),
            step_count=int(d["step_count"]),
        )


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def validate_trajectory(raw: Trajectory) -> Trajectory:
    """Accept a trajectory iff every invariant holds; normalize nothing.

    Raises:
        TooShort: fewer than 2 points (no step change exists).
        DimensionMismatch: points disagree on dimension.
        OutOfRangeScore: any component outside [0, 10].
    """
    dims = {p.dimension for p in raw.points}
    if len(dims) > 1:
        raise DimensionMismatch(
            f"trajectory {raw.session_id!r} mixes dimensions {sorted(dims)}"
        )
    if len(raw.points) < 2:
        raise TooShort(
            f"trajectory {raw.session_id!r} has {len(raw.points)} point(s); need >= 2"
        )
    for t, p in enumerate(raw.points):
        if np.any(p.values < SCORE_LOW) or np.any(p.values > SCORE_HIGH):
            raise OutOfRangeScore(
                f"trajectory {raw.session_id!r} iteration {t}: "
                f"{p.to_list()} outside [{SCORE_LOW}, {SCORE_HIGH}]"
            )
    return raw


def step_changes(traj: Trajectory) -> list[tuple[ObjectiveVector, np.ndarray]]:
    """All (state, next-state minus state) pairs, one per step t = 0..T-1."""
    m = traj.values_matrix
    deltas = np.diff(m, axis=0)
    return [(traj.points[t], deltas[t]) for t in range(len(traj.points) - 1)]


def pooled_step_matrix(data: SessionSet) -> tuple[np.ndarray, np.ndarray]:
    """Pool step changes across all sessions of a strategy, in session order.

    Returns (states, deltas), each shaped (total_steps, n).
    """
    xs, ds = [], []
    for traj in data:
        m = traj.values_matrix
        xs.append(m[:-1])
        ds.append(np.diff(m, axis=0))
    return np.concatenate(xs, axis=0), np.concatenate(ds, axis=0)


# ---------------------------------------------------------------------------
# Trajectory persistence (JSON Lines, one record per iteration)
# ---------------------------------------------------------------------------

def trajectory_records(traj: Trajectory) -> Iterator[dict]:
    for t, p in enumerate(traj.points):
        yield {
            "session_id": traj.session_id,
            "strategy": traj.strategy_id,
            "iteration": t,
            "objectives": p.to_list(),
        }


def dumps_trajectories(trajectories: Iterable[Trajectory]) -> str:
    """Serialize trajectories to the JSONL wire format (LF-terminated)."""
    lines = []
    for traj in trajectories:
        for rec in trajectory_records(traj):
            lines.append(json.dumps(rec))
    return "".join(line + "\n" for line in lines)


def write_trajectories(f: TextIO, trajectories: Iterable[Trajectory]) -> None:
    f.write(dumps_trajectories(trajectories))


def loads_trajectories(text: str) -> list[Trajectory]:
    """Parse and validate the JSONL trajectory format.

    Sessions must be contiguous blocks with iterations 0,1,2,... and a
    single strategy per session; anything else is a RecordFormatError.
    Every trajectory is passed through `validate_trajectory`.
    """
    sessions: dict[str, dict] = {}
    order: list[str] = []
    current: str | None = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            sid = rec["session_id"]
            strategy = rec["strategy"]
            iteration = int(rec["iteration"])
            objectives = [float(v) for v in rec["objectives"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise RecordFormatError(f"line {lineno}: malformed record ({exc})") from exc
        if sid != current:
            if sid in sessions:
                raise RecordFormatError(
                    f"line {lineno}: session {sid!r} is not contiguous"
                )
            sessions[sid] = {"strategy": strategy, "points": []}
            order.append(sid)
            current = sid
        entry = sessions[sid]
        if strategy != entry["strategy"]:
            raise RecordFormatError(
                f"line {lineno}: session {sid!r} changes strategy "
                f"{entry['strategy']!r} -> {strategy!r}"
            )
        expected = len(entry["points"])
        if iteration != expected:
            raise RecordFormatError(
                f"line {lineno}: session {sid!r} expected iteration {expected}, "
                f"got {iteration} (gap or disorder)"
            )
        entry["points"].append(objectives)
    out = []
    for sid in order:
        entry = sessions[sid]
        out.append(validate_trajectory(Trajectory(sid, entry["strategy"], entry["points"])))
    return out


def read_trajectories(path) -> list[Trajectory]:
    with open(path, "r", encoding="utf-8") as f:
        return loads_trajectories(f.read())


def group_by_strategy(trajectories: Iterable[Trajectory]) -> dict[str, SessionSet]:
    """Split a mixed trajectory list into one SessionSet per strategy."""
    buckets: dict[str, list[Trajectory]] = {}
    for traj in trajectories:
        buckets.setdefault(traj.strategy_id, []).append(traj)
    return {sid: SessionSet(sid, trajs) for sid, trajs in buckets.items()}
