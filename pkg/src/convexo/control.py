"""Piecewise-constant control signals over box-constrained control sets.

Signals are right-continuous step functions on a switch grid: the i-th
value applies on ``[switch_times[i], switch_times[i+1])`` and the last one
up to the horizon ``T``.  Step functions are the computable stand-in for
piecewise continuously differentiable controls and their pointwise limits
(rapidly switching sequences are step functions already), and the
derivative bound of that class is vacuous away from switches.

Everything here is immutable after construction and all operations are
pure.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExceeded, ConfigError, HorizonMismatch

__all__ = [
    "ControlBox",
    "ControlSignal",
    "sample_controls",
    "metric_rho",
    "metric_rho1",
]


@dataclass(frozen=True)
class ControlBox:
    """Axis-aligned box of admissible control values."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower", np.atleast_1d(np.asarray(self.lower, dtype=float)))
        object.__setattr__(self, "upper", np.atleast_1d(np.asarray(self.upper, dtype=float)))
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ConfigError("control box bounds must be 1-D vectors of equal length")
        if np.any(self.lower > self.upper):
            raise ConfigError("control box requires lower <= upper componentwise")

    @property
    def r(self) -> int:
        return self.lower.shape[0]

    def contains(self, u: np.ndarray, tol: float = 1e-12) -> bool:
        u = np.asarray(u, dtype=float)
        return bool(np.all(u >= self.lower - tol) and np.all(u <= self.upper + tol))

    def clip(self, u: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(u, dtype=float), self.lower, self.upper)

    def levels(self, m: int) -> list[np.ndarray]:
        """Per-component lattice of m values spanning the box."""
        return [np.linspace(self.lower[i], self.upper[i], m) for i in range(self.r)]


@dataclass(frozen=True, eq=False)
class ControlSignal:
    """Step control: ``values[i]`` on ``[switch_times[i], switch_times[i+1])``."""

    switch_times: np.ndarray
    values: np.ndarray
    T: float

    def __post_init__(self):
        st = np.atleast_1d(np.asarray(self.switch_times, dtype=float))
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals.reshape(len(st), -1)
        object.__setattr__(self, "switch_times", st)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "T", float(self.T))
        if self.T <= 0:
            raise ConfigError("horizon must be positive")
        if st[0] != 0.0:
            raise ConfigError("switch grid must start at 0")
        if np.any(np.diff(st) <= 0) or st[-1] >= self.T:
            raise ConfigError("switch times must increase strictly inside [0, T)")
        if vals.shape[0] != st.shape[0]:
            raise ConfigError("one control value per switch interval required")

    @property
    def r(self) -> int:
        return self.values.shape[1]

    @property
    def switches(self) -> int:
        return len(self.switch_times) - 1

    def value_at(self, t: float) -> np.ndarray:
        idx = int(np.searchsorted(self.switch_times, t, side="right")) - 1
        return self.values[max(idx, 0)]

    def interval_key(self) -> bytes:
        return self.values.tobytes()

    def to_json(self) -> str:
        return json.dumps(
            {
                "T": self.T,
                "switch_times": self.switch_times.tolist(),
                "values": self.values.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "ControlSignal":
        data = json.loads(text)
        return cls(np.asarray(data["switch_times"]), np.asarray(data["values"]), data["T"])

    def csv_rows(self) -> list[list[float]]:
        return [[float(t), *map(float, v)] for t, v in zip(self.switch_times, self.values)]

    @classmethod
    def constant(cls, u, T: float) -> "ControlSignal":
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return cls(np.zeros(1), u.reshape(1, -1), T)


def uniform_switch_grid(T: float, switches: int) -> np.ndarray:
    """Grid with ``switches`` interior switch points, equally spaced."""
    return np.linspace(0.0, T, switches + 2)[:-1]


def sample_controls(
    box: ControlBox,
    T: float,
    switches: int,
    levels: int = 3,
    strategy: str = "grid",
    seed: int = 0,
    count: int = 64,
    cap: int = 10**6,
) -> list[ControlSignal]:
    """Finite search family on a uniform switch grid.

    ``grid`` enumerates the componentwise ``levels``-point lattice over the
    box on every interval (deterministic order, deduplicated); ``random``
    draws ``count`` signals with values uniform in the box.
    """
    if switches < 0:
        raise ConfigError("switch count must be >= 0")
    grid_times = uniform_switch_grid(T, switches)
    slots = (switches + 1) * box.r
    if box.r == 0:
        return [ControlSignal(grid_times, np.zeros((switches + 1, 0)), T)]
    if strategy == "grid":
        if levels < 2:
            raise ConfigError("grid sampling needs at least 2 levels per component")
        total = levels ** slots
        if total > cap:
            raise BudgetExceeded(
                f"grid family has {total} signals, more than the cap of {cap}"
            )
        per_component = box.levels(levels)
        axes = [per_component[i % box.r] for i in range(slots)]
        signals = []
        seen = set()
        for combo in itertools.product(*axes):
            vals = np.asarray(combo, dtype=float).reshape(switches + 1, box.r)
            key = vals.tobytes()
            if key in seen:
                continue
            seen.add(key)
            signals.append(ControlSignal(grid_times, vals, T))
        return signals
    if strategy == "random":
        if count > cap:
            raise BudgetExceeded(f"requested {count} samples, more than the cap of {cap}")
        rng = np.random.default_rng(seed)
        width = box.upper - box.lower
        signals = []
        for _ in range(count):
            vals = box.lower + rng.random((switches + 1, box.r)) * width
            signals.append(ControlSignal(grid_times, vals, T))
        return signals
    raise ConfigError(f"unknown sampling strategy {strategy!r}")


def _merged_diff(u1: ControlSignal, u2: ControlSignal):
    if u1.T != u2.T:
        raise HorizonMismatch(f"horizons differ: {u1.T} vs {u2.T}")
    grid = np.union1d(u1.switch_times, u2.switch_times)
    edges = np.append(grid, u1.T)
    lengths = np.diff(edges)
    norms = np.array(
        [
            float(np.max(np.abs(u1.value_at(t) - u2.value_at(t)))) if u1.r else 0.0
            for t in grid
        ]
    )
    return norms, lengths


def metric_rho(u1: ControlSignal, u2: ControlSignal) -> float:
    """Uniform metric: sup over time of the max-norm difference."""
    norms, _ = _merged_diff(u1, u2)
    return float(np.max(norms)) if len(norms) else 0.0


def metric_rho1(u1: ControlSignal, u2: ControlSignal) -> float:
    """L1 metric: exact integral of the step-function difference."""
    norms, lengths = _merged_diff(u1, u2)
    return float(np.sum(norms * lengths))
