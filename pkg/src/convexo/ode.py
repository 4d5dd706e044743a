"""Fixed-step integration of controlled systems with a running-cost state.

The integrator advances the augmented state (x, y) with the classical
fourth-order one-step scheme, holding the control at its interval value
and snapping sub-steps to switch times so control discontinuities are
never smeared.  A whole family of signals sharing one switch grid is
integrated as a single vectorised batch.

A trajectory whose state max-norm crosses the blow-up threshold is halted
and flagged rather than raised: divergence of the running cost to -inf is
a reportable outcome, not an error.  Blow-up is checked on every internal
stage as well, so the recorded overshoot stays within one stage of the
threshold instead of compounding through a full step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .control import ControlSignal
from .errors import NonFiniteState

__all__ = ["Trajectory", "integrate", "integrate_family", "picard", "PicardResult"]

BLOWUP_DEFAULT = 1e9


@dataclass
class Trajectory:
    """Sampled augmented trajectory: states x(t_i) and running cost y(t_i)."""

    times: np.ndarray
    states: np.ndarray  # (N, n)
    costs: np.ndarray  # (N,)
    diverged: bool = False
    blowup_time: Optional[float] = None

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def final_cost(self) -> float:
        return float(self.costs[-1])

    def csv_rows(self):
        for t, x, y in zip(self.times, self.states, self.costs):
            yield [float(t), *map(float, x), float(y)]


def time_grid(T: float, switch_times: np.ndarray, step: float):
    """Sub-step nodes snapped to switch times.

    Returns (nodes, spans) where spans[i] = (first node index, last node
    index, interval index) for control interval i.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    edges = np.append(np.asarray(switch_times, dtype=float), T)
    nodes = [0.0]
    spans = []
    for i in range(len(edges) - 1):
        a, b = edges[i], edges[i + 1]
        nsub = max(1, int(round((b - a) / step)))
        start = len(nodes) - 1
        local = a + (b - a) * np.arange(1, nsub + 1) / nsub
        nodes.extend(local.tolist())
        spans.append((start, len(nodes) - 1, i))
    return np.asarray(nodes), spans


def _freeze(state, cost, t, out, lane):
    out["diverged"][lane] = True
    out["blowup_time"][lane] = t
    out["blow_state"][lane] = state
    out["blow_cost"][lane] = cost


def integrate_family(
    problem,
    controls: Sequence[ControlSignal],
    step: float,
    blowup: float = BLOWUP_DEFAULT,
    record_stride: int = 1,
) -> list[Trajectory]:
    """Integrate every signal of a shared-grid family in one batch.

    Signals with differing switch grids are grouped and integrated per
    group; the returned list matches the input order.
    """
    if not controls:
        return []
    groups: dict[bytes, list[int]] = {}
    for idx, c in enumerate(controls):
        groups.setdefault(c.switch_times.tobytes(), []).append(idx)
    out: list[Optional[Trajectory]] = [None] * len(controls)
    for indices in groups.values():
        batch = [controls[i] for i in indices]
        for i, traj in zip(indices, _integrate_batch(problem, batch, step, blowup, record_stride)):
            out[i] = traj
    return out  # type: ignore[return-value]


def integrate(
    problem,
    u: ControlSignal,
    step: float,
    blowup: float = BLOWUP_DEFAULT,
    record_stride: int = 1,
) -> Trajectory:
    return _integrate_batch(problem, [u], step, blowup, record_stride)[0]


def _integrate_batch(problem, controls, step, blowup, record_stride):
    B = len(controls)
    n = problem.n
    T = problem.T
    sig0 = controls[0]
    nodes, spans = time_grid(T, sig0.switch_times, step)
    values = np.stack([c.values for c in controls])  # (B, k+1, r)

    X = np.tile(np.asarray(problem.x0, dtype=float), (B, 1))
    Y = np.zeros(B)
    active = np.ones(B, dtype=bool)
    info = {
        "diverged": np.zeros(B, dtype=bool),
        "blowup_time": np.full(B, np.nan),
        "blow_state": np.zeros((B, n)),
        "blow_cost": np.zeros(B),
    }

    record_idx = _record_indices(nodes, spans, record_stride)
    rec_states = np.empty((len(record_idx), B, n))
    rec_costs = np.empty((len(record_idx), B))
    rec_count = np.zeros(B, dtype=int)
    rec_pos = 0
    record_set = set(record_idx.tolist())

    def snapshot():
        nonlocal rec_pos
        rec_states[rec_pos] = X
        rec_costs[rec_pos] = Y
        rec_count[active] = rec_pos + 1
        rec_pos += 1

    if 0 in record_set:
        snapshot()

    if np.any(np.max(np.abs(X), axis=1) > blowup):
        raise NonFiniteState("initial state beyond the blow-up threshold")

    for start, end, iv in spans:
        U = values[:, iv, :]
        for j in range(start, end):
            if not np.any(active):
                break
            t0, t1 = nodes[j], nodes[j + 1]
            h = t1 - t0
            _rk4_step(problem, X, Y, U, t0, h, active, blowup, info)
            if np.any(~np.isfinite(X[active])) or np.any(~np.isfinite(Y[active])):
                raise NonFiniteState(
                    "non-finite state below the blow-up threshold at t="
                    f"{t1:.6g}"
                )
            if (j + 1) in record_set:
                snapshot()
        if not np.any(active):
            break

    trajectories = []
    rec_times = nodes[record_idx]
    for b in range(B):
        cnt = rec_count[b]
        times = rec_times[:cnt]
        states = rec_states[:cnt, b, :]
        costs = rec_costs[:cnt, b]
        if info["diverged"][b]:
            times = np.append(times, info["blowup_time"][b])
            states = np.vstack([states, info["blow_state"][b][None, :]])
            costs = np.append(costs, info["blow_cost"][b])
        trajectories.append(
            Trajectory(
                times=times,
                states=states.copy(),
                costs=costs.copy(),
                diverged=bool(info["diverged"][b]),
                blowup_time=float(info["blowup_time"][b]) if info["diverged"][b] else None,
            )
        )
    return trajectories


def _record_indices(nodes, spans, stride):
    keep = {0, len(nodes) - 1}
    for start, end, _ in spans:
        keep.add(start)
        keep.add(end)
        keep.update(range(start, end, max(1, stride)))
    return np.asarray(sorted(keep), dtype=int)


def _rk4_step(problem, X, Y, U, t, h, active, blowup, info):
    """One classical step in place on the active lanes."""
    idx = np.flatnonzero(active)
    x = X[idx]
    u = U[idx]
    y = Y[idx]

    def guard(stage_state, t_stage):
        bad = np.max(np.abs(stage_state), axis=1) > blowup
        if np.any(bad):
            for local in np.flatnonzero(bad):
                lane = idx[local]
                if active[lane]:
                    active[lane] = False
                    _freeze(stage_state[local].copy(), float(y[local]), t_stage, info, lane)
        return bad

    k1 = problem.dynamics(x, u, t)
    c1 = problem.cost(x, u, t)
    s2 = x + 0.5 * h * k1
    bad = guard(s2, t + 0.5 * h)
    k2 = problem.dynamics(s2, u, t + 0.5 * h)
    c2 = problem.cost(s2, u, t + 0.5 * h)
    s3 = x + 0.5 * h * k2
    bad |= guard(s3, t + 0.5 * h)
    k3 = problem.dynamics(s3, u, t + 0.5 * h)
    c3 = problem.cost(s3, u, t + 0.5 * h)
    s4 = x + h * k3
    bad |= guard(s4, t + h)
    k4 = problem.dynamics(s4, u, t + h)
    c4 = problem.cost(s4, u, t + h)

    x_new = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    y_new = y + (h / 6.0) * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
    final_bad = np.max(np.abs(x_new), axis=1) > blowup
    for local in np.flatnonzero(final_bad & ~bad):
        lane = idx[local]
        if active[lane]:
            active[lane] = False
            _freeze(x_new[local].copy(), float(y_new[local]), t + h, info, lane)

    ok = ~bad & ~final_bad
    lanes_ok = idx[ok]
    X[lanes_ok] = x_new[ok]
    Y[lanes_ok] = y_new[ok]


# ---------------------------------------------------------------------------
# Successive approximations
# ---------------------------------------------------------------------------


@dataclass
class PicardResult:
    """Iterates of the integral-equation fixed-point map and their gaps."""

    iterates: list[Trajectory] = field(default_factory=list)
    deltas: list[float] = field(default_factory=list)


def picard(problem, u: ControlSignal, k_max: int, step: float) -> PicardResult:
    """Successive approximations x_{k+1}(t) = x0 + int_0^t phi(x_k, u).

    Each iterate is produced by cumulative trapezoid quadrature of the
    right-hand side along the previous iterate, segment by segment so the
    control discontinuities stay sharp.  The running cost is quadrature of
    the integrand along the same iterate.
    """
    if k_max < 1:
        raise ValueError("need at least one iteration")
    nodes, spans = time_grid(problem.T, u.switch_times, step)
    N = len(nodes)
    n = problem.n
    x0 = np.asarray(problem.x0, dtype=float)

    def quadrature_pass(xs):
        """Cumulative trapezoid of phi and f along xs, per control interval
        so nodes shared by two intervals use each side's control value."""
        xacc = np.zeros((N, n))
        yacc = np.zeros(N)
        for start, end, iv in spans:
            sl = slice(start, end + 1)
            count = end + 1 - start
            uu = np.tile(u.values[iv], (count, 1))
            phi = problem.dynamics(xs[sl], uu, nodes[sl])
            f = problem.cost(xs[sl], uu, nodes[sl])
            dt = np.diff(nodes[sl])
            xacc[start + 1 : end + 1] = xacc[start] + np.cumsum(
                0.5 * (phi[1:] + phi[:-1]) * dt[:, None], axis=0
            )
            yacc[start + 1 : end + 1] = yacc[start] + np.cumsum(0.5 * (f[1:] + f[:-1]) * dt)
        return xacc, yacc

    current = np.tile(x0, (N, 1))
    result = PicardResult()
    xacc, yacc = quadrature_pass(current)
    result.iterates.append(Trajectory(nodes.copy(), current.copy(), yacc))
    for _ in range(k_max):
        new = x0 + xacc
        delta = float(np.max(np.abs(new - current))) if N else 0.0
        result.deltas.append(delta)
        current = new
        xacc, yacc = quadrature_pass(current)
        result.iterates.append(Trajectory(nodes.copy(), current.copy(), yacc))
    return result
