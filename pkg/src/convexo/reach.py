"""Sampled reachable sets and outer bound certificates.

A cloud is the record of integrating a finite control family: time-stamped
augmented states (t, x, y) tagged with the generating control.  Its convex
hull over the (x, y) coordinates is the computable inner picture of the
reachable set; the certificates in this module are the matching outer
bounds (quadratic-function sublevel radius, support-function sum for an
additive split of the dynamics, scaled support for a bounded ratio of
right-hand sides, and the scalar comparison ODE for a fixed direction).

Hulls are exact in one and two dimensions (interval / monotone-chain
polygon); in higher dimension membership degrades gracefully to a
support-function test over a deterministic direction set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .control import ControlBox, ControlSignal
from .errors import (
    ConfigError,
    DimensionMismatch,
    NonFiniteState,
    NonPositiveParameter,
)
from .ode import BLOWUP_DEFAULT, integrate_family

__all__ = [
    "Hull",
    "ReachCloud",
    "BoundCertificate",
    "direction_set",
    "build_reach",
    "hull_contains",
    "lyapunov_bound",
    "minkowski_bound",
    "ratio_bound",
    "projection_bound",
]


def direction_set(d: int, count: int = 16, seed: int = 0) -> np.ndarray:
    """Signed axis directions plus ``count`` seeded random unit vectors."""
    dirs = []
    eye = np.eye(d)
    for i in range(d):
        dirs.append(eye[i])
        dirs.append(-eye[i])
    if d > 1 and count > 0:
        rng = np.random.default_rng(seed)
        extra = rng.normal(size=(count, d))
        norms = np.linalg.norm(extra, axis=1)
        ok = norms > 1e-12
        dirs.extend(extra[ok] / norms[ok][:, None])
    return np.unique(np.round(np.asarray(dirs), 15), axis=0)


def _cross2(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _monotone_chain(points: np.ndarray) -> np.ndarray:
    """Convex hull of 2-D points, counter-clockwise, no repeated endpoint."""
    pts = np.unique(points, axis=0)
    if len(pts) <= 2:
        return pts
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def build(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and _cross2(out[-1] - out[-2], p - out[-2]) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = build(pts)
    upper = build(pts[::-1])
    return np.asarray(lower[:-1] + upper[:-1])


@dataclass
class Hull:
    """Convex hull summary of a point cloud, with a support table."""

    points: np.ndarray  # generators (N, d)
    directions: np.ndarray  # (K, d)
    support: np.ndarray  # (K,)
    vertices: Optional[np.ndarray] = None  # 1-D: [lo, hi]; 2-D: CCW polygon

    @classmethod
    def from_points(cls, points: np.ndarray, directions: np.ndarray) -> "Hull":
        points = np.atleast_2d(np.asarray(points, dtype=float))
        support = points @ directions.T
        support = support.max(axis=0)
        d = points.shape[1]
        vertices = None
        if d == 1:
            vertices = np.array([[points.min()], [points.max()]])
        elif d == 2:
            vertices = _monotone_chain(points)
        return cls(points, directions, support, vertices)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)

    def support_of(self, directions: np.ndarray) -> np.ndarray:
        return (self.points @ np.atleast_2d(directions).T).max(axis=0)

    def extent(self, axis: int) -> tuple[float, float]:
        return float(self.points[:, axis].min()), float(self.points[:, axis].max())

    def contains(self, q, tol: float = 1e-9) -> bool:
        q = np.atleast_1d(np.asarray(q, dtype=float))
        if self.d == 1:
            lo, hi = self.vertices[0, 0], self.vertices[1, 0]
            return bool(lo - tol <= q[0] <= hi + tol)
        if self.d == 2:
            return self._polygon_contains(q, tol)
        return bool(np.all(self.directions @ q <= self.support + tol))

    def _polygon_contains(self, q, tol: float) -> bool:
        verts = self.vertices
        if len(verts) == 1:
            return bool(np.linalg.norm(q - verts[0]) <= tol)
        if len(verts) == 2:
            a, b = verts
            ab = b - a
            denom = float(ab @ ab)
            t = 0.0 if denom == 0 else float(np.clip((q - a) @ ab / denom, 0.0, 1.0))
            return bool(np.linalg.norm(a + t * ab - q) <= tol)
        for i in range(len(verts)):
            a = verts[i]
            b = verts[(i + 1) % len(verts)]
            edge = b - a
            length = np.linalg.norm(edge)
            if length == 0:
                continue
            # CCW polygon: inside points have non-negative cross products
            signed = _cross2(edge, q - a) / length
            if signed < -tol:
                return False
        return True

    def contains_many(self, Q: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if self.d == 1:
            lo, hi = self.vertices[0, 0], self.vertices[1, 0]
            return (Q[:, 0] >= lo - tol) & (Q[:, 0] <= hi + tol)
        if self.d == 2 and len(self.vertices) >= 3:
            verts = self.vertices
            ok = np.ones(len(Q), dtype=bool)
            for i in range(len(verts)):
                a = verts[i]
                b = verts[(i + 1) % len(verts)]
                edge = b - a
                length = np.linalg.norm(edge)
                if length == 0:
                    continue
                signed = (edge[0] * (Q[:, 1] - a[1]) - edge[1] * (Q[:, 0] - a[0])) / length
                ok &= signed >= -tol
            return ok
        return np.array([self.contains(q, tol) for q in Q])

    def inflate(self, factor: float) -> "Hull":
        """Scale the hull about its centroid."""
        c = self.centroid
        scaled = c + factor * (self.points - c)
        return Hull.from_points(scaled, self.directions)


@dataclass
class ReachCloud:
    """Sampled attainability cloud with hulls of its (x) and (x, y) views."""

    ts: np.ndarray
    xs: np.ndarray  # (N, n)
    ys: np.ndarray  # (N,)
    control_ids: np.ndarray
    hull_x: Hull
    hull_xy: Hull
    unbounded: bool = False
    seed: int = 0

    @property
    def n(self) -> int:
        return self.xs.shape[1]

    def csv_rows(self):
        for t, x, y, cid in zip(self.ts, self.xs, self.ys, self.control_ids):
            yield [float(t), *map(float, x), float(y), int(cid)]

    def support_json(self) -> dict:
        return {
            "x": {
                "directions": self.hull_x.directions.tolist(),
                "support": self.hull_x.support.tolist(),
            },
            "xy": {
                "directions": self.hull_xy.directions.tolist(),
                "support": self.hull_xy.support.tolist(),
            },
            "unbounded": self.unbounded,
        }


def build_reach(
    problem,
    controls: Sequence[ControlSignal],
    step: float,
    t_stride: int = 10,
    directions: int = 16,
    seed: int = 0,
    blowup: float = BLOWUP_DEFAULT,
) -> ReachCloud:
    """Integrate a control family and assemble the sampled cloud.

    Points are recorded every ``t_stride`` sub-steps plus all interval
    boundaries; trajectories that blow up contribute their points up to
    (and including) the threshold crossing and mark the cloud unbounded.
    """
    if not controls:
        raise ConfigError("need at least one control to build a cloud")
    trajectories = integrate_family(problem, controls, step, blowup, record_stride=t_stride)
    ts, xs, ys, ids = [], [], [], []
    unbounded = False
    for cid, traj in enumerate(trajectories):
        ts.append(traj.times)
        xs.append(traj.states)
        ys.append(traj.costs)
        ids.append(np.full(len(traj.times), cid, dtype=int))
        unbounded = unbounded or traj.diverged
    ts = np.concatenate(ts)
    xs = np.vstack(xs)
    ys = np.concatenate(ys)
    ids = np.concatenate(ids)
    n = xs.shape[1]
    dirs_x = direction_set(n, directions, seed)
    dirs_xy = direction_set(n + 1, directions, seed)
    xy = np.column_stack([xs, ys])
    return ReachCloud(
        ts=ts,
        xs=xs,
        ys=ys,
        control_ids=ids,
        hull_x=Hull.from_points(xs, dirs_x),
        hull_xy=Hull.from_points(xy, dirs_xy),
        unbounded=unbounded,
        seed=seed,
    )


def hull_contains(cloud: ReachCloud, q, tol: float = 1e-9, space: str = "xy") -> bool:
    """Membership (within tol) in the cloud's hull, exact for dim <= 2."""
    hull = cloud.hull_xy if space == "xy" else cloud.hull_x
    return hull.contains(q, tol)


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------


@dataclass
class BoundCertificate:
    """Outer bound on a reachable set, in one of four shapes."""

    kind: str
    params: dict
    directions: Optional[np.ndarray] = None
    support: Optional[np.ndarray] = None
    interval: Optional[tuple] = None
    radius: Optional[float] = None
    flags: list = field(default_factory=list)

    def to_json(self) -> dict:
        out = {"kind": self.kind, "params": self.params, "flags": list(self.flags)}
        if self.directions is not None:
            out["directions"] = np.asarray(self.directions).tolist()
        if self.support is not None:
            out["support"] = np.asarray(self.support).tolist()
        if self.interval is not None:
            out["interval"] = [float(self.interval[0]), float(self.interval[1])]
        if self.radius is not None:
            out["radius"] = float(self.radius)
        return out

    def admits(self, x, tol: float = 1e-9) -> bool:
        """Does the certificate's bound admit the point x?"""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.kind == "lyapunov":
            return bool(np.linalg.norm(x) <= self.radius + tol)
        if self.kind in ("minkowski", "ratio"):
            return bool(np.all(self.directions @ x <= self.support + tol))
        if self.kind == "projection":
            g = np.asarray(self.params["g"], dtype=float)
            val = float(g @ x)
            return bool(self.interval[0] - tol <= val <= self.interval[1] + tol)
        raise ConfigError(f"unknown certificate kind {self.kind!r}")


def lyapunov_bound(m1: float, m2: float, c1: float, c2: float) -> BoundCertificate:
    """Sublevel bound: a quadratic-sandwiched V with V <= c1 on one split
    part and V <= c2 on the other gives V <= c1 + c2, so |x| is bounded by
    sqrt((c1 + c2) / m1)."""
    if m1 <= 0:
        raise NonPositiveParameter("m1 must be positive")
    if m2 < m1:
        raise NonPositiveParameter("need m1 <= m2")
    if c1 < 0 or c2 < 0:
        raise NonPositiveParameter("sublevel constants must be non-negative")
    radius = float(np.sqrt((c1 + c2) / m1))
    return BoundCertificate(
        kind="lyapunov",
        params={"m1": m1, "m2": m2, "c1": c1, "c2": c2},
        radius=radius,
    )


def minkowski_bound(c1: ReachCloud, c2: ReachCloud) -> BoundCertificate:
    """Support-function sum: the reachable set of an additively split
    system is contained in the Minkowski sum of the split systems' sets."""
    if c1.n != c2.n:
        raise DimensionMismatch(f"state dimensions differ: {c1.n} vs {c2.n}")
    dirs = c1.hull_x.directions
    h = c1.hull_x.support_of(dirs) + c2.hull_x.support_of(dirs)
    flags = []
    if c1.unbounded or c2.unbounded:
        flags.append("component cloud unbounded")
    return BoundCertificate(
        kind="minkowski",
        params={},
        directions=dirs,
        support=h,
        flags=flags,
    )


def ratio_bound(k2: float, c1: ReachCloud) -> BoundCertificate:
    """Scaled-set bound k2 * D1 for dynamics whose norm ratio against the
    reference right-hand side is within [k1, k2].  Sound for clouds that
    are star-shaped about the origin; validated empirically."""
    if k2 <= 0:
        raise NonPositiveParameter("k2 must be positive")
    dirs = c1.hull_x.directions
    h = k2 * c1.hull_x.support_of(dirs)
    interval = None
    if c1.n == 1:
        lo, hi = c1.hull_x.extent(0)
        interval = (k2 * lo, k2 * hi)
    return BoundCertificate(
        kind="ratio",
        params={"k2": k2},
        directions=dirs,
        support=h,
        interval=interval,
        flags=["assumes the cloud is star-shaped about the origin"],
    )


def projection_bound(
    problem,
    g,
    box: ControlBox,
    T: float,
    step: float,
    levels: int = 9,
) -> BoundCertificate:
    """Scalar comparison ODE for the projection <x, g>.

    Integrates theta' = max (resp. min) over a control lattice of
    <phi(theta * g, u, t), g>, reconstructing the state fed to the
    dynamics as theta * g.  The reconstruction is exact for scalar state;
    for n > 1 the certificate is flagged heuristic.
    """
    g = np.atleast_1d(np.asarray(g, dtype=float))
    if abs(np.linalg.norm(g) - 1.0) > 1e-9:
        raise ConfigError("direction g must be a unit vector")
    if box.r == 0:
        lattice = np.zeros((1, 0))
    else:
        axes = box.levels(max(2, levels))
        mesh = np.meshgrid(*axes, indexing="ij")
        lattice = np.stack([m.ravel() for m in mesh], axis=1)
    L = len(lattice)

    def extreme(theta: float, t: float, take_max: bool) -> float:
        X = np.tile(theta * g, (L, 1))
        vals = problem.dynamics(X, lattice, t) @ g
        return float(vals.max() if take_max else vals.min())

    def sweep(take_max: bool) -> float:
        theta = float(np.asarray(problem.x0, dtype=float) @ g)
        nsteps = max(1, int(round(T / step)))
        h = T / nsteps
        for i in range(nsteps):
            t = i * h
            k1 = extreme(theta, t, take_max)
            k2 = extreme(theta + 0.5 * h * k1, t + 0.5 * h, take_max)
            k3 = extreme(theta + 0.5 * h * k2, t + 0.5 * h, take_max)
            k4 = extreme(theta + h * k3, t + h, take_max)
            theta += (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.isfinite(theta):
                raise NonFiniteState("projection comparison ODE diverged")
        return theta

    hi = sweep(True)
    lo = sweep(False)
    flags = []
    if problem.n > 1:
        flags.append("heuristic for state dimension > 1 (theta*g reconstruction)")
    return BoundCertificate(
        kind="projection",
        params={"g": g.tolist(), "levels": levels},
        interval=(min(lo, hi), max(lo, hi)),
        flags=flags,
    )
