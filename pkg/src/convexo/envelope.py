"""Lower convex / upper concave envelopes of grid-sampled functions.

The envelope of a sampled function is computed through the double
Legendre-Fenchel transform: the conjugate g(p) = max_i <p, x_i> - f(x_i)
over the masked-in nodes, then the conjugate of g evaluated back at the
grid nodes.  Every slope in the candidate set contributes an affine
minorant of the sampled values, so the result never exceeds the true lower
hull; the quality of the approximation is set by the slope candidates:

* per axis, a uniform grid spanning the finite-difference slopes of the
  masked-in values (count = ``slope_mult`` times the node count), with the
  exact endpoints and zero slope appended;
* for small masked sets (``exact_cap`` nodes or fewer, dimension <= 3),
  the exact facet gradients of every node pair/triple/quadruple, which
  makes the biconjugate reproduce the lower hull of the sampled points to
  rounding error.

``lce_oracle`` is the independent check: it minimises a convex combination
of masked-in values subject to the combination hitting the query point,
by direct enumeration of bracketing supports (pairs in 1-D, simplices of
up to d+1 points in general).  It is exponential in spirit and capped, but
exact, so the transform path is validated against it.

Envelopes respect the mask: masked-out nodes never contribute, but the
returned grid function carries finite extension values everywhere (the
maximum of the affine minorants), which downstream interpolation relies
on outside the masked region.
"""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import CapExceeded, ConfigError, EmptyMask, EvalError, Infeasible
from .expr import EvalEnv, Expr, evaluate

__all__ = [
    "Grid",
    "GridFunction",
    "sample_field",
    "conjugate",
    "lce",
    "uce",
    "lce_oracle",
]


@dataclass(frozen=True)
class Grid:
    """Rectangular grid: per-axis (lo, hi, count), nodes affine in index."""

    axes: tuple

    def __post_init__(self):
        axes = tuple((float(lo), float(hi), int(count)) for lo, hi, count in self.axes)
        object.__setattr__(self, "axes", axes)
        for lo, hi, count in axes:
            if count < 2:
                raise ConfigError("grids need at least 2 nodes per axis")
            if not lo < hi:
                raise ConfigError("grid axis needs lo < hi")

    @property
    def d(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(count for _, _, count in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axis_nodes(self, i: int) -> np.ndarray:
        lo, hi, count = self.axes[i]
        return np.linspace(lo, hi, count)

    def spacing(self, i: int) -> float:
        lo, hi, count = self.axes[i]
        return (hi - lo) / (count - 1)

    def node_matrix(self) -> np.ndarray:
        """All nodes as an (N, d) matrix in C order."""
        mesh = np.meshgrid(*[self.axis_nodes(i) for i in range(self.d)], indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def to_json(self) -> dict:
        return {"axes": [list(a) for a in self.axes]}

    @classmethod
    def from_json(cls, data: dict) -> "Grid":
        return cls(tuple(tuple(a) for a in data["axes"]))


@dataclass
class GridFunction:
    """Scalar field sampled on a grid, restricted to a masked-in node set."""

    grid: Grid
    values: np.ndarray
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.grid.shape)
        if self.mask is None:
            self.mask = np.ones(self.grid.shape, dtype=bool)
        else:
            self.mask = np.asarray(self.mask, dtype=bool).reshape(self.grid.shape)
        if not self.mask.any():
            raise EmptyMask("no masked-in nodes")
        if not np.all(np.isfinite(self.values[self.mask])):
            raise EvalError("non-finite value at a masked-in node")

    @property
    def masked_points(self) -> np.ndarray:
        return self.grid.node_matrix()[self.mask.ravel()]

    @property
    def masked_values(self) -> np.ndarray:
        return self.values.ravel()[self.mask.ravel()]

    def csv_rows(self):
        pts = self.grid.node_matrix()
        vals = self.values.ravel()
        mask = self.mask.ravel()
        for p, v, m in zip(pts, vals, mask):
            yield [*map(float, p), float(v), int(m)]

    def header_json(self) -> dict:
        return {"grid": self.grid.to_json(), "masked_in": int(self.mask.sum())}


def sample_field(
    e: Expr,
    grid: Grid,
    dims: tuple[int, int],
    mask=None,
    t: float = 0.0,
) -> GridFunction:
    """Evaluate an expression over the grid's (x, u) product nodes.

    The first n axes of the grid feed the state variables and the
    remaining r axes the control variables.  ``mask`` may be a boolean
    array over the grid or a predicate on the (N, d) node matrix; only
    masked-in nodes are evaluated (masked-out values are NaN).
    """
    n, r = dims
    if grid.d != n + r:
        raise ConfigError(f"grid dimension {grid.d} does not match n + r = {n + r}")
    pts = grid.node_matrix()
    if mask is None:
        mask_flat = np.ones(len(pts), dtype=bool)
    elif callable(mask):
        mask_flat = np.asarray(mask(pts), dtype=bool).ravel()
    else:
        mask_flat = np.asarray(mask, dtype=bool).ravel()
    if not mask_flat.any():
        raise EmptyMask("membership predicate excluded every grid node")
    values = np.full(len(pts), np.nan)
    active = pts[mask_flat]
    env = EvalEnv(active[:, :n].T, active[:, n:].T, t)
    out = evaluate(e, env, strict=True)
    values[mask_flat] = np.broadcast_to(np.asarray(out, dtype=float), (len(active),))
    return GridFunction(grid, values.reshape(grid.shape), mask_flat.reshape(grid.shape))


# ---------------------------------------------------------------------------
# Legendre-Fenchel machinery
# ---------------------------------------------------------------------------


def _max_affine(P: np.ndarray, X: np.ndarray, v: np.ndarray) -> np.ndarray:
    """max over i of <p, x_i> - v_i for each row p of P, chunked."""
    K = len(P)
    out = np.empty(K)
    chunk = max(1, int(4_000_000 // max(len(X), 1)))
    for s in range(0, K, chunk):
        block = P[s : s + chunk] @ X.T - v[None, :]
        out[s : s + chunk] = block.max(axis=1)
    return out


def conjugate(f: GridFunction, slope_grid: Grid) -> GridFunction:
    """Discrete conjugate f*(p) = max over masked-in nodes of <p,x> - f(x)."""
    X = f.masked_points
    v = f.masked_values
    P = slope_grid.node_matrix()
    vals = _max_affine(P, X, v)
    return GridFunction(slope_grid, vals.reshape(slope_grid.shape))


def _axis_difference_slopes(X: np.ndarray, v: np.ndarray, axis: int) -> np.ndarray:
    """Finite-difference slopes between masked nodes consecutive along one axis."""
    d = X.shape[1]
    others = [j for j in range(d) if j != axis]
    order = np.lexsort(tuple(X[:, j] for j in [axis] + others[::-1]))
    Xs, vs = X[order], v[order]
    same_line = np.ones(len(Xs) - 1, dtype=bool)
    for j in others:
        same_line &= Xs[1:, j] == Xs[:-1, j]
    dx = Xs[1:, axis] - Xs[:-1, axis]
    keep = same_line & (dx > 0)
    if not keep.any():
        return np.empty(0)
    return (vs[1:][keep] - vs[:-1][keep]) / dx[keep]


def _facet_gradients(X: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Gradients of affine interpolants through d+1 point subsets (plus the
    degenerate pair/singleton gradients), for exact small-set envelopes."""
    M, d = X.shape
    grads = [np.zeros((1, d))]
    # pairs: least-norm gradient along the chord
    if M >= 2:
        ii, jj = np.triu_indices(M, k=1)
        dx = X[jj] - X[ii]
        dv = v[jj] - v[ii]
        norms = np.einsum("ij,ij->i", dx, dx)
        ok = norms > 0
        grads.append(dx[ok] * (dv[ok] / norms[ok])[:, None])
    if d >= 2 and M >= d + 1:
        combos = np.array(list(itertools.combinations(range(M), d + 1)))
        A = np.concatenate([X[combos], np.ones((len(combos), d + 1, 1))], axis=2)
        rhs = v[combos]
        dets = np.abs(np.linalg.det(A))
        scale = np.maximum(np.abs(A).max(axis=(1, 2)) ** (d + 1), 1e-30)
        ok = dets > 1e-12 * scale
        if ok.any():
            sol = np.linalg.solve(A[ok], rhs[ok][..., None])[..., 0]
            grads.append(sol[:, :d])
    return np.vstack(grads)


def _slope_candidates(f: GridFunction, slope_mult: int, exact_cap: int) -> np.ndarray:
    X = f.masked_points
    v = f.masked_values
    d = X.shape[1]
    axis_sets = []
    for j in range(d):
        slopes = _axis_difference_slopes(X, v, j)
        if len(slopes) == 0:
            span = max(float(v.max() - v.min()), 1.0)
            smin, smax = -span / f.grid.spacing(j), span / f.grid.spacing(j)
        else:
            smin, smax = float(slopes.min()), float(slopes.max())
        if smax - smin < 1e-12:
            smin, smax = smin - 1.0, smax + 1.0
        count = slope_mult * f.grid.shape[j]
        base = np.linspace(smin, smax, count)
        extra = [0.0] if smin <= 0.0 <= smax else []
        axis_sets.append(np.unique(np.concatenate([base, [smin, smax], extra])))
    if d == 1:
        P = axis_sets[0][:, None]
    else:
        mesh = np.meshgrid(*axis_sets, indexing="ij")
        P = np.stack([m.ravel() for m in mesh], axis=1)
    if len(X) <= exact_cap and d <= 3:
        if d == 1:
            ii, jj = np.triu_indices(len(X), k=1)
            dx = X[jj, 0] - X[ii, 0]
            ok = dx != 0
            pairwise = ((v[jj] - v[ii])[ok] / dx[ok])[:, None]
            P = np.vstack([P, pairwise, np.zeros((1, 1))])
        else:
            P = np.vstack([P, _facet_gradients(X, v)])
    elif d > 3:
        warnings.warn(
            "envelope in dimension > 3 uses the uniform conjugate-pair "
            "construction only; accuracy is limited by slope_mult",
            RuntimeWarning,
            stacklevel=3,
        )
    return P


def lce(f: GridFunction, slope_mult: int = 4, exact_cap: int = 48) -> GridFunction:
    """Lower convex envelope via the double conjugate, on f's own grid.

    The envelope is taken over the masked-in nodes only; returned values
    at masked-out nodes are the finite affine-minorant extension.
    """
    X = f.masked_points
    v = f.masked_values
    P = _slope_candidates(f, slope_mult, exact_cap)
    g = _max_affine(P, X, v)  # conjugate at slope candidates
    Q = f.grid.node_matrix()
    vals = _max_affine(Q, P, g)  # biconjugate back at the nodes
    return GridFunction(f.grid, vals.reshape(f.grid.shape), f.mask.copy())


def uce(f: GridFunction, slope_mult: int = 4, exact_cap: int = 48) -> GridFunction:
    """Upper concave envelope: -lce(-f), identically."""
    neg = GridFunction(f.grid, np.where(f.mask, -f.values, np.nan), f.mask.copy())
    env = lce(neg, slope_mult=slope_mult, exact_cap=exact_cap)
    return GridFunction(f.grid, -env.values, f.mask.copy())


# ---------------------------------------------------------------------------
# Exact oracle by support enumeration
# ---------------------------------------------------------------------------


def lce_oracle(f: GridFunction, query, cap: int = 40) -> float:
    """Exact envelope value at ``query``: the minimum of sum(w_i * f_i)
    over convex weights on masked-in nodes with sum(w_i * x_i) = query.

    Enumerates bracketing supports directly (pairs in 1-D, point/segment/
    simplex supports up to d+1 points in general), so it is independent of
    the conjugate-transform path and exact, but limited to ``cap`` nodes.
    """
    X = f.masked_points
    v = f.masked_values
    M, d = X.shape
    if M > cap:
        raise CapExceeded(f"{M} masked-in nodes exceed the oracle cap of {cap}")
    q = np.atleast_1d(np.asarray(query, dtype=float))
    if q.shape != (d,):
        raise ConfigError(f"query must have dimension {d}")
    scale = max(1.0, float(np.max(np.abs(X))))
    tol = 1e-9 * scale
    best = np.inf

    # single nodes
    hits = np.max(np.abs(X - q), axis=1) <= tol
    if hits.any():
        best = float(v[hits].min())

    if M >= 2:
        ii, jj = np.triu_indices(M, k=1)
        dx = X[jj] - X[ii]
        norms = np.einsum("ij,ij->i", dx, dx)
        ok = norms > 0
        tproj = np.zeros(len(ii))
        tproj[ok] = np.einsum("ij,ij->i", q[None, :] - X[ii][ok], dx[ok]) / norms[ok]
        closest = X[ii] + tproj[:, None] * dx
        feas = ok & (np.max(np.abs(closest - q), axis=1) <= tol)
        feas &= (tproj >= -1e-9) & (tproj <= 1 + 1e-9)
        if feas.any():
            w = np.clip(tproj[feas], 0.0, 1.0)
            vals = (1 - w) * v[ii][feas] + w * v[jj][feas]
            best = min(best, float(vals.min()))

    if d >= 2 and M >= d + 1:
        combos = np.array(list(itertools.combinations(range(M), d + 1)))
        A = np.concatenate([X[combos], np.ones((len(combos), d + 1, 1))], axis=2)
        A = np.swapaxes(A, 1, 2)  # rows: coordinates then the sum-to-one row
        rhs = np.append(q, 1.0)
        dets = np.abs(np.linalg.det(A))
        scale_d = np.maximum(np.abs(A).max(axis=(1, 2)) ** (d + 1), 1e-30)
        ok = dets > 1e-12 * scale_d
        if ok.any():
            w = np.linalg.solve(A[ok], np.broadcast_to(rhs, (int(ok.sum()), d + 1))[..., None])[
                ..., 0
            ]
            feas = np.all(w >= -1e-9, axis=1)
            if feas.any():
                vals = np.einsum("ij,ij->i", np.clip(w[feas], 0.0, None), v[combos[ok][feas]])
                sums = np.clip(w[feas], 0.0, None).sum(axis=1)
                vals = vals / sums  # renormalize clipped weights
                best = min(best, float(vals.min()))

    if not np.isfinite(best):
        raise Infeasible("query lies outside the convex hull of the masked-in nodes")
    return best
