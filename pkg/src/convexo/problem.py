"""Problem container: dynamics and cost expressions plus horizon data."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .control import ControlBox
from .errors import ConfigError
from .expr import EvalEnv, Expr, evaluate, parse, to_source

__all__ = ["ProblemSpec"]


@dataclass
class ProblemSpec:
    """A control problem: x' = phi(x, u, t), J = integral of f, u in a box.

    ``time_mode`` selects whether the cost is read at the fixed horizon T
    or minimised over intermediate times as well ("free").
    """

    n: int
    r: int
    phi: tuple
    f: Expr
    x0: np.ndarray
    T: float
    box: ControlBox
    time_mode: str = "fixed"

    def __post_init__(self):
        self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        self.T = float(self.T)
        if len(self.phi) != self.n:
            raise ConfigError(f"expected {self.n} dynamics expressions, got {len(self.phi)}")
        if self.x0.shape != (self.n,):
            raise ConfigError(f"x0 must have {self.n} components")
        if self.T <= 0:
            raise ConfigError("horizon T must be positive")
        if self.box.r != self.r:
            raise ConfigError("control box dimension does not match r")
        if self.time_mode not in ("fixed", "free"):
            raise ConfigError("time_mode must be 'fixed' or 'free'")

    @classmethod
    def from_strings(
        cls,
        n: int,
        r: int,
        phi: Sequence[str],
        f: str,
        x0,
        T: float,
        u_lower=None,
        u_upper=None,
        time_mode: str = "fixed",
    ) -> "ProblemSpec":
        dims = (n, r)
        phi_ast = tuple(parse(src, dims) for src in phi)
        f_ast = parse(f, dims)
        if r == 0:
            box = ControlBox(np.zeros(0), np.zeros(0))
        else:
            box = ControlBox(np.atleast_1d(u_lower), np.atleast_1d(u_upper))
        return cls(n, r, phi_ast, f_ast, np.asarray(x0, dtype=float), T, box, time_mode)

    @property
    def phi_sources(self) -> list[str]:
        return [to_source(e) for e in self.phi]

    @property
    def f_source(self) -> str:
        return to_source(self.f)

    def _env(self, X: np.ndarray, U: np.ndarray, t) -> EvalEnv:
        return EvalEnv(np.asarray(X, dtype=float).T, np.asarray(U, dtype=float).T, t)

    def dynamics(self, X: np.ndarray, U: np.ndarray, t) -> np.ndarray:
        """Batched right-hand side: X (B, n), U (B, r) -> (B, n)."""
        env = self._env(X, U, t)
        B = np.asarray(X).shape[0]
        cols = [
            np.broadcast_to(np.asarray(evaluate(e, env, strict=False), dtype=float), (B,))
            for e in self.phi
        ]
        return np.stack(cols, axis=1)

    def cost(self, X: np.ndarray, U: np.ndarray, t) -> np.ndarray:
        """Batched cost integrand: (B, n), (B, r) -> (B,)."""
        env = self._env(X, U, t)
        B = np.asarray(X).shape[0]
        return np.broadcast_to(
            np.asarray(evaluate(self.f, env, strict=False), dtype=float), (B,)
        ).copy()
