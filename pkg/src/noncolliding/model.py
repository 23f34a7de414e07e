"""Particle system definitions.

A system of d ordered particles evolves under pairwise repulsion
gamma_ij / (x_i - x_j), a drift b(x) and a diffusion sigma(x).  The state
space is the open Weyl chamber (strictly increasing coordinates).  Drift and
diffusion are closed parametric families so that their Lipschitz constants
and the diffusion supremum are exact, which keeps the parameter-condition
checkers honest.  A trusted extension point for user-supplied coefficients
is provided but its declared constants are not verified.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "ZeroDrift",
    "ConstantDrift",
    "OrnsteinUhlenbeckDrift",
    "BoundedSmoothDrift",
    "CustomDrift",
    "ConstantMatrixDiffusion",
    "DiagonalBoundedDiffusion",
    "CustomDiffusion",
    "ParticleSystem",
    "ConditionCheck",
    "ConditionReport",
    "uniform_gamma",
    "tridiagonal_gamma",
    "drift_eval",
    "diffusion_eval",
    "check_full_interaction_condition",
    "check_nn_condition",
]


def _as_vector(v, name):
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-d vector")
    return arr


# ---------------------------------------------------------------------------
# Drift families


@dataclass(frozen=True, eq=False)
class ZeroDrift:
    """b_i(x) = 0."""

    def __call__(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def component(self, i, s):
        """Coordinate-wise form b_i(s) for a scalar argument s."""
        return 0.0

    def lipschitz_constant(self):
        return 0.0


@dataclass(frozen=True, eq=False)
class ConstantDrift:
    """b_i(x) = c_i with c_1 <= ... <= c_d."""

    c: np.ndarray

    def __post_init__(self):
        c = _as_vector(self.c, "c")
        if np.any(np.diff(c) < 0):
            raise ValueError("constant drift vector must be non-decreasing")
        object.__setattr__(self, "c", c)

    def __call__(self, x):
        return self.c.copy()

    def component(self, i, s):
        return float(self.c[i])

    def lipschitz_constant(self):
        return 0.0


@dataclass(frozen=True, eq=False)
class OrnsteinUhlenbeckDrift:
    """Mean-reverting drift b_i(x) = theta * (mu_i - x_i)."""

    theta: float
    mu: np.ndarray

    def __post_init__(self):
        if self.theta < 0:
            raise ValueError("theta must be >= 0")
        mu = _as_vector(self.mu, "mu")
        if np.any(np.diff(mu) < 0):
            raise ValueError("mu must be non-decreasing")
        object.__setattr__(self, "mu", mu)

    def __call__(self, x):
        return self.theta * (self.mu - np.asarray(x, dtype=float))

    def component(self, i, s):
        return self.theta * (float(self.mu[i]) - s)

    def lipschitz_constant(self):
        return float(self.theta)


@dataclass(frozen=True, eq=False)
class BoundedSmoothDrift:
    """Smooth bounded drift b_i(x) = beta * tanh(x_i)."""

    beta: float

    def __call__(self, x):
        return self.beta * np.tanh(np.asarray(x, dtype=float))

    def component(self, i, s):
        return self.beta * float(np.tanh(s))

    def lipschitz_constant(self):
        return abs(float(self.beta))


@dataclass(frozen=True, eq=False)
class CustomDrift:
    """User-supplied drift with user-declared constants (trusted, not verified).

    The evaluator maps a length-d state to a length-d drift vector.  Custom
    drifts are accepted for simulation but excluded from parameter-condition
    checking, which relies on the coordinate-wise families above.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    declared_lipschitz: float

    def __call__(self, x):
        return np.asarray(self.evaluator(np.asarray(x, dtype=float)), dtype=float)

    def lipschitz_constant(self):
        return float(self.declared_lipschitz)


# ---------------------------------------------------------------------------
# Diffusion families


@dataclass(frozen=True, eq=False)
class ConstantMatrixDiffusion:
    """sigma(x) = constant d x d matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("diffusion matrix must be square")
        object.__setattr__(self, "matrix", m)

    def __call__(self, x):
        return self.matrix.copy()

    def sigma_sup_sq(self):
        # sup_i sup_x sum_k sigma_ik(x)^2 = max row sum of squares.
        return float(np.max(np.sum(self.matrix**2, axis=1)))

    def lipschitz_constant(self):
        return 0.0


@dataclass(frozen=True, eq=False)
class DiagonalBoundedDiffusion:
    """Diagonal diffusion sigma_ii(x) = s0 + s1 * tanh(x_i), off-diagonal zero."""

    s0: float
    s1: float = 0.0

    def __post_init__(self):
        if self.s0 <= 0:
            raise ValueError("s0 must be > 0")
        if self.s1 < 0:
            raise ValueError("s1 must be >= 0")

    def __call__(self, x):
        return np.diag(self.s0 + self.s1 * np.tanh(np.asarray(x, dtype=float)))

    def diagonal(self, x):
        """Diagonal entries only; x may be batched with shape (..., d)."""
        return self.s0 + self.s1 * np.tanh(np.asarray(x, dtype=float))

    def sigma_sup_sq(self):
        return (self.s0 + self.s1) ** 2

    def lipschitz_constant(self):
        return float(self.s1)


@dataclass(frozen=True, eq=False)
class CustomDiffusion:
    """User-supplied diffusion with declared constants (trusted, not verified)."""

    evaluator: Callable[[np.ndarray], np.ndarray]
    declared_lipschitz: float
    declared_sup_sq: float

    def __call__(self, x):
        return np.asarray(self.evaluator(np.asarray(x, dtype=float)), dtype=float)

    def sigma_sup_sq(self):
        return float(self.declared_sup_sq)

    def lipschitz_constant(self):
        return float(self.declared_lipschitz)


COORDINATEWISE_DRIFTS = (ZeroDrift, ConstantDrift, OrnsteinUhlenbeckDrift, BoundedSmoothDrift)


def drift_eval(spec, x):
    """Evaluate the drift vector (b_1(x), ..., b_d(x))."""
    return spec(x)


def diffusion_eval(spec, x):
    """Evaluate the diffusion matrix (sigma_ij(x))."""
    return spec(x)


# ---------------------------------------------------------------------------
# Interaction matrices


def uniform_gamma(d, value):
    """Full interaction matrix with every off-diagonal entry equal to value."""
    g = np.full((d, d), float(value))
    np.fill_diagonal(g, 0.0)
    return g


def tridiagonal_gamma(d, value):
    """Nearest-neighbour interaction matrix with first off-diagonals equal to value."""
    g = np.zeros((d, d))
    idx = np.arange(d - 1)
    g[idx, idx + 1] = float(value)
    g[idx + 1, idx] = float(value)
    return g


@dataclass(frozen=True, eq=False)
class ParticleSystem:
    """A d-particle repulsive system with ordered initial configuration.

    gamma must be symmetric with zero diagonal, non-negative entries and
    strictly positive first off-diagonal; x0 must be strictly increasing.
    Instances are immutable and safe to share across workers.
    """

    d: int
    gamma: np.ndarray
    drift: object
    diffusion: object
    x0: np.ndarray

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("d must be >= 2")
        g = np.asarray(self.gamma, dtype=float)
        if g.shape != (self.d, self.d):
            raise ValueError(f"gamma must be a {self.d}x{self.d} matrix")
        if np.any(g < 0):
            raise ValueError("gamma entries must be non-negative")
        if not np.array_equal(g, g.T):
            raise ValueError("gamma must be symmetric")
        if np.any(np.diag(g) != 0):
            raise ValueError("gamma must have zero diagonal")
        if np.any(np.diag(g, 1) <= 0):
            raise ValueError("gamma must have strictly positive first off-diagonal")
        x0 = _as_vector(self.x0, "x0")
        if x0.shape != (self.d,):
            raise ValueError(f"x0 must have length {self.d}")
        if np.any(np.diff(x0) <= 0):
            raise ValueError("x0 must be strictly increasing")
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "x0", x0)

    # structure helpers used by the condition checkers and solver dispatch

    def is_uniform(self):
        off = self.gamma[~np.eye(self.d, dtype=bool)]
        return bool(np.all(off == off[0]))

    def uniform_value(self):
        if not self.is_uniform():
            raise ValueError("gamma is not uniform")
        return float(self.gamma[0, 1])

    def is_tridiagonal(self):
        mask = np.abs(np.subtract.outer(np.arange(self.d), np.arange(self.d))) >= 2
        return bool(np.all(self.gamma[mask] == 0))

    def tridiagonal_values(self):
        if not self.is_tridiagonal():
            raise ValueError("gamma is not tridiagonal")
        return np.diag(self.gamma, 1).copy()


# ---------------------------------------------------------------------------
# Parameter-condition checks


@dataclass(frozen=True)
class ConditionCheck:
    name: str
    lhs: float
    rhs: float
    satisfied: bool


@dataclass(frozen=True)
class ConditionReport:
    satisfied: bool
    checks: tuple

    def __iter__(self):
        return iter(self.checks)


def _require_coordinatewise_drift(system):
    if not isinstance(system.drift, COORDINATEWISE_DRIFTS):
        raise ValueError(
            "condition checking requires a coordinate-wise drift family; "
            "custom drifts are accepted for simulation only"
        )


def check_full_interaction_condition(system, p):
    """Check the moment-bound condition for uniform full interaction.

    Requires ratio = 3*gamma / (d * sigma_sup_sq) >= 2 and p <= ratio - 1.
    Returns a report with both sides of each inequality.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    _require_coordinatewise_drift(system)
    if not system.is_uniform():
        raise ValueError("full-interaction condition is only stated for uniform gamma")
    gamma = system.uniform_value()
    sig2 = system.diffusion.sigma_sup_sq()
    ratio = 3.0 * gamma / (system.d * sig2)
    checks = (
        ConditionCheck("3*gamma/(d*sigma_sup_sq) >= 2", ratio, 2.0, ratio >= 2.0),
        ConditionCheck("p <= 3*gamma/(d*sigma_sup_sq) - 1", p, ratio - 1.0, p <= ratio - 1.0),
    )
    return ConditionReport(all(c.satisfied for c in checks), checks)


def check_nn_condition(system, p, chi):
    """Check the moment-bound condition for nearest-neighbour interaction.

    Requires gamma / (2 * sigma_sup_sq) >= (p + 1) / (2 - chi), where chi is
    the sharp gap-inequality constant computed by analysis.chi_bar.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    if chi >= 2:
        raise ValueError("chi must be < 2")
    _require_coordinatewise_drift(system)
    if not system.is_tridiagonal():
        raise ValueError("nearest-neighbour condition requires tridiagonal gamma")
    vals = system.tridiagonal_values()
    if np.any(vals != vals[0]):
        raise ValueError("nearest-neighbour condition is only stated for a single gamma value")
    gamma = float(vals[0])
    sig2 = system.diffusion.sigma_sup_sq()
    lhs = gamma / (2.0 * sig2)
    rhs = (p + 1.0) / (2.0 - chi)
    checks = (ConditionCheck("gamma/(2*sigma_sup_sq) >= (p+1)/(2-chi)", lhs, rhs, lhs >= rhs),)
    return ConditionReport(checks[0].satisfied, checks)
