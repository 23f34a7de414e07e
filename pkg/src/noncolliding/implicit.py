"""Solvers for the per-step nonlinear system

    xi_i = a_i + sum_{j != i} c_ij / (xi_i - xi_j),   i = 1..d,

which has a unique strictly ordered solution whenever c is symmetric,
non-negative, and positive on the first off-diagonal.  Newton with damping
is the fast path; continuation along an ordinary differential equation from
the trivially ordered point J = (1, ..., d) is the certified fallback.  Two
structure-specific fixed-point iterations are available for tridiagonal
coefficients and for d = 3 with uniform coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import NonConvergenceError

__all__ = [
    "ImplicitProblem",
    "SolverOptions",
    "GapVector",
    "SolveResult",
    "residual",
    "jacobian",
    "solve_newton",
    "solve_homotopy",
    "solve_fixed_point_nn",
    "solve_alternating_d3",
    "solve",
    "solve_batch",
]


@dataclass(frozen=True, eq=False)
class ImplicitProblem:
    """Offsets a and symmetric non-negative coefficients c of the system."""

    a: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        c = np.asarray(self.c, dtype=float)
        if a.ndim != 1:
            raise ValueError("a must be a vector")
        d = a.shape[0]
        if d < 2:
            raise ValueError("need at least two particles")
        if c.shape != (d, d):
            raise ValueError(f"c must be a {d}x{d} matrix")
        if np.any(c < 0):
            raise ValueError("c entries must be non-negative")
        if not np.array_equal(c, c.T):
            raise ValueError("c must be symmetric")
        if np.any(np.diag(c) != 0):
            raise ValueError("c must have zero diagonal")
        if np.any(np.diag(c, 1) <= 0):
            raise ValueError("c must have strictly positive first off-diagonal")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "c", c)

    @property
    def d(self):
        return self.a.shape[0]

    def is_tridiagonal(self):
        mask = np.abs(np.subtract.outer(np.arange(self.d), np.arange(self.d))) >= 2
        return bool(np.all(self.c[mask] == 0))

    def is_uniform(self):
        off = self.c[~np.eye(self.d, dtype=bool)]
        return bool(np.all(off == off[0]))


@dataclass(frozen=True)
class SolverOptions:
    method: str = "auto"
    tol: float = 1e-12
    max_iter: int = 100
    homotopy_steps: int = 64

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.method not in ("auto", "newton", "homotopy", "fixed_point_nn", "alternating_d3"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass(frozen=True, eq=False)
class GapVector:
    """Consecutive gaps x_i = xi_{i+1} - xi_i plus the anchor xi_1."""

    x: np.ndarray
    anchor: float

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if np.any(x <= 0):
            raise ValueError("gaps must be strictly positive")
        object.__setattr__(self, "x", x)

    def to_positions(self):
        return self.anchor + np.concatenate(([0.0], np.cumsum(self.x)))


@dataclass(frozen=True, eq=False)
class SolveResult:
    xi: np.ndarray
    method: str
    iterations: int
    residual_norm: float


def _check_ordered(xi):
    xi = np.asarray(xi, dtype=float)
    if np.any(np.diff(xi) <= 0):
        raise ValueError("xi must be strictly increasing")
    return xi


def _interaction(c, xi):
    # sum_{j != i} c_ij / (xi_i - xi_j) for each i
    diff = xi[:, None] - xi[None, :]
    np.fill_diagonal(diff, 1.0)
    terms = c / diff
    np.fill_diagonal(terms, 0.0)
    return terms.sum(axis=1)


def residual(problem, xi):
    """r_i = xi_i - a_i - sum_{j != i} c_ij / (xi_i - xi_j)."""
    xi = _check_ordered(xi)
    return xi - problem.a - _interaction(problem.c, xi)


def jacobian(problem, xi):
    """Symmetric positive definite matrix I - dg/dx of the system map."""
    xi = _check_ordered(xi)
    diff = xi[:, None] - xi[None, :]
    np.fill_diagonal(diff, 1.0)
    w = problem.c / diff**2
    np.fill_diagonal(w, 0.0)
    m = -w
    m[np.diag_indices_from(m)] = 1.0 + w.sum(axis=1)
    return m


def _initial_guess(a, c):
    # Decoupled-pair gaps: exact for d = 2, ordered by construction.
    da = np.diff(a)
    csup = np.diag(c, 1)
    gaps = 0.5 * (da + np.sqrt(da**2 + 8.0 * csup))
    d = a.shape[0]
    # anchor so that mean(xi) = mean(a); the exact solution satisfies sum(xi) = sum(a)
    anchor = a.mean() - np.sum((d - 1 - np.arange(d - 1)) * gaps) / d
    return anchor + np.concatenate(([0.0], np.cumsum(gaps)))


def _residual_floor(problem, opts, xi=None):
    # Roundoff limits the achievable residual to roughly eps * problem scale;
    # a stalled iteration below this scale-relative floor counts as converged.
    # Near-collision instances inflate the floor through the interaction
    # weights c_ij / (xi_i - xi_j)^2; that contribution is capped so the
    # accepted residual never exceeds 100x the base tolerance.
    amax = max(1.0, float(np.max(np.abs(problem.a))))
    base = opts.tol * amax
    if xi is None:
        return base
    diff = xi[:, None] - xi[None, :]
    np.fill_diagonal(diff, 1.0)
    w = problem.c / diff**2
    np.fill_diagonal(w, 0.0)
    eps = np.finfo(float).eps
    cond_floor = 64.0 * eps * amax * (1.0 + float(w.sum(axis=1).max()))
    return max(base, min(cond_floor, 100.0 * base))


def _newton_from(problem, xi, opts, budget=None):
    """Damped Newton iteration from a strictly ordered start."""
    a, c = problem.a, problem.c
    max_iter = opts.max_iter if budget is None else budget
    r = xi - a - _interaction(c, xi)
    rnorm = np.max(np.abs(r))
    for it in range(max_iter):
        if rnorm <= opts.tol:
            return xi, it
        m = jacobian(problem, xi)
        try:
            delta = cho_solve(cho_factor(m), -r)
        except np.linalg.LinAlgError:  # pragma: no cover - M is SPD in exact arithmetic
            delta = np.linalg.solve(m, -r)
        alpha = 1.0
        for _ in range(60):
            trial = xi + alpha * delta
            if np.all(np.diff(trial) > 0):
                r_trial = trial - a - _interaction(c, trial)
                if np.max(np.abs(r_trial)) < rnorm:
                    xi, r, rnorm = trial, r_trial, np.max(np.abs(r_trial))
                    break
            alpha *= 0.5
        else:
            if rnorm <= _residual_floor(problem, opts, xi):
                return xi, it
            raise NonConvergenceError(
                "newton line search stalled", method="newton", iterations=it, residual=rnorm
            )
    if rnorm <= _residual_floor(problem, opts, xi):
        return xi, max_iter
    raise NonConvergenceError(
        "newton did not reach tolerance", method="newton", iterations=max_iter, residual=rnorm
    )


def solve_newton(problem, opts=None):
    """Damped Newton from the decoupled-pair initial guess."""
    opts = opts or SolverOptions()
    xi, _ = _newton_from(problem, _initial_guess(problem.a, problem.c), opts)
    return xi


def _solve_newton_counted(problem, opts):
    return _newton_from(problem, _initial_guess(problem.a, problem.c), opts)


def solve_homotopy(problem, opts=None):
    """Continuation from the trivially ordered point J = (1, ..., d).

    Integrates dx/dt = (I - dg/dx)^{-1} g(J) from x(0) = J to t = 1 with
    classical 4-stage steps, then polishes with Newton.  Accepted steps must
    keep the trajectory strictly ordered and satisfy the derivative bound
    |dx/dt| <= |g(J)|; a violating step is retried at half length.
    """
    xi, _ = _solve_homotopy_counted(problem, opts or SolverOptions())
    return xi


def _solve_homotopy_counted(problem, opts):
    """Continuation solve; returns (xi, accepted steps + polish iterations).

    Integrates dx/dt = (I - dg/dx)^{-1} g(J) from x(0) = J to t = 1 with
    classical 4-stage steps, then polishes with Newton.  Accepted steps must
    keep the trajectory strictly ordered and satisfy the derivative bound
    |dx/dt| <= |g(J)|; a violating step is retried at half length.
    """
    opts = opts or SolverOptions()
    a, c = problem.a, problem.c
    d = problem.d
    big_j = np.arange(1.0, d + 1.0)
    g_j = a - big_j + _interaction(c, big_j)
    g_norm = np.linalg.norm(g_j)

    def velocity(x):
        if np.any(np.diff(x) <= 0):
            return None
        m = jacobian(problem, x)
        try:
            return cho_solve(cho_factor(m), g_j)
        except np.linalg.LinAlgError:  # pragma: no cover
            return np.linalg.solve(m, g_j)

    x = big_j.copy()
    t = 0.0
    accepted = 0
    h = 1.0 / opts.homotopy_steps
    while t < 1.0 - 1e-15:
        step = min(h, 1.0 - t)
        while True:
            k1 = velocity(x)
            k2 = velocity(x + 0.5 * step * k1) if k1 is not None else None
            k3 = velocity(x + 0.5 * step * k2) if k2 is not None else None
            k4 = velocity(x + step * k3) if k3 is not None else None
            if k4 is not None:
                trial = x + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                v = velocity(trial)
                if v is not None and np.linalg.norm(v) <= g_norm * (1.0 + 1e-9) + 1e-300:
                    break
            step *= 0.5
            if step < 1e-8:
                raise NonConvergenceError(
                    "continuation step collapsed", method="homotopy", residual=None
                )
        x = trial
        t += step
        accepted += 1
    xi, polish = _newton_from(problem, x, opts)
    return xi, accepted + polish


def _nn_offsets(problem):
    return np.diff(problem.a), np.diag(problem.c, 1)


def _nn_map(aa, cc, x):
    # one sweep of the monotone iteration for the tridiagonal gap system
    t = aa.copy()
    t[:-1] -= cc[1:] / x[1:]
    t[1:] -= cc[:-1] / x[:-1]
    return 0.5 * (t + np.sqrt(t**2 + 8.0 * cc))


def _gap_solution_to_positions(problem, gaps):
    anchor = problem.a.mean() - np.sum((problem.d - 1 - np.arange(problem.d - 1)) * gaps) / problem.d
    return GapVector(gaps, float(anchor))


def solve_fixed_point_nn(problem, opts=None, max_sweeps=200_000):
    """Monotone fixed-point iteration for tridiagonal coefficients.

    Starts from the decoupled gaps x_i = (da_i + sqrt(da_i^2 + 8 c_i)) / 2 and
    sweeps the update map; every iterate is coordinate-wise <= its predecessor.
    Stops once both the sweep-to-sweep change and the residual of the
    recovered positions are within tolerance.
    """
    gv, _ = _solve_fixed_point_nn_counted(problem, opts or SolverOptions(), max_sweeps)
    return gv


def _solve_fixed_point_nn_counted(problem, opts, max_sweeps=200_000):
    if not problem.is_tridiagonal():
        raise ValueError("fixed_point_nn requires tridiagonal coefficients")
    aa, cc = _nn_offsets(problem)
    x = 0.5 * (aa + np.sqrt(aa**2 + 8.0 * cc))
    if problem.d == 2:
        return _gap_solution_to_positions(problem, x), 1
    for sweep in range(1, max_sweeps + 1):
        x_next = _nn_map(aa, cc, x)
        if np.any(x_next > x * (1.0 + 1e-13) + 1e-300):
            raise NonConvergenceError(
                "monotone iteration increased", method="fixed_point_nn", iterations=sweep
            )
        change = np.max(np.abs(x_next - x))
        x = x_next
        if change <= opts.tol:
            gv = _gap_solution_to_positions(problem, x)
            if np.max(np.abs(residual(problem, gv.to_positions()))) <= _residual_floor(problem, opts):
                return gv, sweep
    raise NonConvergenceError(
        "fixed-point iteration did not converge", method="fixed_point_nn", iterations=max_sweeps
    )


def alternating_d3_initializers(a, b):
    """Starting pair of the d = 3 alternating iteration in normalized form."""
    x1 = 0.5 * (a + np.sqrt(a**2 + 8.0))
    shift = b - (abs(a) + np.sqrt(2.0)) / 2.0
    y1 = 0.5 * (shift + np.sqrt(shift**2 + 6.0))
    return x1, y1


def solve_alternating_d3(problem, opts=None, max_sweeps=200_000):
    """Alternating gap iteration for d = 3 with uniform coefficients.

    The problem is rescaled by xi = sqrt(c) * zeta to unit coefficients,
    iterated in the normalized variables, and scaled back.  The odd/even
    subsequences interleave: x odd decreasing, x even increasing, y odd
    increasing, y even decreasing; this is asserted along the way.  Not
    offered for d >= 4, where the generalized iteration can diverge.
    """
    gv, _ = _solve_alternating_d3_counted(problem, opts or SolverOptions(), max_sweeps)
    return gv


def _solve_alternating_d3_counted(problem, opts, max_sweeps=200_000):
    if problem.d != 3:
        raise ValueError("alternating_d3 requires d = 3")
    if not problem.is_uniform():
        raise ValueError("alternating_d3 requires uniform coefficients")
    c = float(problem.c[0, 1])
    sq = np.sqrt(c)
    na, nb = np.diff(problem.a) / sq
    x, y = alternating_d3_initializers(na, nb)
    slack = 1e-12
    prev = {"x_odd": x, "y_odd": y, "x_even": None, "y_even": None}
    for n in range(1, max_sweeps):
        px = na - 1.0 / y + 1.0 / (x + y)
        py = nb - 1.0 / x + 1.0 / (x + y)
        x_next = 0.5 * (px + np.sqrt(px**2 + 8.0))
        y_next = 0.5 * (py + np.sqrt(py**2 + 8.0))
        parity = "even" if (n + 1) % 2 == 0 else "odd"
        px_prev, py_prev = prev[f"x_{parity}"], prev[f"y_{parity}"]
        if px_prev is not None:
            # interleaving of the odd/even subsequences, up to roundoff
            if parity == "odd":
                ok = x_next <= px_prev + slack and y_next >= py_prev - slack
            else:
                ok = x_next >= px_prev - slack and y_next <= py_prev + slack
            if not ok:
                raise NonConvergenceError(
                    "alternating subsequences lost interleaving",
                    method="alternating_d3",
                    iterations=n,
                )
        prev[f"x_{parity}"], prev[f"y_{parity}"] = x_next, y_next
        change = abs(x_next - x) + abs(y_next - y)
        x, y = x_next, y_next
        if change <= opts.tol:
            gaps = sq * np.array([x, y])
            gv = _gap_solution_to_positions(problem, gaps)
            if np.max(np.abs(residual(problem, gv.to_positions()))) <= _residual_floor(problem, opts):
                return gv, n
    raise NonConvergenceError(
        "alternating iteration did not converge", method="alternating_d3", iterations=max_sweeps
    )


def solve(problem, opts=None):
    """Dispatch to the requested method, with Newton -> continuation fallback on auto.

    Structure-specific methods are only applicable when their preconditions
    hold; the alternating iteration is deliberately not offered for d >= 4.
    Returns a SolveResult carrying the solution, the method that produced it,
    an iteration count and the final residual max-norm.
    """
    opts = opts or SolverOptions()
    if opts.method == "newton":
        attempts = [("newton", _solve_newton_counted)]
    elif opts.method == "homotopy":
        attempts = [("homotopy", _solve_homotopy_counted)]
    elif opts.method == "fixed_point_nn":
        attempts = [
            (
                "fixed_point_nn",
                lambda p, o: _positions_counted(_solve_fixed_point_nn_counted(p, o)),
            )
        ]
    elif opts.method == "alternating_d3":
        attempts = [
            (
                "alternating_d3",
                lambda p, o: _positions_counted(_solve_alternating_d3_counted(p, o)),
            )
        ]
    else:
        attempts = [("newton", _solve_newton_counted), ("homotopy", _solve_homotopy_counted)]
    last = None
    for name, fn in attempts:
        try:
            xi, iters = fn(problem, opts)
        except NonConvergenceError as exc:
            last = exc
            continue
        r = np.max(np.abs(residual(problem, xi)))
        return SolveResult(xi=xi, method=name, iterations=int(iters), residual_norm=float(r))
    raise NonConvergenceError(
        f"all applicable methods failed: {last}", method=opts.method
    ) from last


def _positions_counted(pair):
    gv, iters = pair
    return gv.to_positions(), iters


# ---------------------------------------------------------------------------
# Batched Newton (vectorized over independent problems sharing one c matrix)


def _interaction_batch(c, xi):
    diff = xi[:, :, None] - xi[:, None, :]
    d = xi.shape[1]
    eye = np.eye(d, dtype=bool)
    diff[:, eye] = 1.0
    terms = c[None, :, :] / diff
    terms[:, eye] = 0.0
    return terms.sum(axis=2)


def _residual_batch(a, c, xi):
    return xi - a - _interaction_batch(c, xi)


def solve_batch(a, c, opts=None):
    """Solve many systems sharing one coefficient matrix c.

    a has shape (m, d); returns ordered solutions of the same shape.  Rows
    where Newton stalls fall back to the scalar continuation solver, so the
    result meets the same residual tolerance as the scalar path.
    """
    opts = opts or SolverOptions()
    a = np.asarray(a, dtype=float)
    m, d = a.shape
    da = np.diff(a, axis=1)
    csup = np.diag(c, 1)
    gaps = 0.5 * (da + np.sqrt(da**2 + 8.0 * csup[None, :]))
    anchor = a.mean(axis=1) - gaps @ (d - 1.0 - np.arange(d - 1)) / d
    xi = anchor[:, None] + np.concatenate(
        [np.zeros((m, 1)), np.cumsum(gaps, axis=1)], axis=1
    )
    eye = np.eye(d, dtype=bool)
    r = _residual_batch(a, c, xi)
    rnorm = np.max(np.abs(r), axis=1)
    active = rnorm > opts.tol
    stalled = np.zeros(m, dtype=bool)
    for _ in range(opts.max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        xs = xi[idx]
        rs = r[idx]
        diff = xs[:, :, None] - xs[:, None, :]
        diff[:, eye] = 1.0
        w = c[None, :, :] / diff**2
        w[:, eye] = 0.0
        jac = -w
        jac[:, eye] = 1.0 + w.sum(axis=2)
        delta = np.linalg.solve(jac, -rs[:, :, None])[:, :, 0]
        alpha = np.ones(len(idx))
        pending = np.ones(len(idx), dtype=bool)
        trial = xs.copy()
        r_trial = rs.copy()
        for _ in range(60):
            sub = np.flatnonzero(pending)
            if sub.size == 0:
                break
            cand = xs[sub] + alpha[sub, None] * delta[sub]
            ordered = np.all(np.diff(cand, axis=1) > 0, axis=1)
            cand_r = np.full_like(cand, np.inf)
            if ordered.any():
                cand_r[ordered] = _residual_batch(a[idx[sub[ordered]]], c, cand[ordered])
            better = ordered & (
                np.max(np.abs(cand_r), axis=1) < np.max(np.abs(rs[sub]), axis=1)
            )
            acc = sub[better]
            trial[acc] = cand[better]
            r_trial[acc] = cand_r[better]
            pending[acc] = False
            alpha[sub[~better]] *= 0.5
        stalled_now = pending
        xi[idx[~stalled_now]] = trial[~stalled_now]
        r[idx[~stalled_now]] = r_trial[~stalled_now]
        stalled[idx[stalled_now]] = True
        rnorm[idx] = np.max(np.abs(r[idx]), axis=1)
        active = (rnorm > opts.tol) & ~stalled
    leftover = np.flatnonzero(rnorm > opts.tol)
    for i in leftover:
        problem = ImplicitProblem(a[i], c)
        xi[i] = solve_homotopy(problem, opts)
    return xi
