"""Strong-error measurement, moment estimators, and inequality oracles.

The exact solution of the particle system is unavailable, so strong errors
are measured against the semi-implicit scheme at a much finer reference
level driven by the same Brownian path (common random numbers); the
reference-to-coarsest ratio of at least 4 keeps proxy bias below fit noise.
Rates come from a least-squares fit of log2(error) against log2(n).

The gap inequalities are checked pointwise on explicitly sampled chamber
configurations; the sharp nearest-neighbour constant chi_bar(d, p) is
computed by multi-start constrained maximization over the positive
(p+2)-norm unit sphere.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import implicit, scheme
from .model import drift_eval
from .scheme import TimeGrid, simulate_batch

__all__ = [
    "ConvergenceStudy",
    "RateEstimate",
    "MomentReport",
    "strong_error",
    "run_study",
    "fit_rate",
    "estimate_moments",
    "moment_profile",
    "collision_rate_explicit",
    "verify_gap_inequality_full",
    "verify_gap_inequality_nn",
    "sample_chamber_points",
    "sweep_gap_inequality_full",
    "sweep_gap_inequality_nn",
    "chi_bar",
    "trend_statistic",
]

ERROR_MODES = ("grid_sup_Lp", "terminal_L2", "grid_sup_L2")


@dataclass(frozen=True, eq=False)
class ConvergenceStudy:
    """Common-random-number strong-error experiment specification."""

    system: object
    T: float
    levels: tuple
    ref_level: int
    replications: int
    error_mode: str = "grid_sup_Lp"
    p: float = 2.0
    base_seed: int = 0

    def __post_init__(self):
        levels = tuple(int(n) for n in self.levels)
        if len(levels) == 0:
            raise ValueError("levels must be non-empty")
        for n in levels:
            if n < 1 or (n & (n - 1)) != 0:
                raise ValueError("levels must be powers of 2")
            if self.ref_level % n != 0:
                raise ValueError("all levels must divide ref_level")
        if (self.ref_level & (self.ref_level - 1)) != 0:
            raise ValueError("ref_level must be a power of 2")
        if self.ref_level < 4 * max(levels):
            raise ValueError("ref_level must be at least 4x the largest level")
        if self.error_mode not in ERROR_MODES:
            raise ValueError(f"error_mode must be one of {ERROR_MODES}")
        if self.error_mode == "grid_sup_Lp" and self.p <= 0:
            raise ValueError("p must be > 0")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.T <= 0:
            raise ValueError("T must be > 0")
        object.__setattr__(self, "levels", levels)


@dataclass(frozen=True, eq=False)
class RateEstimate:
    """Per-level strong errors plus the fitted log-log slope."""

    levels: tuple
    errors: tuple
    std_errs: tuple
    slope: float
    intercept: float
    r_squared: float


@dataclass(frozen=True, eq=False)
class MomentReport:
    t: float
    p: float
    est_abs_moment: float
    abs_moment_std_err: float
    est_inv_gap_moments: np.ndarray
    inv_gap_std_errs: np.ndarray
    bound: float


def _coarsen_batch(increments, factor):
    # pairwise halving, matching scheme.coarsen bit-for-bit
    out = increments
    f = factor
    while f > 1:
        out = out[:, 0::2] + out[:, 1::2]
        f //= 2
    return out


def _error_functional(mode, p, coarse_states, ref_states):
    # Euclidean norm of the state mismatch at each recorded grid time
    dist = np.linalg.norm(coarse_states - ref_states, axis=2)
    if mode == "terminal_L2":
        return dist[:, -1]
    return dist.max(axis=1)


def _moment_power(mode, p):
    return p if mode == "grid_sup_Lp" else 2.0


def _lp_estimate(samples, p):
    """(mean of e^p)^(1/p) with a delta-method standard error."""
    powered = samples**p
    m = powered.mean()
    if m == 0.0:
        return 0.0, 0.0
    se_m = powered.std(ddof=1) / np.sqrt(len(powered)) if len(powered) > 1 else 0.0
    est = m ** (1.0 / p)
    return float(est), float((1.0 / p) * m ** (1.0 / p - 1.0) * se_m)


def _per_level_errors(study, levels, threads=1, chunk=250):
    """Per-replication error samples at each level, sharing one reference run."""
    nmax = max(levels)
    ref_stride = study.ref_level // nmax
    grid_ref = TimeGrid(study.T, study.ref_level)
    samples = {n: np.empty(study.replications) for n in levels}
    starts = list(range(0, study.replications, chunk))

    def run_chunk(start):
        stop = min(start + chunk, study.replications)
        inc = _batch_increments(
            study.base_seed, start, stop, study.system.d, study.T, study.ref_level
        )
        ref_rec, _ = simulate_batch(study.system, grid_ref, inc, record_stride=ref_stride)
        for n in levels:
            if n == study.ref_level:
                samples[n][start:stop] = 0.0
                continue
            cinc = _coarsen_batch(inc, study.ref_level // n)
            rec, _ = simulate_batch(study.system, TimeGrid(study.T, n), cinc)
            ref_at = ref_rec[:, :: nmax // n]
            samples[n][start:stop] = _error_functional(
                study.error_mode, study.p, rec, ref_at
            )

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run_chunk, starts))
    else:
        for start in starts:
            run_chunk(start)
    return samples


def strong_error(study, n, threads=1):
    """Monte Carlo strong error and standard error at one level."""
    if n != study.ref_level and n not in study.levels:
        raise ValueError("n must be one of the study levels (or the reference level)")
    if n == study.ref_level:
        return 0.0, 0.0
    samples = _per_level_errors(study, (int(n),), threads=threads)
    return _lp_estimate(samples[int(n)], _moment_power(study.error_mode, study.p))


def run_study(study, threads=1):
    """Errors at every level (one shared reference run) plus the rate fit."""
    samples = _per_level_errors(study, study.levels, threads=threads)
    power = _moment_power(study.error_mode, study.p)
    errors, std_errs = zip(*(_lp_estimate(samples[n], power) for n in study.levels))
    fit = fit_rate(list(zip(study.levels, errors)))
    return RateEstimate(
        levels=tuple(study.levels),
        errors=tuple(errors),
        std_errs=tuple(std_errs),
        slope=fit.slope,
        intercept=fit.intercept,
        r_squared=fit.r_squared,
    )


def fit_rate(estimates):
    """Least-squares fit of log2(error) vs log2(n); slope is the positive rate."""
    if len(estimates) < 3:
        raise ValueError("need at least 3 levels to fit a rate")
    ns = np.array([float(n) for n, _ in estimates])
    errs = np.array([float(e) for _, e in estimates])
    if np.any(errs <= 0):
        raise ValueError("errors must be positive")
    x = np.log2(ns)
    y = np.log2(errs)
    slope, intercept = np.polyfit(x, y, 1)
    yhat = slope * x + intercept
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return RateEstimate(
        levels=tuple(int(n) for n in ns),
        errors=tuple(errs),
        std_errs=tuple(0.0 for _ in errs),
        slope=float(-slope),
        intercept=float(intercept),
        r_squared=float(r2),
    )


def trend_statistic(levels, errors):
    """error * sqrt(n / log n) per level; reported, never thresholded."""
    ns = np.asarray(levels, dtype=float)
    errs = np.asarray(errors, dtype=float)
    return errs * np.sqrt(ns / np.log(ns))


# ---------------------------------------------------------------------------
# Moments


def moment_profile(system, T, p, M, n, base_seed=0, times=None, chunk=250):
    """MomentReport at each requested time from one batched simulation.

    times defaults to the recorded grid times; each report carries the
    inverse-gap bound sum(gap_i(0)^-p) * exp(p * t * Lip(b)) at its own t.
    """
    if p < 0:
        raise ValueError("p must be >= 0")
    grid = TimeGrid(T, n)
    grid_times = grid.times()
    if times is None:
        times = grid_times
    idx = [int(np.argmin(np.abs(grid_times - t))) for t in np.atleast_1d(times)]
    abs_pow = np.zeros((M, len(idx)))
    inv_pow = np.zeros((M, len(idx), system.d - 1))
    for start in range(0, M, chunk):
        stop = min(start + chunk, M)
        inc = _batch_increments(base_seed, start, stop, system.d, T, n)
        rec, _ = simulate_batch(system, grid, inc)
        states = rec[:, idx]
        abs_pow[start:stop] = np.linalg.norm(states, axis=2) ** p
        inv_pow[start:stop] = np.diff(states, axis=2) ** (-float(p))
    lip = system.drift.lipschitz_constant()
    gap0 = np.diff(system.x0)
    reports = []
    for j, k in enumerate(idx):
        t = grid_times[k]
        abs_m = abs_pow[:, j].mean()
        abs_se = abs_pow[:, j].std(ddof=1) / np.sqrt(M) if M > 1 else 0.0
        inv_m = inv_pow[:, j].mean(axis=0)
        inv_se = inv_pow[:, j].std(axis=0, ddof=1) / np.sqrt(M) if M > 1 else np.zeros(system.d - 1)
        bound = float(np.sum(gap0 ** (-float(p))) * np.exp(p * t * lip))
        reports.append(
            MomentReport(
                t=float(t),
                p=float(p),
                est_abs_moment=float(abs_m),
                abs_moment_std_err=float(abs_se),
                est_inv_gap_moments=inv_m,
                inv_gap_std_errs=inv_se,
                bound=bound,
            )
        )
    return reports


def _batch_increments(base_seed, start, stop, d, T, n):
    inc = np.empty((stop - start, n, d))
    scale = np.sqrt(T / n)
    for i, rep in enumerate(range(start, stop)):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((int(base_seed), rep)))
        )
        inc[i] = rng.standard_normal((n, d)) * scale
    return inc


def estimate_moments(system, t, p, M, n, base_seed=0):
    """Moment estimates at the grid time nearest t on an n-step grid over [0, t]."""
    if t <= 0:
        reports = moment_profile(system, 1.0, p, 1, 1, base_seed, times=[0.0])
        return reports[0]
    return moment_profile(system, t, p, M, n, base_seed, times=[t])[0]


# ---------------------------------------------------------------------------
# Explicit-scheme collision rate


def collision_rate_explicit(system, n, M, seed, T=1.0):
    """Fraction of explicit-scheme paths that leave the ordered chamber."""
    if M < 1:
        raise ValueError("M must be >= 1")
    grid = TimeGrid(T, n)
    h = grid.h
    exited = 0
    chunk = 2000
    for start in range(0, M, chunk):
        stop = min(start + chunk, M)
        inc = _batch_increments(seed, start, stop, system.d, T, n)
        x = np.broadcast_to(system.x0, (stop - start, system.d)).copy()
        alive = np.ones(stop - start, dtype=bool)
        for k in range(n):
            if not alive.any():
                break
            xa = x[alive]
            diff = xa[:, :, None] - xa[:, None, :]
            eye = np.eye(system.d, dtype=bool)
            diff[:, eye] = 1.0
            terms = system.gamma[None] / diff
            terms[:, eye] = 0.0
            b = drift_eval(system.drift, xa)
            sig = system.diffusion
            dW = inc[alive, k]
            if hasattr(sig, "diagonal"):
                noise = sig.diagonal(xa) * dW
            elif hasattr(sig, "matrix"):
                noise = dW @ sig.matrix.T
            else:
                noise = np.stack([sig(row) @ w for row, w in zip(xa, dW)])
            xa = xa + (terms.sum(axis=2) + b) * h + noise
            ordered = np.all(np.diff(xa, axis=1) > 0, axis=1)
            live_idx = np.flatnonzero(alive)
            x[live_idx[ordered]] = xa[ordered]
            alive[live_idx[~ordered]] = False
        exited += int(np.count_nonzero(~alive))
    return exited / M


# ---------------------------------------------------------------------------
# Gap inequalities


def _check_chamber(x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] < 2:
        raise ValueError("x must be a vector of length >= 2")
    if np.any(np.diff(x) <= 0):
        raise ValueError("x must be strictly increasing")
    return x


def verify_gap_inequality_full(x, p):
    """Both sides of the full-interaction gap inequality; contract lhs < rhs."""
    x = _check_chamber(x)
    if p < 0:
        raise ValueError("p must be >= 0")
    d = x.shape[0]
    gaps = np.diff(x)
    lhs = 0.0
    for i in range(d - 1):
        for k in range(d):
            if k in (i, i + 1):
                continue
            lhs += 1.0 / (gaps[i] ** p * (x[i + 1] - x[k]) * (x[i] - x[k]))
    rhs = (2.0 - 3.0 / d) * np.sum(gaps ** (-(p + 2.0)))
    return float(lhs), float(rhs)


def verify_gap_inequality_nn(x, p, chi):
    """Both sides of the nearest-neighbour gap inequality; contract lhs <= rhs."""
    x = _check_chamber(x)
    if x.shape[0] < 3:
        raise ValueError("nearest-neighbour inequality needs d >= 3")
    if p < 0:
        raise ValueError("p must be >= 0")
    gaps = np.diff(x)
    g1, g2 = gaps[:-1], gaps[1:]
    lhs = np.sum(1.0 / (g2 * g1 ** (p + 1.0)) + 1.0 / (g2 ** (p + 1.0) * g1))
    rhs = chi * np.sum(gaps ** (-(p + 2.0)))
    return float(lhs), float(rhs)


def sample_chamber_points(rng, d, count, gap_lo=1e-3, gap_hi=1e3):
    """Random ordered configurations with log-uniform gaps in [gap_lo, gap_hi]."""
    gaps = np.exp(rng.uniform(np.log(gap_lo), np.log(gap_hi), size=(count, d - 1)))
    anchor = rng.uniform(-1.0, 1.0, size=(count, 1))
    return np.concatenate([anchor, anchor + np.cumsum(gaps, axis=1)], axis=1)


def _full_sides_batch(pts, p):
    m, d = pts.shape
    gaps = np.diff(pts, axis=1)
    lhs = np.zeros(m)
    for i in range(d - 1):
        for k in range(d):
            if k in (i, i + 1):
                continue
            lhs += 1.0 / (gaps[:, i] ** p * (pts[:, i + 1] - pts[:, k]) * (pts[:, i] - pts[:, k]))
    rhs = (2.0 - 3.0 / d) * np.sum(gaps ** (-(p + 2.0)), axis=1)
    return lhs, rhs


def _nn_sides_batch(pts, p, chi):
    gaps = np.diff(pts, axis=1)
    g1, g2 = gaps[:, :-1], gaps[:, 1:]
    lhs = np.sum(1.0 / (g2 * g1 ** (p + 1.0)) + 1.0 / (g2 ** (p + 1.0) * g1), axis=1)
    rhs = chi * np.sum(gaps ** (-(p + 2.0)), axis=1)
    return lhs, rhs


def sweep_gap_inequality_full(d, p, count, seed=0):
    """Number of violations of the strict full inequality over random points."""
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), int(d), int(round(p)))))
    pts = sample_chamber_points(rng, d, count)
    lhs, rhs = _full_sides_batch(pts, p)
    return int(np.count_nonzero(lhs >= rhs))


def sweep_gap_inequality_nn(d, p, chi, count, seed=0):
    """Number of violations of the nearest-neighbour inequality with constant chi."""
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), int(d), int(round(p)), 1)))
    pts = sample_chamber_points(rng, d, count)
    lhs, rhs = _nn_sides_batch(pts, p, chi)
    return int(np.count_nonzero(lhs > rhs * (1.0 + 1e-12)))


# ---------------------------------------------------------------------------
# The sharp nearest-neighbour constant chi_bar(d, p)


def _chi_objective(xi, p):
    return float(np.sum(xi[1:] * xi[:-1] ** p + xi[1:] ** p * xi[:-1]))


def chi_bar(d, p, resolution=12, seed=0):
    """Maximum of sum(xi_{i+1} xi_i^p + xi_{i+1}^p xi_i) on the positive
    (p+2)-norm unit sphere in dimension d - 1.

    Multi-start: the symmetric point, 16 random directions, and the best
    candidates of a coarse grid scan whose density grows with `resolution`.
    Each start is refined by constrained sequential quadratic programming.
    The returned value is the sharp constant of the nearest-neighbour gap
    inequality; callers that need it strictly below 2 must check.
    """
    if d < 3:
        raise ValueError("d must be >= 3")
    if p < 0:
        raise ValueError("p must be >= 0")
    m = d - 1
    q = p + 2.0

    def normalize(v):
        v = np.clip(v, 1e-12, None)
        return v / np.sum(v**q) ** (1.0 / q)

    starts = [normalize(np.ones(m))]
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), int(d), int(round(100 * p)))))
    for _ in range(16):
        starts.append(normalize(rng.uniform(0.05, 1.0, m)))
    # coarse grid prescan over simplex directions
    grid_pts = []
    levels = max(2, int(resolution))
    if m == 2:
        thetas = np.linspace(0.02, np.pi / 2 - 0.02, levels * 4)
        for th in thetas:
            grid_pts.append(normalize(np.array([np.cos(th), np.sin(th)])))
    else:
        for _ in range(levels * 40):
            grid_pts.append(normalize(rng.dirichlet(np.ones(m)) + 1e-6))
    grid_pts.sort(key=lambda v: -_chi_objective(v, p))
    starts.extend(grid_pts[:8])

    best = max(_chi_objective(s, p) for s in starts)
    cons = {"type": "eq", "fun": lambda v: np.sum(np.abs(v) ** q) - 1.0}
    bounds = [(0.0, 1.0)] * m
    for s in starts:
        res = minimize(
            lambda v: -_chi_objective(v, p),
            s,
            method="SLSQP",
            bounds=bounds,
            constraints=[cons],
            options={"maxiter": 400, "ftol": 1e-14},
        )
        if res.success or res.status in (4, 8):
            v = normalize(np.abs(res.x))
            best = max(best, _chi_objective(v, p))
    return float(best)
