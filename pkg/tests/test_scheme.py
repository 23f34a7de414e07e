"""Unit tests for Brownian-path generation and the time-stepping schemes."""

import numpy as np
import pytest

from noncolliding import (
    ConstantMatrixDiffusion,
    DiagonalBoundedDiffusion,
    OrnsteinUhlenbeckDrift,
    ParticleSystem,
    TimeGrid,
    ZeroDrift,
    coarsen,
    generate_brownian,
    simulate,
    simulate_batch,
    step_explicit,
    step_semi_implicit,
    uniform_gamma,
)
from noncolliding.scheme import generate_brownian_batch, replication_seed


def dyson(d, gamma, x0=None, drift=None, diffusion=None):
    return ParticleSystem(
        d=d,
        gamma=uniform_gamma(d, gamma),
        drift=drift or ZeroDrift(),
        diffusion=diffusion or ConstantMatrixDiffusion(np.eye(d)),
        x0=np.linspace(-1.0, 1.0, d) if x0 is None else np.asarray(x0, dtype=float),
    )


class TestTimeGrid:
    def test_h_and_times(self):
        g = TimeGrid(1.0, 4)
        assert g.h == 0.25
        assert np.allclose(g.times(), [0.0, 0.25, 0.5, 0.75, 1.0])

    def test_validation(self):
        with pytest.raises(ValueError):
            TimeGrid(0.0, 4)
        with pytest.raises(ValueError):
            TimeGrid(1.0, 0)


class TestBrownian:
    def test_reproducible(self):
        p1 = generate_brownian(42, 3, 1.0, 64)
        p2 = generate_brownian(42, 3, 1.0, 64)
        assert np.array_equal(p1.increments, p2.increments)

    def test_distinct_seeds_differ(self):
        p1 = generate_brownian(1, 2, 1.0, 32)
        p2 = generate_brownian(2, 2, 1.0, 32)
        assert not np.array_equal(p1.increments, p2.increments)

    def test_requires_power_of_two(self):
        with pytest.raises(ValueError):
            generate_brownian(0, 2, 1.0, 48)

    def test_variance_scaling(self):
        p = generate_brownian(7, 1, 2.0, 4096)
        # Var of each increment is T/n = 2/4096
        assert p.increments.var() == pytest.approx(2.0 / 4096, rel=0.1)

    def test_terminal_is_sum(self):
        p = generate_brownian(5, 2, 1.0, 16)
        assert np.allclose(p.terminal(), p.increments.sum(axis=0))


class TestCoarsen:
    def test_sums_preserved(self):
        p = generate_brownian(9, 2, 1.0, 64)
        c = coarsen(p, 8)
        assert c.n == 8
        assert np.allclose(c.terminal(), p.terminal(), atol=1e-14)

    def test_exactly_associative(self):
        p = generate_brownian(9, 3, 1.0, 64)
        twice = coarsen(coarsen(p, 2), 2)
        once = coarsen(p, 4)
        assert np.array_equal(twice.increments, once.increments)

    def test_factor_one_identity(self):
        p = generate_brownian(9, 2, 1.0, 16)
        assert coarsen(p, 1) is p

    def test_validation(self):
        p = generate_brownian(9, 2, 1.0, 16)
        with pytest.raises(ValueError):
            coarsen(p, 3)
        with pytest.raises(ValueError):
            coarsen(p, 32)


class TestSteps:
    def test_semi_implicit_closed_form(self):
        # x = (-1, 1), zero drift/noise, gamma*h = 1: solve xi = x + 1/(xi_i - xi_j)
        # gap g solves g = 2 + 2/g => g = 1 + sqrt(3)... with a = (-1, 1), c = 1:
        # dgap = 2, gap = (2 + sqrt(4 + 8))/2 = 1 + sqrt(3); xi = -+(1+sqrt(3))/2
        sys_ = dyson(2, 1.0, x0=[-1.0, 1.0])
        xi, result = step_semi_implicit(sys_, sys_.x0, h=1.0, dW=np.zeros(2))
        want = (1.0 + np.sqrt(3.0)) / 2.0
        assert np.allclose(xi, [-want, want], atol=1e-12)
        assert result.residual_norm <= 1e-10

    def test_semi_implicit_symmetric_unit(self):
        # x = (-0.5, 0.5), c = h*gamma = 0.5: gap solves g = 1 + 1/g => g = (1+sqrt(5))/2? no:
        # dgap=1, c=0.5: g = (1 + sqrt(1 + 4))/2 = (1+sqrt(5))/2
        sys_ = dyson(2, 0.5, x0=[-0.5, 0.5])
        xi, _ = step_semi_implicit(sys_, sys_.x0, h=1.0, dW=np.zeros(2))
        want = (1.0 + np.sqrt(5.0)) / 4.0
        assert np.allclose(xi, [-want, want], atol=1e-12)

    def test_semi_implicit_rejects_bad_h(self):
        sys_ = dyson(2, 1.0)
        with pytest.raises(ValueError):
            step_semi_implicit(sys_, sys_.x0, h=0.0, dW=np.zeros(2))

    def test_explicit_closed_form(self):
        # x = (-1, 1): interaction drift is (-gamma/2, gamma/2); h=0.5, gamma=1
        sys_ = dyson(2, 1.0, x0=[-1.0, 1.0])
        new, ordered = step_explicit(sys_, sys_.x0, h=0.5, dW=np.zeros(2))
        assert np.allclose(new, [-1.25, 1.25], atol=1e-14)
        assert ordered

    def test_explicit_can_cross(self):
        # a large inward noise kick swaps the particles
        sys_ = dyson(2, 0.01, x0=[-0.1, 0.1])
        new, ordered = step_explicit(sys_, sys_.x0, h=0.01, dW=np.array([1.0, -1.0]))
        assert not ordered


class TestSimulate:
    def test_semi_implicit_stays_ordered(self):
        sys_ = dyson(4, 2.0)
        grid = TimeGrid(1.0, 64)
        path = generate_brownian(3, 4, 1.0, 64)
        res = simulate(sys_, grid, path)
        assert res.min_gap > 0
        assert not res.exited_chamber
        assert res.states.shape == (65, 4)
        assert np.all(res.solver_iters >= 0)

    def test_explicit_freezes_after_exit(self):
        # tiny repulsion, big steps: exits are common with this seed
        sys_ = dyson(3, 0.01, x0=[-0.05, 0.0, 0.05])
        grid = TimeGrid(1.0, 4)
        exited = None
        for seed in range(20):
            res = simulate(sys_, grid, generate_brownian(seed, 3, 1.0, 4), scheme="explicit")
            if res.exited_chamber:
                exited = res
                break
        assert exited is not None
        k = exited.exit_step
        assert k is not None and 1 <= k <= 4
        # rows at and after the exit step hold the last valid state
        for row in range(k, 5):
            assert np.array_equal(exited.states[row], exited.states[k - 1])

    def test_mismatched_path_rejected(self):
        sys_ = dyson(2, 1.0)
        with pytest.raises(ValueError):
            simulate(sys_, TimeGrid(1.0, 8), generate_brownian(0, 2, 1.0, 16))
        with pytest.raises(ValueError):
            simulate(sys_, TimeGrid(1.0, 16), generate_brownian(0, 3, 1.0, 16))

    def test_unknown_scheme_rejected(self):
        sys_ = dyson(2, 1.0)
        with pytest.raises(ValueError):
            simulate(sys_, TimeGrid(1.0, 16), generate_brownian(0, 2, 1.0, 16), scheme="milstein")

    def test_deterministic(self):
        sys_ = dyson(3, 4.0)
        grid = TimeGrid(1.0, 32)
        r1 = simulate(sys_, grid, generate_brownian(12, 3, 1.0, 32))
        r2 = simulate(sys_, grid, generate_brownian(12, 3, 1.0, 32))
        assert np.array_equal(r1.states, r2.states)


class TestBatch:
    def test_replication_seed_deterministic(self):
        assert replication_seed(5, 0) == replication_seed(5, 0)
        assert replication_seed(5, 0) != replication_seed(5, 1)

    def test_batch_matches_scalar_identity_diffusion(self):
        sys_ = dyson(3, 4.0)
        grid = TimeGrid(1.0, 32)
        inc = generate_brownian_batch(7, 5, 3, 1.0, 32)
        rec, min_gap = simulate_batch(sys_, grid, inc)
        assert min_gap > 0
        # batch increments use SeedSequence((base, rep)) directly
        for m in range(5):
            rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((7, m))))
            assert np.array_equal(inc[m], rng.standard_normal((32, 3)) * np.sqrt(1.0 / 32))

    def test_batch_matches_scalar_paths(self):
        sys_ = dyson(
            3, 4.0,
            drift=OrnsteinUhlenbeckDrift(theta=0.3, mu=np.array([-1.0, 0.0, 1.0])),
            diffusion=DiagonalBoundedDiffusion(s0=0.8, s1=0.2),
        )
        grid = TimeGrid(1.0, 16)
        inc = generate_brownian_batch(11, 4, 3, 1.0, 16)
        rec, _ = simulate_batch(sys_, grid, inc)
        from noncolliding.scheme import BrownianPath

        for m in range(4):
            path = BrownianPath(seed=0, d=3, T=1.0, n_max=16, increments=inc[m])
            res = simulate(sys_, grid, path)
            assert np.max(np.abs(rec[m] - res.states)) < 1e-9

    def test_record_stride(self):
        sys_ = dyson(3, 4.0)
        grid = TimeGrid(1.0, 32)
        inc = generate_brownian_batch(3, 2, 3, 1.0, 32)
        full, _ = simulate_batch(sys_, grid, inc)
        strided, _ = simulate_batch(sys_, grid, inc, record_stride=8)
        assert strided.shape == (2, 5, 3)
        assert np.array_equal(strided, full[:, ::8])

    def test_stride_must_divide(self):
        sys_ = dyson(3, 4.0)
        inc = generate_brownian_batch(3, 1, 3, 1.0, 32)
        with pytest.raises(ValueError):
            simulate_batch(sys_, TimeGrid(1.0, 32), inc, record_stride=5)
