from __future__ import annotations

import dataclasses
import math

import numpy as np
import pytest

from volterra_markov.affine_moments import ConstantVol, ModelSpec, SqrtVol, first_moment, rough_cir_kernel
from volterra_markov.errors import DomainError, InsufficientMassError, SimulationError
from volterra_markov.gaussian_rl import certificate_at, rl_covariance, sample_gaussian_paths
from volterra_markov.kernels import Constant, Exponential, Fractional, LogModulated
from volterra_markov.mc_sim import (
    MAGIC,
    PathEnsemble,
    brownian_increments,
    coarsen_increments,
    conditional_prob_estimate,
    empirical_moment,
    simulate_sde_exponential,
    simulate_sve,
    wilson_interval,
)
from volterra_markov.volterra_solver import Grid


@dataclasses.dataclass(frozen=True)
class _GuardedSqrt(SqrtVol):
    """Square-root diffusion that refuses negative arguments."""

    def sigma(self, y):
        assert np.min(y) >= 0.0, "diffusion evaluated at a negative state"
        return super().sigma(y)


class TestDeterministicCases:
    @pytest.mark.parametrize("kernel", [Fractional(0.25), Exponential(2.0, 0.5), LogModulated(0.3)], ids=lambda k: k.label)
    def test_no_noise_no_drift(self, kernel):
        g = Grid(1.0, 40)
        m = ModelSpec(1.3, 0.7)
        ens = simulate_sve(m, kernel, g, 10, seed=0)
        np.testing.assert_array_equal(ens.values, np.broadcast_to(1.3 * np.exp(-0.7 * g.nodes), (10, 41)))

    def test_second_moment_of_deterministic_paths(self):
        g = Grid(1.0, 20)
        ens = simulate_sve(ModelSpec(1.3, 0.7), Fractional(0.25), g, 5, seed=0)
        est, se = empirical_moment(ens, 10, 2)
        assert est == pytest.approx((1.3 * math.exp(-0.7 * 0.5)) ** 2, rel=1e-15)
        assert se == 0.0

    def test_constant_ensemble(self):
        ens = PathEnsemble(np.array([0.0, 1.0]), np.full((7, 2), 2.5), seed=0, scheme_id="constant")
        assert empirical_moment(ens, 1, 1) == (2.5, 0.0)


class TestStatistics:
    @pytest.mark.parametrize("kernel", [Fractional(0.25), Exponential(2.0, 0.5), Constant(1.0)], ids=lambda k: k.label)
    def test_additive_noise_mean(self, kernel):
        g = Grid(1.0, 50)
        m = ModelSpec(0.4, 0.5, diffusion=ConstantVol(0.8))
        ens = simulate_sve(m, kernel, g, 4000, seed=1)
        for k in range(1, 51):
            est, se = empirical_moment(ens, k, 1)
            assert abs(est - 0.4 * math.exp(-0.5 * g.nodes[k])) <= 3.5 * se

    def test_gaussian_scheme_variance_close_to_exact(self):
        # additive noise with a fractional kernel: exact variance is sigma^2 c(t, t)
        H, s0 = 0.25, 0.5
        g = Grid(1.0, 200)
        ens = simulate_sve(ModelSpec(0.0, diffusion=ConstantVol(s0)), Fractional(H), g, 20000, seed=2)
        est, se = empirical_moment(ens, -1, 2)
        assert abs(est - s0**2 * rl_covariance(H, 1.0, 1.0)) <= 3 * se + 0.02 * s0**2 * rl_covariance(H, 1.0, 1.0)

    def test_rough_cir_mean(self):
        model = ModelSpec.rough_cir(1.0, 1.0, 0.3, 1.0)
        k = rough_cir_kernel(0.25)
        g = Grid(1.0, 200)
        ens = simulate_sve(model, k, g, 20000, seed=3)
        est, se = empirical_moment(ens, -1, 1)
        assert abs(est - first_moment(model, k, 1.0, g)) <= 3 * se

    def test_weak_error_does_not_grow(self):
        model = ModelSpec(1.0, 0.0, 1.0, -2.0, ConstantVol(0.3))
        k = Fractional(0.25)
        errs = []
        for N in (10, 40, 160):
            g = Grid(1.0, N)
            ens = simulate_sve(model, k, g, 4000, seed=4)
            est, se = empirical_moment(ens, -1, 1)
            errs.append((abs(est - first_moment(model, k, 1.0, Grid(1.0, 2000))), se))
        assert errs[-1][0] <= errs[0][0] + 3 * errs[0][1]

    def test_standard_error_halves_with_four_times_paths(self):
        model = ModelSpec(0.0, diffusion=ConstantVol(1.0))
        g = Grid(1.0, 20)
        _, se1 = empirical_moment(simulate_sve(model, Fractional(0.25), g, 5000, seed=5), -1)
        _, se2 = empirical_moment(simulate_sve(model, Fractional(0.25), g, 20000, seed=6), -1)
        assert se2 / se1 == pytest.approx(0.5, rel=0.2)

    def test_batched_standard_error(self):
        ens = simulate_sve(ModelSpec(0.0, diffusion=ConstantVol(1.0)), Fractional(0.25), Grid(1.0, 20), 8000, seed=7)
        _, se_path = empirical_moment(ens, -1)
        _, se_batch = empirical_moment(ens, -1, n_batches=20)
        assert se_batch == pytest.approx(se_path, rel=0.5)


class TestTruncationAndDeterminism:
    def test_sqrt_ensemble_nonnegative(self):
        model = ModelSpec(0.05, diffusion=_GuardedSqrt(2.0))
        ens = simulate_sve(model, rough_cir_kernel(0.1), Grid(1.0, 100), 3000, seed=8)
        assert np.min(ens.values) >= 0.0
        assert np.any(ens.values == 0.0)

    def test_seed_determinism(self):
        model = ModelSpec.rough_cir(1.0, 1.0, 0.3, 1.0)
        g = Grid(1.0, 50)
        a = simulate_sve(model, rough_cir_kernel(0.25), g, 3000, seed=9)
        b = simulate_sve(model, rough_cir_kernel(0.25), g, 3000, seed=9)
        c = simulate_sve(model, rough_cir_kernel(0.25), g, 3000, seed=10)
        assert a.values.tobytes() == b.values.tobytes()
        assert a.values.tobytes() != c.values.tobytes()

    def test_thread_count_does_not_matter(self):
        model = ModelSpec.rough_cir(1.0, 1.0, 0.3, 1.0)
        g = Grid(1.0, 50)
        a = simulate_sve(model, rough_cir_kernel(0.25), g, 5000, seed=11, threads=1)
        b = simulate_sve(model, rough_cir_kernel(0.25), g, 5000, seed=11, threads=3)
        assert a.values.tobytes() == b.values.tobytes()

    def test_prefix_stability(self):
        # the first paths of a larger ensemble are the paths of a smaller one
        model = ModelSpec(0.0, diffusion=ConstantVol(1.0))
        g = Grid(1.0, 10)
        small = simulate_sve(model, Fractional(0.25), g, 100, seed=12)
        large = simulate_sve(model, Fractional(0.25), g, 3000, seed=12)
        np.testing.assert_array_equal(small.values, large.values[:100])

    def test_supplied_increments(self):
        g = Grid(1.0, 30)
        model = ModelSpec(0.5, diffusion=ConstantVol(0.4))
        dB = brownian_increments(g, 300, seed=13)
        a = simulate_sve(model, Fractional(0.25), g, 300, seed=13)
        b = simulate_sve(model, Fractional(0.25), g, 300, seed=999, increments=dB)
        assert a.values.tobytes() == b.values.tobytes()

    def test_overflow_guard(self):
        model = ModelSpec(1.0, 0.0, 0.0, 50.0)
        with pytest.raises(SimulationError):
            simulate_sve(model, Constant(100.0), Grid(10.0, 200), 10, seed=0)


class TestSchemeConsistency:
    def test_sde_and_sve_agree_to_order_h(self):
        kernel = Exponential(2.0, 0.5)
        model = ModelSpec(1.0, 0.5, 1.0, -1.0, ConstantVol(0.5))
        n_paths, N = 500, 100
        fine = brownian_increments(Grid(1.0, 4 * N), n_paths, seed=14)
        devs = []
        for factor, steps in ((4, N), (2, 2 * N)):
            g = Grid(1.0, steps)
            dB = coarsen_increments(fine, factor)
            a = simulate_sve(model, kernel, g, n_paths, seed=0, increments=dB)
            b = simulate_sde_exponential(model, kernel, g, n_paths, seed=0, increments=dB)
            devs.append(np.max(np.abs(a.values - b.values)) / g.h)
        # max deviation / h stays bounded across refinement
        assert devs[1] <= 1.5 * devs[0]

    def test_sde_needs_matching_rate(self):
        with pytest.raises(SimulationError):
            simulate_sde_exponential(ModelSpec(1.0, 0.4), Exponential(2.0, 0.5), Grid(1.0, 10), 10, seed=0)

    def test_coarsen(self):
        dB = np.arange(12.0).reshape(6, 2)
        np.testing.assert_array_equal(coarsen_increments(dB, 3), [[6.0, 9.0], [24.0, 27.0]])
        with pytest.raises(DomainError):
            coarsen_increments(dB, 4)


class TestPersistence:
    def test_round_trip(self, tmp_path):
        ens = simulate_sve(ModelSpec(0.5, diffusion=ConstantVol(0.4)), Fractional(0.25), Grid(1.0, 8), 17, seed=15)
        path = tmp_path / "e.svee"
        ens.save(path)
        raw = path.read_bytes()
        assert raw[:4] == MAGIC
        assert len(raw) == 4 + 4 + 8 + 8 + 8 * 17 * 9
        back = PathEnsemble.load(path)
        assert back.values.tobytes() == ens.values.tobytes()
        np.testing.assert_array_equal(back.times, ens.times)
        assert (back.seed, back.scheme_id, back.kernel_id) == (ens.seed, ens.scheme_id, ens.kernel_id)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.svee"
        path.write_bytes(b"XXXX" + bytes(20))
        with pytest.raises(DomainError):
            PathEnsemble.load(path)

    def test_truncated_body(self, tmp_path):
        ens = PathEnsemble(np.array([0.0, 1.0]), np.ones((3, 2)), seed=0, scheme_id="x")
        path = tmp_path / "e.svee"
        ens.save(path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(DomainError):
            PathEnsemble.load(path)

    def test_csv(self, tmp_path):
        ens = PathEnsemble(np.array([0.0, 0.5]), np.array([[1.0, 2.0], [3.0, 0.1]]), seed=0, scheme_id="x")
        path = tmp_path / "e.csv"
        ens.to_csv(path)
        assert path.read_text().splitlines() == ["path,t=0,t=0.5", "0,1,2", "1,3,0.10000000000000001"]

    def test_read_only(self):
        ens = PathEnsemble(np.array([0.0, 1.0]), np.ones((3, 2)), seed=0, scheme_id="x")
        with pytest.raises(ValueError):
            ens.values[0, 0] = 2.0


@pytest.fixture(scope="module")
def gaussian():
    tau = 0.125
    return tau, sample_gaussian_paths(0.25, 1.0, [tau**3, tau**2, tau], 400_000, seed=16)


class TestConditionalProbability:
    def test_unconditional(self, gaussian):
        _, ens = gaussian
        p, _, n = conditional_prob_estimate(ens, [], (2, (0.0, np.inf)))
        assert n == ens.n_paths
        assert p == np.mean(ens.values[:, 2] >= 0.0)

    def test_whole_line(self, gaussian):
        _, ens = gaussian
        p, _, _ = conditional_prob_estimate(ens, [(1, 0.0, 0.05)], (2, (-np.inf, np.inf)))
        assert p == 1.0

    def test_insufficient_mass(self, gaussian):
        _, ens = gaussian
        with pytest.raises(InsufficientMassError) as info:
            conditional_prob_estimate(ens, [(0, 10.0, 1e-3)], (2, (0.0, 1.0)))
        assert info.value.n_effective < 200

    def test_binned_margin_matches_exact_margin(self, gaussian):
        tau, ens = gaussian
        H = 0.25
        sd3, sd2 = math.sqrt(rl_covariance(H, tau**3, tau**3)), math.sqrt(rl_covariance(H, tau**2, tau**2))
        delta = sd3  # an observation the sampler actually reaches
        cert = certificate_at(H, tau, delta)
        target = (2, cert.interval)
        p2, h2, _ = conditional_prob_estimate(ens, [(0, delta, 0.1 * sd3), (1, 0.0, 0.1 * sd2)], target)
        p1, h1, _ = conditional_prob_estimate(ens, [(1, 0.0, 0.1 * sd2)], target)
        assert cert.margin > 0.0
        assert abs((p2 - p1) - cert.margin) <= h1 + h2

    def test_wilson(self):
        center, half = wilson_interval(50, 100)
        assert center == pytest.approx(0.5)
        assert half == pytest.approx(0.0961, abs=1e-4)
