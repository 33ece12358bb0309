import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from kernelcal.autodiff import lift_param
from kernelcal.exceptions import ConfigError, DomainError
from kernelcal.simulator import (
    Dist,
    GG1Model,
    LatentBlock,
    TargetSystem,
    draw_latent_block,
    draw_latent_blocks,
    draw_reference,
    generate_target_data,
    lindley_average,
    pushforward_waiting_time,
    read_data_csv,
    simulate_model_sample,
    write_data_csv,
)


def lindley_loop(service, inter, burn_in):
    """Scalar reference recursion, one customer at a time."""
    w, acc = 0.0, 0.0
    for j, (s, t) in enumerate(zip(service, inter)):
        w = max(w + s - t, 0.0)
        if j >= burn_in:
            acc += w
    return acc / (len(service) - burn_in)


class TestConfigValidation:
    def test_dist_needs_exactly_one_rate_source(self):
        with pytest.raises(ConfigError):
            Dist.exp()
        with pytest.raises(ConfigError):
            Dist("exp", rate=1.0, param=0)

    @pytest.mark.parametrize("kw", [{"rate": 0.0}, {"rate": -1.0}])
    def test_dist_rate_positive(self, kw):
        with pytest.raises(ConfigError):
            Dist.exp(**kw)

    def test_model_param_indices(self):
        with pytest.raises(ConfigError):
            GG1Model(Dist.exp(rate=1.0), Dist.exp(rate=1.0))
        with pytest.raises(ConfigError):
            GG1Model(Dist.exp(param=1), Dist.exp(rate=1.0))

    def test_target_needs_fixed_rates(self):
        with pytest.raises(ConfigError):
            TargetSystem(Dist.exp(rate=1.0), Dist.exp(param=0))

    @pytest.mark.parametrize("eps", [-0.1, 1.1])
    def test_contamination_range(self, eps):
        with pytest.raises(ConfigError):
            TargetSystem(Dist.exp(rate=1.0), Dist.exp(rate=1.2), contamination=eps)

    def test_round_trip(self, gg1_model):
        assert GG1Model.from_dict(gg1_model.to_dict()) == gg1_model
        t = TargetSystem(Dist.gamma(0.5, rate=1.0), Dist.gamma(0.8, rate=2.5), contamination=0.05)
        assert TargetSystem.from_dict(t.to_dict()) == t

    def test_param_names(self, gg1_model, mm1_model):
        assert gg1_model.param_names == ["mu", "lambda"]
        assert mm1_model.param_names == ["mu"]


class TestLatents:
    def test_replay(self, mm1_model):
        a = draw_latent_block(mm1_model, np.random.default_rng(9))
        b = draw_latent_block(mm1_model, np.random.default_rng(9))
        np.testing.assert_array_equal(a.service, b.service)
        np.testing.assert_array_equal(a.arrival, b.arrival)
        assert len(a) == mm1_model.length

    def test_exp_mean(self):
        x = draw_reference(Dist.exp(rate=1.0), 10**5, np.random.default_rng(1))
        assert abs(x.mean() - 1.0) <= 3 / np.sqrt(1e5)

    def test_half_gamma_mean(self):
        x = draw_reference(Dist.gamma(0.5, rate=1.0), 10**5, np.random.default_rng(2))
        # Var Gamma(0.5, 1) = 0.5
        assert abs(x.mean() - 0.5) <= 3 * np.sqrt(0.5 / 1e5)

    @pytest.mark.parametrize("shape", [0.5, 0.8, 2.0])
    def test_gamma_law(self, shape):
        x = draw_reference(Dist.gamma(shape, rate=1.0), 5000, np.random.default_rng(3))
        assert stats.kstest(x, stats.gamma(shape).cdf).pvalue > 0.01

    def test_block_shapes_must_match(self):
        with pytest.raises(ValueError):
            LatentBlock(np.zeros(3), np.zeros(4))


class TestLindley:
    @settings(max_examples=50)
    @given(st.integers(0, 2**31 - 1), st.integers(0, 5))
    def test_matches_scalar_loop(self, seed, burn_in):
        rng = np.random.default_rng(seed)
        s, t = rng.exponential(size=12), rng.exponential(size=12)
        assert lindley_average(s, t, burn_in) == pytest.approx(lindley_loop(s, t, burn_in), rel=1e-13)

    def test_pushforward_agrees_with_plain_recursion(self, gg1_model):
        block = draw_latent_block(gg1_model, np.random.default_rng(4))
        mu, lam = 2.5, 1.0
        y = pushforward_waiting_time(gg1_model, lift_param((mu, lam)), block)
        ref = lindley_loop(block.service / mu, block.arrival / lam, gg1_model.burn_in)
        assert float(y.value) == pytest.approx(ref, rel=1e-13)

    def test_zero_service(self, gg1_model):
        block = draw_latent_block(gg1_model, np.random.default_rng(5))
        block = LatentBlock(np.zeros_like(block.service), block.arrival)
        y = pushforward_waiting_time(gg1_model, lift_param((2.0, 1.0)), block)
        assert float(y.value) == 0.0
        np.testing.assert_array_equal(y.grad, [0.0, 0.0])

    def test_nonpositive_rate(self, mm1_model):
        block = draw_latent_block(mm1_model, np.random.default_rng(0))
        with pytest.raises(DomainError):
            pushforward_waiting_time(mm1_model, lift_param((0.0,)), block)

    def test_wrong_block_length(self, mm1_model, gg1_model):
        block = draw_latent_block(gg1_model, np.random.default_rng(0))
        with pytest.raises(ValueError):
            pushforward_waiting_time(mm1_model, lift_param((1.0,)), block)

    def test_gradient_matches_fd(self, mm1_model):
        block = draw_latent_block(mm1_model, np.random.default_rng(6))
        theta, h = 1.2, 1e-6
        y = pushforward_waiting_time(mm1_model, lift_param((theta,)), block)

        def value(t):
            return float(pushforward_waiting_time(mm1_model, lift_param((t,)), block).value)

        fd = (value(theta + h) - value(theta - h)) / (2 * h)
        assert abs(y.grad[0] - fd) <= 1e-5 * max(1.0, abs(fd))

    def test_sample_mean_gradient_matches_fd(self, mm1_model):
        rng = np.random.default_rng(8)
        blocks = draw_latent_blocks(mm1_model, 200, rng)

        def mean(t):
            return pushforward_waiting_time(mm1_model, lift_param((t,)), blocks).mean()

        h = 1e-6
        fd = (float(mean(1.2 + h).value) - float(mean(1.2 - h).value)) / (2 * h)
        assert abs(float(mean(1.2).grad[0]) - fd) <= 1e-5 * max(1.0, abs(fd))


class TestSampling:
    def test_determinism(self, mm1_model):
        a = simulate_model_sample(mm1_model, (1.2,), 2, np.random.default_rng(1))
        b = simulate_model_sample(mm1_model, (1.2,), 2, np.random.default_rng(1))
        np.testing.assert_array_equal(a.value, b.value)
        assert a.value.shape == (2, 1)

    def test_needs_two(self, mm1_model):
        with pytest.raises(ConfigError):
            simulate_model_sample(mm1_model, (1.2,), 1, np.random.default_rng(1))

    def test_model_exact_mean(self, mm1_model, mm1_target):
        y = simulate_model_sample(mm1_model, (1.2,), 10**4, np.random.default_rng(10)).value[:, 0]
        x = generate_target_data(mm1_target, 10**4, np.random.default_rng(11))[:, 0]
        se = np.sqrt(y.var() / y.size + x.var() / x.size)
        assert abs(y.mean() - x.mean()) <= 3 * se

    def test_gamma_one_equals_exponential(self, mm1_target):
        g = TargetSystem(Dist.exp(rate=1.0), Dist.gamma(1.0, rate=1.2))
        x = generate_target_data(mm1_target, 10**4, np.random.default_rng(12))[:, 0]
        y = generate_target_data(g, 10**4, np.random.default_rng(13))[:, 0]
        se = np.sqrt(y.var() / y.size + x.var() / x.size)
        assert abs(y.mean() - x.mean()) <= 3 * se

    def test_nonnegative_without_contamination(self, mm1_target):
        x = generate_target_data(mm1_target, 2000, np.random.default_rng(0))
        assert x.shape == (2000, 1) and np.all(x >= 0)

    def test_zero_noise_contamination_is_inert(self, mm1_target):
        from dataclasses import replace

        clean = generate_target_data(mm1_target, 300, np.random.default_rng(14))
        dirty = generate_target_data(
            replace(mm1_target, contamination=1.0, noise_sd=0.0), 300, np.random.default_rng(14)
        )
        np.testing.assert_array_equal(clean, dirty)

    def test_contamination_count(self, mm1_target):
        from dataclasses import replace

        clean = generate_target_data(mm1_target, 200, np.random.default_rng(15))
        dirty = generate_target_data(replace(mm1_target, contamination=0.1), 200, np.random.default_rng(15))
        assert np.count_nonzero(clean != dirty) == 20


class TestCsv:
    def test_round_trip(self, tmp_path):
        data = np.random.default_rng(0).exponential(size=(7, 1))
        write_data_csv(tmp_path / "x.csv", data)
        np.testing.assert_array_equal(read_data_csv(tmp_path / "x.csv"), data)

    def test_header_skipped(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("waiting_time\n1.5\n2.0\n")
        np.testing.assert_array_equal(read_data_csv(p), [[1.5], [2.0]])

    def test_wrong_column_count_names_row(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("1.0\n2.0\n3.0,4.0\n")
        with pytest.raises(ConfigError, match="row 3"):
            read_data_csv(p)

    def test_expected_dimension(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("1.0,2.0\n")
        with pytest.raises(ConfigError, match="row 1"):
            read_data_csv(p, d=1)

    def test_non_numeric_row(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("1.0\nabc\n")
        with pytest.raises(ConfigError, match="row 2"):
            read_data_csv(p)

    def test_empty(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("")
        with pytest.raises(ConfigError):
            read_data_csv(p)
