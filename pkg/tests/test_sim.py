import numpy as np
import pytest

from posobs import GainSet, NoiseConfig, PositiveSystem
from posobs.errors import DimensionError, MissingNoiseModelError, SingularMatrixError
from posobs.model import build_error_dynamics
from posobs.sim import (check_ordering, expected_fixed_point, monte_carlo_mean, noise_generator,
                        sample_gamma_unit_mean, simulate_deterministic, simulate_noisy,
                        uniform_initial_state)


def test_record_count(ex1):
    tr = simulate_deterministic(ex1.system, ex1.gains, [0.5, 0.5], [1, 1], [0, 0], 7)
    assert tr.x.shape == (8, 2) and tr.u.shape == (8, 2) and tr.y.shape == (8, 1)
    assert tr.T == 7 and list(tr.t) == list(range(8))


def test_zero_initial_data(ex1):
    tr = simulate_deterministic(ex1.system, ex1.gains, [0, 0], [0, 0], [0, 0], 20)
    assert not tr.x.any() and not tr.xbar.any() and not tr.xlow.any()


def test_dimension_mismatch(ex1):
    with pytest.raises(DimensionError):
        simulate_deterministic(ex1.system, ex1.gains, [0.5], [1, 1], [0, 0], 3)


def test_input_uses_both_bounds(ex1):
    tr = simulate_deterministic(ex1.system, ex1.gains, [0.5, 0.5], [1, 2], [0.1, 0.2], 0)
    g = ex1.gains
    assert np.allclose(tr.u[0], g.K_lower @ [0.1, 0.2] + g.K_upper @ [1, 2])


def test_zero_feedback_keeps_order_but_grows(ex1):
    sys = ex1.system
    L = np.array([[0.3], [0.0]])
    g = GainSet(L, L, np.zeros((2, 2)), np.zeros((2, 2)))
    tr = simulate_deterministic(sys, g, [0.5, 0.5], [1, 1], [0, 0], 60)
    assert check_ordering(tr) is None
    assert np.abs(tr.x[-1]).max() > 100 * np.abs(tr.x[0]).max()


def test_ordering_detects_injected_flip(ex1):
    tr = simulate_deterministic(ex1.system, ex1.gains, [0.5, 0.5], [1, 1], [0, 0], 10)
    tr.xbar[3, 1] = tr.x[3, 1] - 0.25
    v = check_ordering(tr)
    assert (v.step, v.coordinate) == (3, 1) and v.magnitude == pytest.approx(0.25)


def test_gamma_draws():
    rng = noise_generator(123)
    draws = sample_gamma_unit_mean(NoiseConfig(), rng, 100_000)
    assert draws.min() >= 0 and 0.99 <= draws.mean() <= 1.01
    again = sample_gamma_unit_mean(NoiseConfig(), noise_generator(123), 100_000)
    assert np.array_equal(draws, again)
    shaped = sample_gamma_unit_mean(NoiseConfig(shape=3.0), noise_generator(5), 100_000)
    assert shaped.min() >= 0 and 0.99 <= shaped.mean() <= 1.01
    assert shaped.var() == pytest.approx(1 / 3, rel=0.05)


def test_noise_config_validation():
    with pytest.raises(ValueError):
        NoiseConfig(shape=0)
    with pytest.raises(ValueError):
        NoiseConfig(seed=-1)


def test_zero_noise_channels_match_deterministic(ex1):
    s = ex1.system
    quiet = PositiveSystem(s.A, s.B, s.C, np.zeros((2, 2)), np.zeros((1, 1)))
    a = simulate_noisy(quiet, ex1.gains, [0.5, 0.5], [1, 1], [0, 0], 30, NoiseConfig(seed=4))
    b = simulate_deterministic(quiet, ex1.gains, [0.5, 0.5], [1, 1], [0, 0], 30)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.xbar, b.xbar)


def test_missing_noise_model(ex1):
    with pytest.raises(MissingNoiseModelError):
        simulate_noisy(ex1.system, ex1.gains, [0, 0], [1, 1], [0, 0], 3, NoiseConfig())


def test_noisy_ex3_reports_crossing(ex3):
    x0 = uniform_initial_state(2, 7)
    crossings = 0
    for run in range(10):
        tr = simulate_noisy(ex3.system, ex3.gains, x0, [1, 1], [0, 0], 100, NoiseConfig(seed=7), run)
        crossings += check_ordering(tr) is not None
    assert crossings > 0


def test_fixed_point_scalar(scalar):
    fp = expected_fixed_point(scalar.system, scalar.gains)
    assert np.allclose(fp.X, [0.2, 0.7 / 3, 0.1])
    assert np.allclose(fp.X_e, [0.2, 1 / 30, 0.1])
    assert fp.in_cone and fp.attracting and fp.residual <= 1e-10


def test_fixed_point_zero_noise():
    sys = PositiveSystem([[0.5]], [[1.0]], [[1.0]], [[0.0]], [[0.0]])
    g = GainSet([[0.2]], [[0.2]], [[0.0]], [[-0.1]])
    assert not expected_fixed_point(sys, g).X.any()


def test_fixed_point_ex3(ex3):
    fp = expected_fixed_point(ex3.system, ex3.gains)
    assert not fp.attracting and fp.rho == pytest.approx(1.009902, abs=1e-6)


def test_fixed_point_singular():
    sys = PositiveSystem([[1.0]], [[1.0]], [[1.0]], [[0.1]], [[0.1]])
    g = GainSet([[0.5]], [[0.5]], [[0.0]], [[0.0]])
    with pytest.raises(SingularMatrixError):
        expected_fixed_point(sys, g)


class TestMonteCarlo:
    def test_single_run_equals_noisy(self, scalar):
        cfg = NoiseConfig(seed=3)
        a = monte_carlo_mean(scalar.system, scalar.gains, [0], [1], [0], 40, 1, cfg)
        b = simulate_noisy(scalar.system, scalar.gains, [0], [1], [0], 40, cfg)
        assert np.array_equal(a.x, b.x) and np.array_equal(a.xlow, b.xlow)

    def test_chunking_invariance_and_determinism(self, scalar):
        cfg = NoiseConfig(seed=3)
        a = monte_carlo_mean(scalar.system, scalar.gains, [0], [1], [0], 50, 300, cfg, chunk=7)
        b = monte_carlo_mean(scalar.system, scalar.gains, [0], [1], [0], 50, 300, cfg, chunk=1000)
        c = monte_carlo_mean(scalar.system, scalar.gains, [0], [1], [0], 50, 300, cfg, chunk=1000)
        assert np.allclose(a.x, b.x, rtol=0, atol=1e-13)
        assert np.array_equal(b.x, c.x) and np.array_equal(b.xbar, c.xbar)

    def test_mean_ordering_within_three_se(self, scalar):
        mc = monte_carlo_mean(scalar.system, scalar.gains, [0], [1], [0], 300, 2000,
                              NoiseConfig(seed=21))
        se = np.sqrt(mc.x_se ** 2 + mc.xbar_se ** 2) + np.sqrt(mc.x_se ** 2 + mc.xlow_se ** 2)
        assert np.all(mc.xbar - mc.x >= -3 * se)
        assert np.all(mc.x - mc.xlow >= -3 * se)

    def test_one_step_expectation(self, scalar):
        sys, g = scalar.system, scalar.gains
        mc = monte_carlo_mean(sys, g, [0], [1], [0], 60, 4000, NoiseConfig(seed=8))
        G, bias = build_error_dynamics(sys, g)
        Xe = np.stack([mc.x[:, 0], mc.xbar[:, 0] - mc.x[:, 0], mc.x[:, 0] - mc.xlow[:, 0]], 1)
        pred = Xe[:-1] @ G.T + bias
        err = np.abs(Xe[1:] - pred)
        se = np.stack([mc.x_se[1:, 0], mc.xbar_se[1:, 0] + mc.x_se[1:, 0],
                       mc.x_se[1:, 0] + mc.xlow_se[1:, 0]], 1)
        assert np.all(err <= 5 * se + 1e-12)
