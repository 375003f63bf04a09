import numpy as np
import pytest

from qtbmad import design as engine
from qtbmad.design import (adabelief_step, draw_starts, finite_difference_gradient, gradient_check,
                           kink_free_biases, loss, loss_and_gradient, multi_start, optimize,
                           predicted_currents, zero_current_observations)
from qtbmad.errors import AllStartsFailed, InvalidParameter, NonFiniteLoss
from qtbmad.models import (AdaBeliefHyper, DesignVector, GridSettings, Observations, OptimizerState,
                           ParameterBounds)


@pytest.fixture
def self_fit(design, small_device, small_grids):
    biases = np.array([0.03, 0.07])
    currents = predicted_currents(design, biases, small_device, small_grids)
    return Observations(biases, np.asarray(currents))


class TestAdaBelief:
    def test_first_step_with_unit_gradient(self):
        params = DesignVector.from_sequence([0.3, 0.4, 0.05, 0.3, 0.6, 0.05, 0.1])
        state, moved = adabelief_step(OptimizerState.fresh(), np.ones(7), params)
        np.testing.assert_allclose(moved.to_array() - params.to_array(), -0.0011111, rtol=1e-4)
        assert state.step_count == 1
        np.testing.assert_allclose(state.first_moment, 0.1)
        np.testing.assert_allclose(state.second_moment, 0.001 * 0.81 + 1e-16)

    def test_zero_gradient_does_not_move(self, design):
        _, moved = adabelief_step(OptimizerState.fresh(), np.zeros(7), design)
        np.testing.assert_array_equal(moved.to_array(), design.to_array())

    def test_bias_correction_uses_step_count(self, design):
        hyper = AdaBeliefHyper(lr=0.01)
        state = OptimizerState.fresh(hyper)
        for _ in range(3):
            state, design = adabelief_step(state, np.full(7, -2.0), design)
        assert state.step_count == 3
        assert np.all(state.first_moment < 0)

    def test_width_lands_on_its_lower_bound(self):
        bounds = ParameterBounds()
        params = DesignVector.from_sequence([0.3, 0.4, 0.021, 0.3, 0.6, 0.05, 0.1])
        state = OptimizerState.fresh(AdaBeliefHyper(lr=0.01))
        grad = np.eye(7)[2]
        for _ in range(200):
            state, params = adabelief_step(state, grad, params, bounds)
        assert params.phi.barrier1.width == bounds.w[0]

    def test_unbounded_step_past_zero_width_is_rejected(self):
        params = DesignVector.from_sequence([0.3, 0.4, 0.005, 0.3, 0.6, 0.05, 0.1])
        with pytest.raises(InvalidParameter):
            adabelief_step(OptimizerState.fresh(AdaBeliefHyper(lr=0.01)), np.eye(7)[2], params)


class TestLoss:
    def test_self_fit_loss_and_gradient_vanish(self, design, self_fit, small_device, small_grids):
        value, grad = loss_and_gradient(design, self_fit, small_device, small_grids)
        assert value == 0.0
        np.testing.assert_array_equal(grad, np.zeros(7))

    def test_dual_loss_value_matches_plain(self, design, small_device, small_grids):
        obs = Observations(np.array([0.02, 0.06]), np.array([1e-3, 2e-3]))
        value, _ = loss_and_gradient(design, obs, small_device, small_grids)
        assert value == loss(design, obs, small_device, small_grids)

    def test_gradient_matches_finite_differences(self, design, small_device, small_grids):
        obs = zero_current_observations(design, small_grids)
        check = gradient_check(design, obs, 1e-5, small_device, small_grids)
        assert check.passed, check.relative_error

    def test_self_fit_gradient_check_passes_trivially(self, design, self_fit, small_device, small_grids):
        check = gradient_check(design, self_fit, 1e-5, small_device, small_grids)
        assert check.passed
        np.testing.assert_array_equal(check.forward, 0.0)

    def test_finite_difference_of_a_quadratic(self, design):
        target = np.linspace(0.1, 0.7, 7)
        fd = finite_difference_gradient(design, objective=lambda p: float(np.sum((p.to_array() - target) ** 2)))
        np.testing.assert_allclose(fd, 2 * (design.to_array() - target), atol=1e-8)

    @pytest.mark.parametrize("order, low, high", [(2, 3.8, 4.2), (4, 14.0, 18.0)])
    def test_finite_difference_error_shrinks_with_order(self, design, order, low, high):
        def objective(p):
            return float(np.sum(np.exp(p.to_array())))

        exact = np.exp(design.to_array())
        coarse = finite_difference_gradient(design, h=0.02, objective=objective, order=order)
        fine = finite_difference_gradient(design, h=0.01, objective=objective, order=order)
        ratio = np.max(np.abs(coarse - exact)) / np.max(np.abs(fine - exact))
        assert low < ratio < high

    def test_unknown_difference_order(self, design):
        with pytest.raises(InvalidParameter):
            finite_difference_gradient(design, objective=lambda p: 0.0, order=3)

    @pytest.mark.slow
    def test_gradient_check_passes_over_random_designs(self):
        for params in draw_starts(20, ParameterBounds(), seed=123):
            check = gradient_check(params, zero_current_observations(params))
            assert check.passed, (params.to_array(), check.relative_error)


class TestKinkFreeBiases:
    @pytest.mark.parametrize("grids", [GridSettings(20, 20), GridSettings(100, 100), GridSettings(50, 80)])
    def test_window_points_keep_their_brackets_under_a_difference_step(self, grids):
        mu = 0.05
        shift = 2e-5

        def brackets(level, bias):
            spacing = level / (grids.energy_points - 1)
            window = (level - bias) + bias * np.linspace(0.0, 1.0, grids.interp_points)
            # the top point moves with mu and always sits on the last node
            return np.floor(window[:-1] / spacing).astype(int)

        for bias in kink_free_biases(mu, grids):
            assert 0 < bias <= mu
            base = brackets(mu, bias)
            np.testing.assert_array_equal(brackets(mu - shift, bias), base)
            np.testing.assert_array_equal(brackets(mu + shift, bias), base)

    def test_spans_are_odd_and_coprime(self):
        grids = GridSettings(100, 100)
        spacing = 0.1 / 99
        spans = [round(2 * b / spacing) for b in kink_free_biases(0.1, grids, spans=(3, 4, 11))]
        # 3 and 11 share a factor with 2 * 99
        assert spans == [5, 5, 13]


class TestOptimize:
    def test_loss_decreases_from_a_perturbed_start(self, design, self_fit, small_device, small_grids):
        start = DesignVector.from_sequence(design.to_array() + [0.02, 0, 0, -0.02, 0, 0, 0])
        record = optimize(start, self_fit, 5, AdaBeliefHyper(), small_device, small_grids)
        assert len(record.loss_history) == 6
        assert record.loss_history[-1] < record.loss_history[0]
        assert record.final_loss == record.loss_history[-1]

    def test_parameters_stay_in_bounds(self, design, self_fit, small_device, small_grids):
        bounds = ParameterBounds()
        start = DesignVector.from_sequence(bounds.upper())
        record = optimize(start, self_fit, 5, AdaBeliefHyper(lr=0.05), small_device, small_grids, bounds)
        values = record.final.to_array()
        assert np.all(values >= bounds.lower()) and np.all(values <= bounds.upper())

    def test_zero_iterations_only_evaluates(self, design, self_fit, small_device, small_grids):
        record = optimize(design, self_fit, 0, AdaBeliefHyper(), small_device, small_grids)
        assert record.loss_history == [0.0]
        assert record.final == design

    def test_exact_fit_does_not_move(self, design, self_fit, small_device, small_grids):
        record = optimize(design, self_fit, 3, AdaBeliefHyper(), small_device, small_grids)
        np.testing.assert_allclose(record.final.to_array(), design.to_array(), rtol=0, atol=1e-12)
        assert record.loss_history == [0.0] * 4

    def test_steps_past_a_bound_are_clipped(self, design, self_fit, monkeypatch):
        monkeypatch.setattr(engine, "loss_and_gradient", lambda *args: (1.0, np.eye(7)[2]))
        monkeypatch.setattr(engine, "loss", lambda *args: 1.0)
        record = optimize(design, self_fit, 50, AdaBeliefHyper(lr=0.01))
        assert record.final.phi.barrier1.width == 0.02
        assert record.final_loss == 1.0


class TestMultiStart:
    def test_at_least_one_start(self, self_fit):
        with pytest.raises(InvalidParameter):
            multi_start(self_fit, k_starts=0)

    def test_draws_are_seeded_and_inside_bounds(self):
        bounds = ParameterBounds()
        first = draw_starts(5, bounds, seed=11)
        again = draw_starts(5, bounds, seed=11)
        assert [s.to_array().tolist() for s in first] == [s.to_array().tolist() for s in again]
        for s in first:
            assert np.all(s.to_array() >= bounds.lower()) and np.all(s.to_array() <= bounds.upper())
        assert first[0].to_array().tolist() != draw_starts(5, bounds, seed=12)[0].to_array().tolist()

    def test_result_is_independent_of_workers(self, self_fit, small_device, small_grids):
        kwargs = dict(k_starts=3, seed=5, iterations=3, device=small_device, grids=small_grids)
        serial = multi_start(self_fit, workers=1, **kwargs)
        pooled = multi_start(self_fit, workers=2, **kwargs)
        assert serial.best_loss == pooled.best_loss
        assert serial.start_index == pooled.start_index
        assert serial.loss_history == pooled.loss_history
        assert serial.best_params == pooled.best_params

    def test_best_start_and_diagnostics(self, self_fit, small_device, small_grids):
        seen = []
        result = multi_start(self_fit, k_starts=4, seed=1, iterations=2, device=small_device,
                             grids=small_grids, progress=seen.append)
        assert sorted(r.index for r in seen) == [0, 1, 2, 3]
        finals = [r.final_loss for r in result.starts]
        assert result.best_loss == min(finals)
        assert result.start_index == finals.index(min(finals))
        assert result.seed == 1
        assert result.diagnostics["start_count"] == 4
        assert result.diagnostics["failed_starts"] == 0
        assert all(len(h) == 3 for h in result.loss_history)

    def test_failed_starts_are_recorded(self, self_fit, small_device, small_grids, monkeypatch):
        real = engine.optimize

        def flaky(start, obs, iterations, hyper, device, grids, bounds, index):
            if index == 1:
                raise NonFiniteLoss(0)
            return real(start, obs, iterations, hyper, device, grids, bounds, index)

        monkeypatch.setattr(engine, "optimize", flaky)
        result = multi_start(self_fit, k_starts=3, seed=2, iterations=1, device=small_device, grids=small_grids)
        assert result.starts[1].failed
        assert result.start_index != 1
        assert result.diagnostics["failed_starts"] == 1

    def test_all_starts_failing(self, self_fit, small_device, small_grids, monkeypatch):
        def broken(*args):
            raise NonFiniteLoss(0)

        monkeypatch.setattr(engine, "optimize", broken)
        with pytest.raises(AllStartsFailed) as info:
            multi_start(self_fit, k_starts=2, iterations=1, device=small_device, grids=small_grids)
        assert len(info.value.errors) == 2


@pytest.mark.slow
def test_self_fit_recovery(design, self_fit, small_device, small_grids):
    result = multi_start(self_fit, k_starts=4, seed=0, iterations=300, device=small_device,
                         grids=small_grids, workers=2)
    assert result.best_loss < result.diagnostics["best_initial_loss"]
    assert result.diagnostics["best_loss_reduction"] > 1


@pytest.mark.slow
def test_small_current_fit_drops_loss_a_hundredfold(small_device, small_grids):
    target = DesignVector.from_sequence([0.1, 0.4, 0.05, 0.1, 0.6, 0.05, 0.1])
    biases = np.array([0.03, 0.07])
    obs = Observations(biases, np.asarray(predicted_currents(target, biases, small_device, small_grids)))
    start = DesignVector.from_sequence([0.2, 0.4, 0.05, 0.2, 0.6, 0.05, 0.12])
    record = optimize(start, obs, 1000, AdaBeliefHyper(), small_device, small_grids)
    assert record.loss_history[0] >= 100 * record.loss_history[-1]
    assert record.final_loss < 1e-6


@pytest.mark.slow
def test_self_fit_is_recovered_for_most_seeds(self_fit, small_device, small_grids):
    recovered = 0
    for seed in range(10):
        result = multi_start(self_fit, k_starts=25, seed=seed, iterations=1000, device=small_device,
                             grids=small_grids)
        recovered += result.best_loss < 1e-6
    assert recovered >= 8
