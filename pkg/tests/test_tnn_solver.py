import numpy as np
import pytest

import services.tnn_solver as tnn_solver
from config.models import TnnArch, TrainConfig
from services.quantum1d import (
    SeparableFunction,
    energy_terms,
    gauss_legendre_grid,
    one_body_potential,
    overlap,
    swap_overlap,
    swap_penalty,
)
from services.tnn_solver import (
    TnnModel,
    antisymmetrized_function,
    gradient,
    loss_antisymmetrized,
    loss_penalized,
    prepare_initial_model,
    sign_flip_error,
    tnn_eval_modes,
    tnn_init,
    train,
)
from utils.errors import AnnihilatedAnsatzError, ConfigError, OrderLimitError, TrainingDivergedError


def arch(n_modes, rank=2, hidden_layers=1, width=5):
    return TnnArch(n_modes=n_modes, rank=rank, hidden_layers=hidden_layers, width=width)


def symmetric_copy(model: TnnModel) -> TnnModel:
    return TnnModel(model.arch, (model.modes[0],) * model.arch.n_modes)


class TestInit:
    def test_parameter_count(self):
        model = tnn_init(TnnArch(n_modes=2, rank=4, hidden_layers=2, width=20), seed=0)
        assert model.parameters_per_mode == 544
        assert model.flat().size == 2 * 544

    def test_deterministic(self):
        a = tnn_init(arch(2), seed=3).flat()
        b = tnn_init(arch(2), seed=3).flat()
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, tnn_init(arch(2), seed=4).flat())

    def test_fan_in_range(self):
        model = tnn_init(TnnArch(n_modes=1, rank=3, hidden_layers=2, width=16), seed=1)
        (W1, b1), (W2, b2), (Wo, bo) = model.modes[0]
        assert np.abs(W1).max() <= 1.0 and np.abs(b1).max() <= 1.0
        assert np.abs(W2).max() <= 0.25 and np.abs(Wo).max() <= 0.25

    def test_flat_roundtrip(self):
        model = tnn_init(arch(3), seed=0)
        rebuilt = model.with_flat(model.flat())
        np.testing.assert_array_equal(rebuilt.flat(), model.flat())
        with pytest.raises(ConfigError):
            model.with_flat(np.zeros(3))

    def test_layout_covers_vector(self):
        model = tnn_init(arch(2), seed=0)
        blocks = model.layout()
        assert blocks[0].start == 0 and blocks[-1].stop == model.size
        assert all(a.stop == b.start for a, b in zip(blocks, blocks[1:]))

    def test_constant_network(self, small_grid):
        sep = tnn_eval_modes(tnn_init(arch(2, rank=3), seed=0, constant=0.7), small_grid)
        np.testing.assert_array_equal(sep.values, 0.7)
        np.testing.assert_array_equal(sep.derivs, 0.0)


class TestEvalModes:
    def test_linear_layer_derivative_is_weight(self, small_grid):
        model = tnn_init(TnnArch(n_modes=1, rank=2, hidden_layers=0, width=1), seed=5)
        W, _ = model.modes[0][0]
        sep = tnn_eval_modes(model, small_grid)
        np.testing.assert_allclose(sep.derivs[:, 0, :], np.repeat(W, small_grid.size, axis=1))

    def test_derivatives_match_finite_differences(self):
        h = 1e-5
        model = tnn_init(TnnArch(n_modes=2, rank=3, hidden_layers=2, width=8), seed=2)
        grid = gauss_legendre_grid(-4.0, 4.0, 5, 4)
        plus = tnn_eval_modes(model, gauss_legendre_grid(-4.0 + h, 4.0 + h, 5, 4))
        minus = tnn_eval_modes(model, gauss_legendre_grid(-4.0 - h, 4.0 - h, 5, 4))
        fd = (plus.values - minus.values) / (2 * h)
        analytic = tnn_eval_modes(model, grid).derivs
        nodes = np.random.default_rng(0).choice(grid.size, 20, replace=False)
        np.testing.assert_allclose(analytic[..., nodes], fd[..., nodes], rtol=1e-6, atol=1e-8)

    def test_output_bounded_by_last_layer(self, reference_grid):
        model = tnn_init(TnnArch(n_modes=1, rank=4, hidden_layers=1, width=10), seed=0)
        W_out, b_out = model.modes[0][-1]
        bound = np.abs(W_out).sum(axis=1) + np.abs(b_out)
        values = tnn_eval_modes(model, reference_grid).values[:, 0, :]
        assert np.all(np.abs(values) <= bound[:, None])


class TestAntisymmetrizedFunction:
    def test_single_mode_is_identity(self, small_grid):
        sep = tnn_eval_modes(tnn_init(arch(1), seed=0), small_grid)
        anti = antisymmetrized_function(sep)
        assert overlap(anti, anti, small_grid) == pytest.approx(overlap(sep, sep, small_grid), rel=1e-14)

    def test_symmetric_modes_vanish(self, small_grid):
        sep = tnn_eval_modes(symmetric_copy(tnn_init(arch(2), seed=0)), small_grid)
        anti = antisymmetrized_function(sep)
        assert abs(overlap(anti, anti, small_grid)) <= 1e-12 * overlap(sep, sep, small_grid).real

    def test_pointwise_sign_flip(self, small_grid):
        sep = tnn_eval_modes(tnn_init(arch(3), seed=1), small_grid)
        assert sign_flip_error(antisymmetrized_function(sep), samples=50, seed=0) <= 1e-10

    def test_swap_terms_equal_minus_one(self, small_grid):
        anti = antisymmetrized_function(tnn_eval_modes(tnn_init(arch(3), seed=2), small_grid))
        norm = overlap(anti, anti, small_grid).real
        for i, j in [(1, 2), (1, 3), (2, 3)]:
            assert swap_overlap(anti, i, j, small_grid).real / norm == pytest.approx(-1.0, abs=1e-8)
        assert swap_penalty(anti, small_grid) == pytest.approx(-3.0, abs=1e-8)

    def test_order_guard(self):
        sep = SeparableFunction(np.ones((1, 7, 4)))
        with pytest.raises(OrderLimitError):
            antisymmetrized_function(sep)


class TestLosses:
    def test_zero_beta_is_energy(self, small_grid, heh_plus):
        model = tnn_init(arch(2), seed=0)
        result = loss_penalized(model, heh_plus, small_grid, 0.0)
        assert result.loss == result.energy

    def test_symmetric_ansatz_pays_full_penalty(self, small_grid, heh_plus):
        model = symmetric_copy(tnn_init(arch(2), seed=0))
        result = loss_penalized(model, heh_plus, small_grid, 200.0)
        assert result.penalty == pytest.approx(1.0, abs=1e-10)
        assert result.loss - result.energy == pytest.approx(200.0, abs=1e-7)

    def test_negative_beta(self, small_grid, heh_plus):
        with pytest.raises(ConfigError):
            loss_penalized(tnn_init(arch(2), seed=0), heh_plus, small_grid, -1.0)

    def test_single_electron_losses_agree(self, small_grid, hydrogenic_z3):
        model = tnn_init(arch(1), seed=0)
        assert loss_antisymmetrized(model, hydrogenic_z3, small_grid).loss == pytest.approx(
            loss_penalized(model, hydrogenic_z3, small_grid, 0.0).loss, rel=1e-14)

    def test_two_electron_determinant_expansion(self, small_grid, heh_plus):
        model = tnn_init(arch(2, rank=1), seed=4)
        sep = tnn_eval_modes(model, small_grid)
        a, b = sep.values[0, 0], sep.values[0, 1]
        da, db = sep.derivs[0, 0], sep.derivs[0, 1]
        explicit = SeparableFunction(np.array([[a, b], [-b, a]]), np.array([[da, db], [-db, da]]))
        expected = energy_terms(explicit, heh_plus, small_grid).rayleigh_quotient
        assert loss_antisymmetrized(model, heh_plus, small_grid).loss == pytest.approx(expected, rel=1e-10)

    def test_invariant_under_term_relabeling(self, small_grid, heh_plus):
        model = tnn_init(arch(2, rank=2), seed=6)
        swapped_modes = []
        for layers in model.modes:
            W_out, b_out = layers[-1]
            swapped_modes.append(layers[:-1] + ((W_out[::-1].copy(), b_out[::-1].copy()),))
        relabeled = TnnModel(model.arch, tuple(swapped_modes))
        assert loss_antisymmetrized(relabeled, heh_plus, small_grid).loss == pytest.approx(
            loss_antisymmetrized(model, heh_plus, small_grid).loss, rel=1e-12)

    def test_annihilated_ansatz(self, small_grid, heh_plus):
        model = tnn_init(arch(2, rank=1), seed=0, constant=0.1)
        with pytest.raises(AnnihilatedAnsatzError):
            loss_antisymmetrized(model, heh_plus, small_grid)


def _finite_difference_check(loss_tag, model, system, grid, config, count=50):
    grad = gradient(loss_tag, model, system, grid, config)
    theta = model.flat()
    scale = np.abs(grad).max()
    h = 1e-5

    def loss_at(vector):
        candidate = model.with_flat(vector)
        if loss_tag == "penalized":
            return loss_penalized(candidate, system, grid, config.penalty_beta).loss
        return loss_antisymmetrized(candidate, system, grid).loss

    for index in np.random.default_rng(1).choice(theta.size, count, replace=False):
        step = np.zeros_like(theta)
        step[index] = h
        fd = (loss_at(theta + step) - loss_at(theta - step)) / (2 * h)
        assert abs(grad[index] - fd) <= 1e-5 * max(abs(fd), 1e-2 * scale), (index, grad[index], fd)


class TestGradient:
    @pytest.mark.parametrize("loss_tag", ["penalized", "antisymmetrized"])
    def test_matches_finite_differences(self, loss_tag, small_grid, heh_plus):
        model = tnn_init(TnnArch(n_modes=2, rank=2, hidden_layers=2, width=5), seed=0)
        config = TrainConfig(penalty_beta=200.0, loss=loss_tag)
        _finite_difference_check(loss_tag, model, heh_plus, small_grid, config)

    def test_three_electrons(self, small_grid, lithium):
        model = tnn_init(TnnArch(n_modes=3, rank=1, hidden_layers=1, width=4), seed=3)
        _finite_difference_check("antisymmetrized", model, lithium, small_grid,
                                 TrainConfig(loss="antisymmetrized"), count=20)

    def test_constant_network_has_no_hidden_gradient(self, small_grid, hydrogenic_z3):
        model = tnn_init(TnnArch(n_modes=1, rank=2, hidden_layers=2, width=5), seed=0, constant=0.5)
        grad = gradient("penalized", model, hydrogenic_z3, small_grid, TrainConfig())
        for block in model.layout():
            if not block.is_output:
                assert np.all(grad[block.start:block.stop] == 0.0)

    @pytest.mark.parametrize("loss_tag", ["penalized", "antisymmetrized"])
    def test_orthogonal_to_output_scaling(self, loss_tag, small_grid, heh_plus):
        model = tnn_init(TnnArch(n_modes=2, rank=1, hidden_layers=1, width=5), seed=1)
        grad = gradient(loss_tag, model, heh_plus, small_grid, TrainConfig(penalty_beta=200.0))
        direction = np.zeros(model.size)
        theta = model.flat()
        for block in model.layout():
            if block.mode == 0 and block.is_output:
                direction[block.start:block.stop] = theta[block.start:block.stop]
        assert abs(grad @ direction) <= 1e-8 * np.linalg.norm(grad) * np.linalg.norm(direction)


class TestTrain:
    def _config(self, **overrides):
        fields = dict(iterations=20, eval_stride=5, lr0=1e-3, seed=0, loss="antisymmetrized")
        fields.update(overrides)
        return TrainConfig(**fields)

    def test_zero_iterations(self, small_grid, hydrogenic_z3):
        trace = train(arch(1), hydrogenic_z3, small_grid, self._config(iterations=0))
        assert [r.k for r in trace.records] == [0]
        assert trace.to_csv().splitlines()[0] == "iter,loss,energy,penalty,lr,seconds"

    def test_logging_stride(self, small_grid, heh_plus):
        trace = train(arch(2), heh_plus, small_grid, self._config(iterations=12))
        assert [r.k for r in trace.records] == [0, 5, 10, 12]
        assert all(r.penalty == pytest.approx(-1.0, abs=1e-8) for r in trace.records)

    def test_deterministic(self, small_grid, heh_plus):
        first = train(arch(2), heh_plus, small_grid, self._config(loss="penalized")).to_frame()
        second = train(arch(2), heh_plus, small_grid, self._config(loss="penalized")).to_frame()
        columns = ["iter", "loss", "energy", "penalty", "lr"]
        assert first[columns].equals(second[columns])

    def test_loss_decreases(self, small_grid, hydrogenic_z3):
        trace = train(arch(1), hydrogenic_z3, small_grid, self._config(iterations=200, lr0=1e-2, eval_stride=50))
        assert trace.final.loss < trace.records[0].loss

    def test_final_model_matches_last_record(self, small_grid, heh_plus):
        initial = prepare_initial_model(arch(2), small_grid, seed=0)
        config = self._config(loss="penalized", lr0=1e-2, penalty_beta=5.0)
        trace = train(arch(2), heh_plus, small_grid, config, initial_model=initial)
        assert not np.array_equal(trace.final_model.flat(), initial.flat())
        evaluation = loss_penalized(trace.final_model, heh_plus, small_grid, beta=5.0)
        assert evaluation.loss == pytest.approx(trace.final.loss, rel=1e-12)

    def test_divergence_aborts_with_trace(self, small_grid, hydrogenic_z3, monkeypatch):
        monkeypatch.setattr(tnn_solver, "DIVERGENCE_LIMIT", 1e-12)
        with pytest.raises(TrainingDivergedError) as excinfo:
            train(arch(1), hydrogenic_z3, small_grid, self._config())
        assert excinfo.value.trace.records == []

    def test_mode_count_must_match(self, small_grid, heh_plus):
        with pytest.raises(ConfigError):
            train(arch(3), heh_plus, small_grid, self._config())

    def test_initial_model_is_redrawn_when_annihilated(self, small_grid, monkeypatch):
        calls = []
        original = tnn_solver.tnn_init

        def flaky_init(arch_, seed, constant=None):
            calls.append(seed)
            return original(arch_, seed, constant=0.1 if len(calls) == 1 else None)

        monkeypatch.setattr(tnn_solver, "tnn_init", flaky_init)
        prepare_initial_model(arch(2, rank=1), small_grid, seed=7)
        assert calls == [7, 8]


@pytest.mark.slow
def test_single_electron_reaches_ground_state(reference_grid, hydrogenic_z3, fd_ground_state):
    exact = fd_ground_state(lambda x: one_body_potential(hydrogenic_z3, x))
    config = TrainConfig(iterations=5000, loss="penalized", seed=0)
    trace = train(TnnArch(n_modes=1, rank=2, hidden_layers=2, width=20), hydrogenic_z3, reference_grid, config)
    assert abs(trace.final.energy - exact) <= 1e-3
    assert all(r.energy >= exact - 1e-6 for r in trace.records)


@pytest.mark.slow
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_antisymmetrization_beats_penalty_on_heh_plus(reference_grid, heh_plus, seed):
    heh_arch = TnnArch(n_modes=2, rank=4, hidden_layers=2, width=20)
    model = prepare_initial_model(heh_arch, reference_grid, seed)
    traces = {}
    for loss in ("penalized", "antisymmetrized"):
        config = TrainConfig(iterations=5000, penalty_beta=200.0, loss=loss, seed=seed)
        traces[loss] = train(heh_arch, heh_plus, reference_grid, config, initial_model=model)
    assert traces["antisymmetrized"].final.energy < traces["penalized"].final.energy
    trained = traces["antisymmetrized"].final_model
    assert not np.array_equal(trained.flat(), model.flat())
    anti = antisymmetrized_function(tnn_eval_modes(trained, reference_grid))
    assert sign_flip_error(anti, seed=seed) <= 1e-10


@pytest.mark.slow
@pytest.mark.parametrize("schedule", [
    dict(schedule="inverse_time", alpha=1e-3),
    dict(schedule="exp_decay"),
], ids=["inverse_time", "exp_decay"])
def test_antisymmetrization_wins_on_most_seeds_for_deep_subnetworks(reference_grid, heh_plus, schedule):
    heh_arch = TnnArch(n_modes=2, rank=4, hidden_layers=4, width=40)
    wins = 0
    for seed in (0, 1, 2):
        model = prepare_initial_model(heh_arch, reference_grid, seed)
        finals = {}
        for loss in ("penalized", "antisymmetrized"):
            config = TrainConfig(iterations=5000, lr0=1e-3, penalty_beta=200.0, loss=loss, seed=seed,
                                 eval_stride=500, **schedule)
            finals[loss] = train(heh_arch, heh_plus, reference_grid, config, initial_model=model).final.energy
        wins += finals["antisymmetrized"] < finals["penalized"]
    assert wins >= 2
