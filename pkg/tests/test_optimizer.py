import numpy as np
import pytest

from config.models import TrainConfig
from services.optimizer import Adam, ExponentialDecay, InverseTimeDecay, get_scheduler, lr_at
from utils.errors import UsageError


class TestSchedules:
    def test_exponential_decay(self):
        config = TrainConfig(lr0=1e-3, schedule="exp_decay")
        assert lr_at(0, config) == pytest.approx(1e-3)
        assert lr_at(2999, config) == pytest.approx(1e-3)
        assert lr_at(3000, config) == pytest.approx(7e-4)
        assert lr_at(6000, config) == pytest.approx(4.9e-4)

    def test_inverse_time(self):
        config = TrainConfig(lr0=1e-3, schedule="inverse_time", alpha=1e-3)
        assert lr_at(1000, config) == pytest.approx(5e-4)
        assert lr_at(0, config) == pytest.approx(1e-3)

    def test_negative_iteration(self):
        with pytest.raises(UsageError):
            lr_at(-1, TrainConfig())

    def test_factory(self):
        assert isinstance(get_scheduler(TrainConfig(schedule="exp_decay")), ExponentialDecay)
        assert isinstance(get_scheduler(TrainConfig(schedule="inverse_time")), InverseTimeDecay)


class TestAdam:
    def test_first_step_has_learning_rate_magnitude(self):
        adam = Adam(3)
        params = np.zeros(3)
        updated = adam.step(params, np.array([2.0, -0.5, 1e-3]), lr=0.01)
        np.testing.assert_allclose(updated, [-0.01, 0.01, -0.01], rtol=1e-4)

    def test_minimizes_quadratic(self):
        adam = Adam(2)
        params = np.zeros(2)
        target = np.array([3.0, -1.0])
        for _ in range(2000):
            params = adam.step(params, 2 * (params - target), lr=0.05)
        np.testing.assert_allclose(params, target, atol=1e-2)

    def test_from_config(self):
        adam = Adam.from_config(4, TrainConfig(adam_beta1=0.8, adam_beta2=0.99, adam_epsilon=1e-6))
        assert (adam.beta1, adam.beta2, adam.eps) == (0.8, 0.99, 1e-6)
        assert adam.m.shape == (4,)
