import abc

import numpy as np

from config.models import TrainConfig
from utils.errors import ConfigError, UsageError


class Scheduler(abc.ABC):
    def __init__(self, lr0: float):
        self.lr0 = lr0

    @abc.abstractmethod
    def lr_at(self, k: int) -> float:
        pass


class ExponentialDecay(Scheduler):
    """eta_k = rate^floor(k / step) * eta_0"""

    def __init__(self, lr0: float, rate: float = 0.7, step: int = 3000):
        super().__init__(lr0)
        self.rate = rate
        self.step = step

    def lr_at(self, k: int) -> float:
        return self.lr0 * self.rate ** (k // self.step)


class InverseTimeDecay(Scheduler):
    """eta_k = eta_0 / (1 + alpha k)"""

    def __init__(self, lr0: float, alpha: float = 1e-3):
        super().__init__(lr0)
        self.alpha = alpha

    def lr_at(self, k: int) -> float:
        return self.lr0 / (1.0 + self.alpha * k)


def get_scheduler(config: TrainConfig) -> Scheduler:
    if config.schedule == "exp_decay":
        return ExponentialDecay(config.lr0, config.decay_rate, config.decay_step)
    elif config.schedule == "inverse_time":
        return InverseTimeDecay(config.lr0, config.alpha)
    raise ConfigError(f"Unsupported schedule '{config.schedule}'", schedule=config.schedule)


class Adam:
    """Adam on a flat parameter vector; the step size comes from the scheduler."""

    def __init__(self, size: int, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad ** 2
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return params - lr * m_hat / (np.sqrt(v_hat) + self.eps)

    @classmethod
    def from_config(cls, size: int, config: TrainConfig) -> "Adam":
        return cls(size, config.adam_beta1, config.adam_beta2, config.adam_epsilon)


def lr_at(k: int, config: TrainConfig) -> float:
    if k < 0:
        raise UsageError(f"iteration must be >= 0, got {k}", "invalid_iteration", {"k": k})
    return get_scheduler(config).lr_at(k)
