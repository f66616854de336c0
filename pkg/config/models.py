import math
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import Any, Dict, Literal, Optional

from config.settings import settings


class AlsOptions(BaseModel):
    """Alternating least squares settings for CP fitting."""
    model_config = ConfigDict(frozen=True)

    max_sweeps: int = Field(default_factory=lambda: settings.als_defaults["max_sweeps"], ge=1)
    rel_tol: float = Field(default_factory=lambda: settings.als_defaults["rel_tol"], gt=0)
    stall_tol: float = Field(default_factory=lambda: settings.als_defaults["stall_tol"], gt=0)
    restarts: int = Field(default_factory=lambda: settings.als_defaults["restarts"], ge=1)
    seed: int = Field(default_factory=lambda: settings.als_defaults["seed"], ge=0, lt=2**64)
    regularization: float = Field(default_factory=lambda: settings.als_defaults["regularization"], gt=0)
    # Restarts run concurrently when > 1
    workers: int = Field(default_factory=lambda: settings.als_defaults["workers"], ge=1)


class NetworkConfig(BaseModel):
    """Per-mode subnetwork shape, independent of the particle count."""
    model_config = ConfigDict(frozen=True)

    rank: int = Field(default_factory=lambda: settings.training_defaults["rank"], ge=1)
    hidden_layers: int = Field(default_factory=lambda: settings.training_defaults["hidden_layers"], ge=0)
    width: int = Field(default_factory=lambda: settings.training_defaults["width"], ge=1)
    activation: Literal["tanh"] = Field(default_factory=lambda: settings.training_defaults["activation"])


class TnnArch(NetworkConfig):
    n_modes: int = Field(ge=1)

    @classmethod
    def from_network(cls, network: NetworkConfig, n_modes: int) -> "TnnArch":
        return cls(n_modes=n_modes, **network.model_dump())


class TrainConfig(BaseModel):
    """Optimizer, schedule and loss settings for one training run."""
    model_config = ConfigDict(frozen=True)

    iterations: int = Field(default_factory=lambda: settings.training_defaults["iterations"], ge=0)
    lr0: float = Field(default_factory=lambda: settings.training_defaults["lr0"], gt=0)
    schedule: Literal["exp_decay", "inverse_time"] = Field(
        default_factory=lambda: settings.training_defaults["schedule"])
    decay_rate: float = Field(default_factory=lambda: settings.training_defaults["decay_rate"], gt=0, le=1)
    decay_step: int = Field(default_factory=lambda: settings.training_defaults["decay_step"], ge=1)
    alpha: float = Field(default_factory=lambda: settings.training_defaults["alpha"], ge=0)
    adam_beta1: float = Field(default_factory=lambda: settings.training_defaults["adam_beta1"], ge=0, lt=1)
    adam_beta2: float = Field(default_factory=lambda: settings.training_defaults["adam_beta2"], ge=0, lt=1)
    adam_epsilon: float = Field(default_factory=lambda: settings.training_defaults["adam_epsilon"], gt=0)
    penalty_beta: float = Field(default_factory=lambda: settings.training_defaults["penalty_beta"], ge=0)
    seed: int = Field(default_factory=lambda: settings.training_defaults["seed"], ge=0)
    loss: Literal["penalized", "antisymmetrized"] = Field(
        default_factory=lambda: settings.training_defaults["loss"])
    eval_stride: int = Field(default_factory=lambda: settings.training_defaults["eval_stride"], ge=1)


_NETWORK_KEYS = set(NetworkConfig.model_fields)
_TRAIN_KEYS = set(TrainConfig.model_fields)


class RunFile(BaseModel):
    """Contents of a key=value run file: network shape plus training settings."""
    model_config = ConfigDict(frozen=True)

    network: NetworkConfig = Field(default_factory=NetworkConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)

    @classmethod
    def from_pairs(cls, pairs: Dict[str, Any]) -> "RunFile":
        network = {k: v for k, v in pairs.items() if k in _NETWORK_KEYS}
        train = {k: v for k, v in pairs.items() if k in _TRAIN_KEYS}
        return cls(network=NetworkConfig(**network), train=TrainConfig(**train))

    @staticmethod
    def known_keys() -> set:
        return _NETWORK_KEYS | _TRAIN_KEYS


class QuadratureSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    a: float = Field(default_factory=lambda: settings.box[0])
    b: float = Field(default_factory=lambda: settings.box[1])
    subintervals: int = Field(default_factory=lambda: settings.subintervals, ge=1)
    qpoints: int = Field(default_factory=lambda: settings.qpoints, ge=1)

    @model_validator(mode="after")
    def _check_interval(self) -> "QuadratureSettings":
        if not self.a < self.b:
            raise ValueError(f"box must satisfy a < b, got ({self.a}, {self.b})")
        return self


class Nucleus(BaseModel):
    model_config = ConfigDict(frozen=True)

    position: float
    charge: float = Field(gt=0)

    @field_validator("position")
    @classmethod
    def _finite_position(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("nucleus position must be finite")
        return value


class System1D(BaseModel):
    """A 1D soft-Coulomb system: electron count and nuclei."""
    model_config = ConfigDict(frozen=True)

    n_electrons: int = Field(ge=1)
    nuclei: tuple[Nucleus, ...] = ()
    name: Optional[str] = None

    @classmethod
    def lithium(cls) -> "System1D":
        return cls(n_electrons=3, nuclei=(Nucleus(position=0.0, charge=3.0),), name="Li")

    @classmethod
    def helium_hydride(cls) -> "System1D":
        return cls(
            n_electrons=2,
            nuclei=(Nucleus(position=0.0, charge=2.0), Nucleus(position=1.463, charge=1.0)),
            name="HeH+",
        )
