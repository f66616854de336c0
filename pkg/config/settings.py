import os
import yaml
from pathlib import Path
from typing import Dict, Any, Optional
from dotenv import load_dotenv

_DEFAULT_CONFIG_PATH = str(Path(__file__).resolve().parent)

# Reference quadrature and training hyperparameters, with desk-scale run lengths
_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "quadrature": {"box": [-10.0, 10.0], "subintervals": 30, "qpoints": 30},
    "als": {
        "max_sweeps": 2000,
        "rel_tol": 1e-8,
        "stall_tol": 1e-12,
        "restarts": 16,
        "seed": 0,
        "regularization": 1e-12,
        "workers": 1,
    },
    "training": {
        "rank": 4,
        "hidden_layers": 2,
        "width": 20,
        "activation": "tanh",
        "iterations": 5000,
        "lr0": 1e-3,
        "schedule": "exp_decay",
        "decay_rate": 0.7,
        "decay_step": 3000,
        "alpha": 1e-3,
        "adam_beta1": 0.9,
        "adam_beta2": 0.999,
        "adam_epsilon": 1e-8,
        "penalty_beta": 200.0,
        "seed": 0,
        "loss": "antisymmetrized",
        "eval_stride": 50,
    },
    "output": {"dir": "runs"},
    "logging": {"level": "INFO"},
}


class Settings:
    def __init__(self):
        load_dotenv()

        self.config_path = os.getenv("CONFIG_PATH", _DEFAULT_CONFIG_PATH)
        self.config_file = os.path.join(self.config_path, "config.yaml")

        self._load_config()

    def _load_config(self):
        """Load defaults from config.yaml, falling back to the environment"""
        try:
            with open(self.config_file, 'r', encoding='utf-8') as f:
                config = yaml.safe_load(f) or {}
            self._update_from_config(config)
        except FileNotFoundError:
            print(f"Warning: Config file not found at {self.config_file}, using built-in defaults")
            self._update_from_config({})
        except Exception as e:
            print(f"Error loading config: {e}, using built-in defaults")
            self._update_from_config({})
        self._update_from_env()

    def _update_from_config(self, config: Dict[str, Any]):
        """Merge the YAML sections over the built-in defaults"""
        merged = {}
        for section, defaults in _DEFAULTS.items():
            overrides = config.get(section) or {}
            unknown = set(overrides) - set(defaults)
            if unknown:
                print(f"Warning: ignoring unknown {section} keys in config: {', '.join(sorted(unknown))}")
            merged[section] = {**defaults, **{k: v for k, v in overrides.items() if k in defaults}}

        quadrature = merged["quadrature"]
        self.box = (float(quadrature["box"][0]), float(quadrature["box"][1]))
        self.subintervals = int(quadrature["subintervals"])
        self.qpoints = int(quadrature["qpoints"])

        self.als_defaults = dict(merged["als"])
        self.training_defaults = dict(merged["training"])

        self.output_dir = str(merged["output"]["dir"])
        self.log_level = str(merged["logging"]["level"])

    def _update_from_env(self):
        """Environment variables win over config.yaml"""
        self.log_level = os.getenv("LOG_LEVEL", self.log_level)
        self.output_dir = os.getenv("TPF_OUTPUT_DIR", self.output_dir)

    def resolve_output_dir(self, override: Optional[str] = None) -> Path:
        """Output directory for run artifacts, created on demand"""
        path = Path(override or self.output_dir)
        path.mkdir(parents=True, exist_ok=True)
        return path


# Global settings instance
settings = Settings()
