"""Run configuration: defaults < preset < JSON file < command-line flags."""

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace

from .dsp import DspConfig
from .models import EnsembleWeights, TrainConfig

SEED_ENV = "SCENE_ENSEMBLE_SEED"

# Desk-scale settings: one-second clips need a short hop so the 1D CNN's
# valid convolutions (kernels 100/30/15) still fit.
PRESETS = {
    "full": {},
    "toy": {
        "dsp": {"hop_length": 80},
        "train": {"lr": 1e-3, "epochs": 200, "target_train_accuracy": 0.99},
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    dsp: DspConfig = field(default_factory=DspConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    weights: EnsembleWeights = field(default_factory=EnsembleWeights)
    seed: int = 0
    jobs: int = 1

    def to_dict(self):
        return {
            "dsp": asdict(self.dsp),
            "train": asdict(self.train),
            "weights": list(self.weights.as_tuple()),
            "seed": self.seed,
            "jobs": self.jobs,
        }

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


_TOP_KEYS = {"dsp", "train", "weights", "seed", "jobs"}


def _merge_section(current, updates, cls, section):
    allowed = {f.name for f in fields(cls)}
    unknown = set(updates) - allowed
    if unknown:
        raise ConfigError(f"unknown {section} keys: {sorted(unknown)}")
    try:
        return replace(current, **updates)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {section} settings: {exc}") from None


def merge(cfg, updates):
    """Return ``cfg`` with a nested ``updates`` mapping applied."""
    unknown = set(updates) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    out = replace(cfg)
    if "dsp" in updates:
        d = dict(updates["dsp"])
        # fmax defaults to Nyquist of the *new* rate unless given explicitly
        if "sample_rate" in d and "fmax" not in d:
            d["fmax"] = None
        out.dsp = _merge_section(out.dsp, d, DspConfig, "dsp")
    if "train" in updates:
        out.train = _merge_section(out.train, updates["train"], TrainConfig, "train")
    if "weights" in updates:
        w = updates["weights"]
        try:
            out.weights = EnsembleWeights.parse(w) if isinstance(w, str) else EnsembleWeights(*w)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid weights: {exc}") from None
    for key in ("seed", "jobs"):
        if key in updates:
            setattr(out, key, int(updates[key]))
    if out.jobs < 1:
        raise ConfigError("jobs must be >= 1")
    return out


def load_run_config(path=None, preset=None, overrides=None, env=None):
    """Build the effective configuration.

    The seed falls back to ``$SCENE_ENSEMBLE_SEED`` when neither the file nor
    the overrides set one. The training seed always follows the run seed.
    """
    env = os.environ if env is None else env
    cfg = RunConfig()
    if preset:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}")
        cfg = merge(cfg, PRESETS[preset])
    file_cfg = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        cfg = merge(cfg, file_cfg)
    overrides = overrides or {}
    if "seed" not in overrides and "seed" not in file_cfg and env.get(SEED_ENV):
        try:
            cfg.seed = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer") from None
    cfg = merge(cfg, overrides)
    cfg.train = replace(cfg.train, seed=cfg.seed)
    return cfg
