"""JSON experiment configuration with strict key checking.

Sections: ``data``, ``train``, ``attack_train``, ``attack_eval``,
``output`` and an optional top-level ``seeds`` list.  Unknown keys anywhere
are rejected before any work starts.
"""

from __future__ import annotations

import inspect
import json
import os
from dataclasses import dataclass, fields

from . import attack, synthdata, training
from .errors import ConfigError

SEED_ENV = "DAFA_LAB_SEED"
SECTIONS = ("data", "train", "attack_train", "attack_eval", "output", "seeds")
PRESETS = {"fairness": synthdata.preset_fairness, "pair": synthdata.preset_pair}
ATTACK_KEYS = {f.name for f in fields(attack.AttackConfig)} - {"objective"}
OUTPUT_KEYS = {"dir"}


def master_seed(default: int = 0) -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _preset_keys(name: str) -> set[str]:
    return set(inspect.signature(PRESETS[name]).parameters) - {"seed"}


def _check_keys(section: str, data: dict, allowed: set[str]) -> None:
    if not isinstance(data, dict):
        raise ConfigError(f"section {section!r} must be an object")
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str
    data: dict
    train: training.TrainConfig
    attack_train: dict
    attack_eval: dict
    seeds: tuple[int, ...] | None
    out_dir: str | None
    train_keys: tuple[str, ...] = ()

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        _check_keys("config", doc, set(SECTIONS))
        data = dict(doc.get("data", {}))
        _check_keys("data", data, set(_preset_keys("fairness") | _preset_keys("pair") | {"preset"}))
        preset = data.pop("preset", "fairness")
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
        _check_keys("data", data, _preset_keys(preset))
        train_doc = doc.get("train", {})
        _check_keys("train", train_doc, {f.name for f in fields(training.TrainConfig)} | {"lambda"})
        try:
            train = training.TrainConfig.from_dict(train_doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        at, ae = doc.get("attack_train", {}), doc.get("attack_eval", {})
        _check_keys("attack_train", at, ATTACK_KEYS)
        _check_keys("attack_eval", ae, ATTACK_KEYS)
        out = doc.get("output", {})
        _check_keys("output", out, OUTPUT_KEYS)
        seeds = doc.get("seeds")
        if seeds is not None:
            if not isinstance(seeds, list) or not all(isinstance(s, int) for s in seeds):
                raise ConfigError("seeds must be a list of integers")
            seeds = tuple(seeds)
        keys = tuple("lam" if k == "lambda" else k for k in train_doc)
        return cls(preset, data, train, dict(at), dict(ae), seeds, out.get("dir"), keys)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from None
        return cls.from_dict(doc)

    @classmethod
    def default(cls) -> "ExperimentConfig":
        return cls.from_dict({})

    def datasets(self, seed: int):
        return PRESETS[self.preset](seed=seed, **self.data)

    def _attack(self, doc: dict, factory) -> attack.AttackConfig | None:
        if not doc:
            return None
        eps = doc.get("epsilon", self.train.base_epsilon)
        try:
            base = factory(eps)
            return attack.AttackConfig(**{**base.__dict__, **doc, "epsilon": eps})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid attack settings: {exc}") from None

    def attack_train_config(self) -> attack.AttackConfig | None:
        return self._attack(self.attack_train, attack.AttackConfig.training)

    def attack_eval_config(self) -> attack.AttackConfig | None:
        return self._attack(self.attack_eval, attack.AttackConfig.evaluation)
