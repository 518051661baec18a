"""Pipeline run configuration.

One JSON document drives a whole pipeline run. Every field has a
default, so "{}" is a valid config; defaults for the reward weights and
attacker learning rate depend on the task (parsing vs tagging). The
loader tracks which top-level sections came from the file and which fell
back to defaults so manifests can record the provenance of every value.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from spad.errors import ConfigError, DataError
from spad.genattack import GenConfig, RLConfig
from spad.quality import EmbedderConfig, LMConfig
from spad.structpred import ModelConfig
from spad.treebank import SynthGrammarConfig
from spad.wordattack import PerturbationConfig

TASKS = ("parsing", "tagging")

# Per-task starting points for the three models and the attacker reward.
# The victim and the two references deliberately differ in architecture
# and seed so their errors decorrelate.
_MODEL_DEFAULTS = {
    "parsing": {
        "victim": {"kind": "parser", "flavor": "RECURRENT_BIAFFINE_EISNER", "seed": 0},
        "ref_b": {"kind": "parser", "flavor": "WINDOW_FEEDFORWARD_GREEDY", "seed": 1},
        "ref_c": {"kind": "parser", "flavor": "RECURRENT_BIAFFINE_CLE", "seed": 2},
    },
    "tagging": {
        "victim": {"kind": "tagger", "flavor": "RECURRENT_SOFTMAX", "seed": 0},
        "ref_b": {"kind": "tagger", "flavor": "WINDOW_FEEDFORWARD", "seed": 1},
        "ref_c": {"kind": "tagger", "flavor": "HMM_VITERBI", "seed": 2},
    },
}
_RL_DEFAULTS = {
    "parsing": {"alpha": 1.0, "beta": 0.001, "gamma": 100.0, "w_unk": 500.0, "lr": 2e-5},
    "tagging": {"alpha": 1.0, "beta": 0.001, "gamma": 30.0, "w_unk": 0.0, "lr": 5e-5},
}


@dataclass(frozen=True)
class RunConfig:
    """Everything a pipeline run needs beyond file paths.

    ``allsame`` makes attacker training score rewards against the victim
    alone (references aliased to it); ``evalsame`` does the same at
    evaluation time. Both exist so the reference-disagreement signal can
    be switched off and its contribution measured.
    """

    task: str = "parsing"
    seed: int = 0
    n_train: int = 2000
    n_dev: int = 200
    grammar: SynthGrammarConfig = field(default_factory=SynthGrammarConfig)
    victim: ModelConfig = None
    ref_b: ModelConfig = None
    ref_c: ModelConfig = None
    lm: LMConfig = field(default_factory=LMConfig)
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    generator: GenConfig = field(default_factory=GenConfig)
    rl: RLConfig = None
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)
    allsame: bool = False
    evalsame: bool = False

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.n_train < 1 or self.n_dev < 1:
            raise ConfigError("n_train and n_dev must be >= 1")
        model_defaults = _MODEL_DEFAULTS[self.task]
        for name in ("victim", "ref_b", "ref_c"):
            if getattr(self, name) is None:
                object.__setattr__(
                    self, name, ModelConfig.from_dict(model_defaults[name])
                )
        if self.rl is None:
            object.__setattr__(self, "rl", RLConfig(**_RL_DEFAULTS[self.task]))
        expected_kind = "parser" if self.task == "parsing" else "tagger"
        for name in ("victim", "ref_b", "ref_c"):
            kind = getattr(self, name).kind
            if kind != expected_kind:
                raise ConfigError(
                    f"{name} is a {kind} but the task is {self.task}"
                )

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "seed": self.seed,
            "n_train": self.n_train,
            "n_dev": self.n_dev,
            "grammar": self.grammar.to_dict(),
            "victim": self.victim.to_dict(),
            "ref_b": self.ref_b.to_dict(),
            "ref_c": self.ref_c.to_dict(),
            "lm": self.lm.to_dict(),
            "embedder": self.embedder.to_dict(),
            "generator": self.generator.to_dict(),
            "rl": self.rl.to_dict(),
            "perturbation": self.perturbation.to_dict(),
            "allsame": self.allsame,
            "evalsame": self.evalsame,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError(f"config document must be a JSON object, got {type(data).__name__}")
        known = {
            "task", "seed", "n_train", "n_dev", "grammar", "victim", "ref_b",
            "ref_c", "lm", "embedder", "generator", "rl", "perturbation",
            "allsame", "evalsame",
        }
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        task = data.get("task", "parsing")
        if task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {task!r}")
        kwargs: dict = {"task": task}
        for name in ("seed", "n_train", "n_dev", "allsame", "evalsame"):
            if name in data:
                kwargs[name] = data[name]
        if "grammar" in data:
            kwargs["grammar"] = SynthGrammarConfig.from_dict(data["grammar"])
        for name in ("victim", "ref_b", "ref_c"):
            if name in data:
                merged = dict(_MODEL_DEFAULTS[task][name])
                merged.update(data[name])
                kwargs[name] = ModelConfig.from_dict(merged)
        if "lm" in data:
            kwargs["lm"] = LMConfig.from_dict(data["lm"])
        if "embedder" in data:
            kwargs["embedder"] = EmbedderConfig.from_dict(data["embedder"])
        if "generator" in data:
            kwargs["generator"] = GenConfig.from_dict(data["generator"])
        if "rl" in data:
            merged = dict(_RL_DEFAULTS[task])
            merged.update(data["rl"])
            kwargs["rl"] = RLConfig.from_dict(merged)
        if "perturbation" in data:
            kwargs["perturbation"] = PerturbationConfig.from_dict(data["perturbation"])
        return cls(**kwargs)


def config_origin(data: dict) -> dict[str, str]:
    """Per-section provenance for the manifest: file or default."""
    sections = (
        "task", "seed", "n_train", "n_dev", "grammar", "victim", "ref_b",
        "ref_c", "lm", "embedder", "generator", "rl", "perturbation",
        "allsame", "evalsame",
    )
    return {s: ("file" if s in data else "default") for s in sections}


def load_config(path: str | Path | None) -> tuple[RunConfig, dict[str, str]]:
    """Read and validate a config file; None means all defaults.

    Returns the config and its per-section provenance map.
    """
    if path is None:
        return RunConfig.from_dict({}), config_origin({})
    p = Path(path)
    if not p.exists():
        raise DataError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataError(f"config file {p} is not valid JSON: {e}") from e
    return RunConfig.from_dict(data), config_origin(data)
