"""Run configuration: JSON schema, named presets, artifact resolution.

A run config fully describes an experiment: which encoder preset to use,
the personalization settings, where to find (or how to synthesize) the
weights / aesthetic embedding / scorer, and the master seed everything
else derives from. Paths are optional — a ``null`` path means "synthesize
deterministically from the master seed", which is how the acceptance runs
stay self-contained.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .aesthetics import (
    REFERENCE_EPSILON,
    AestheticEmbedding,
    PersonalizationConfig,
    build_aesthetic_embedding,
    reference_default_config,
    toy_default_config,
)
from .encoder import EncoderConfig, MiniClipWeights, init_weights, load_weights
from .errors import ConfigError, InputError
from .formats import load_aesthetic
from .harness import PROMPT_CORPUS, ToyGeneratorWeights, init_toy_generator
from .scorer import ScorerWeights, load_scorer, make_aligned_scorer

_SYNTHETIC_CREATED_AT = "1970-01-01T00:00:00+00:00"

ENCODER_PRESETS: dict[str, EncoderConfig] = {
    "toy": EncoderConfig(),
    "tiny": EncoderConfig(vocab_size=128, context_length=16, d_model=16,
                          n_layers=2, n_heads=2, d_joint=16,
                          image_side=8, patch_side=4),
}


def encoder_preset(name: str) -> EncoderConfig:
    try:
        return ENCODER_PRESETS[name]
    except KeyError:
        known = ", ".join(sorted(ENCODER_PRESETS))
        raise ConfigError(f"unknown encoder preset {name!r} (known: {known})") from None


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one experiment run."""

    encoder_preset: str = "toy"
    personalization: PersonalizationConfig = field(default_factory=toy_default_config)
    weights_path: str | None = None
    aesthetic_path: str | None = None
    scorer_path: str | None = None
    out_dir: str = "runs/latest"
    master_seed: int = 0
    seeds_per_prompt: int = 6
    keyword: str | None = None
    generator_noise_scale: float = 0.1
    aesthetic_source_count: int = 8
    scorer_gain: float = 4.0
    scorer_bias: float = 5.0
    max_workers: int | None = None

    def __post_init__(self) -> None:
        encoder_preset(self.encoder_preset)
        if self.master_seed < 0:
            raise ConfigError(f"master_seed must be non-negative, got {self.master_seed}")
        if self.seeds_per_prompt < 1:
            raise ConfigError(f"seeds_per_prompt must be positive, got {self.seeds_per_prompt}")
        if self.aesthetic_source_count < 1:
            raise ConfigError(
                f"aesthetic_source_count must be positive, got {self.aesthetic_source_count}")
        if self.generator_noise_scale < 0:
            raise ConfigError(
                f"generator_noise_scale must be non-negative, got {self.generator_noise_scale}")


_PERSONALIZATION_KEYS = ("epsilon", "iterations", "optimizer",
                         "sgld_temperature", "normalize_text_in_loss")
_TOP_LEVEL_KEYS = ("encoder_preset", "personalization", "weights_path", "aesthetic_path",
                   "scorer_path", "out_dir", "master_seed", "seeds_per_prompt", "keyword",
                   "generator_noise_scale", "aesthetic_source_count", "scorer_gain",
                   "scorer_bias", "max_workers")


def run_config_to_dict(cfg: RunConfig) -> dict:
    p = cfg.personalization
    return {
        "encoder_preset": cfg.encoder_preset,
        "personalization": {key: getattr(p, key) for key in _PERSONALIZATION_KEYS},
        "weights_path": cfg.weights_path,
        "aesthetic_path": cfg.aesthetic_path,
        "scorer_path": cfg.scorer_path,
        "out_dir": cfg.out_dir,
        "master_seed": cfg.master_seed,
        "seeds_per_prompt": cfg.seeds_per_prompt,
        "keyword": cfg.keyword,
        "generator_noise_scale": cfg.generator_noise_scale,
        "aesthetic_source_count": cfg.aesthetic_source_count,
        "scorer_gain": cfg.scorer_gain,
        "scorer_bias": cfg.scorer_bias,
        "max_workers": cfg.max_workers,
    }


def run_config_from_dict(payload: dict) -> RunConfig:
    if not isinstance(payload, dict):
        raise ConfigError(f"run config must be a JSON object, got {type(payload).__name__}")
    unknown = sorted(set(payload) - set(_TOP_LEVEL_KEYS))
    if unknown:
        raise ConfigError(f"unknown run config keys: {', '.join(unknown)}")
    fields = dict(payload)
    sub = fields.pop("personalization", None)
    if sub is not None:
        if not isinstance(sub, dict):
            raise ConfigError("personalization must be a JSON object")
        bad = sorted(set(sub) - set(_PERSONALIZATION_KEYS))
        if bad:
            raise ConfigError(f"unknown personalization keys: {', '.join(bad)}")
        fields["personalization"] = toy_default_config(**sub)
    try:
        return RunConfig(**fields)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_run_config(path: str | Path) -> RunConfig:
    """Read a JSON run config; relative artifact paths are rebased onto the
    config file's directory so presets can be invoked from anywhere."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"run config not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"run config {path} is not valid JSON: {exc}") from exc
    cfg = run_config_from_dict(payload)
    base = path.parent
    updates = {}
    for key in ("weights_path", "aesthetic_path", "scorer_path"):
        value = getattr(cfg, key)
        if value is not None and not Path(value).is_absolute():
            updates[key] = str(base / value)
    return replace(cfg, **updates) if updates else cfg


def write_run_config(cfg: RunConfig, path: str | Path) -> None:
    text = json.dumps(run_config_to_dict(cfg), indent=2, sort_keys=True) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def builtin_run_config(name: str) -> RunConfig:
    """The two shipped presets: the calibrated toy defaults and the
    published step size (kept alongside for reference runs)."""
    if name == "toy-default":
        return RunConfig()
    if name == "reference-default":
        return RunConfig(personalization=reference_default_config())
    raise ConfigError(f"unknown run config preset {name!r} (known: toy-default, reference-default)")


def _derived_seed(master_seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([master_seed, stream]).generate_state(1)[0])


_WEIGHTS_STREAM = 11
_AESTHETIC_STREAM = 13
_GENERATOR_STREAM = 17


def synthesize_aesthetic(d_joint: int, source_count: int, master_seed: int,
                         name: str = "synthetic") -> AestheticEmbedding:
    """Aesthetic embedding from ``source_count`` seeded random unit vectors,
    standing in for a user's image set."""
    rng = np.random.default_rng(np.random.SeedSequence([master_seed, _AESTHETIC_STREAM]))
    vectors = []
    for _ in range(source_count):
        v = rng.standard_normal(d_joint)
        vectors.append((v / np.linalg.norm(v)).astype(np.float32))
    return build_aesthetic_embedding(vectors, name=name, created_at=_SYNTHETIC_CREATED_AT)


@dataclass(frozen=True)
class ResolvedExperiment:
    config: RunConfig
    weights: MiniClipWeights
    embedding: AestheticEmbedding
    scorer: ScorerWeights
    generator: ToyGeneratorWeights
    corpus: tuple[str, ...] = PROMPT_CORPUS


def resolve_experiment(cfg: RunConfig) -> ResolvedExperiment:
    """Load or synthesize every artifact the config names and check that
    their dimensions agree."""
    encoder_config = encoder_preset(cfg.encoder_preset)
    if cfg.weights_path is not None:
        weights = load_weights(cfg.weights_path)
    else:
        weights = init_weights(encoder_config, seed=_derived_seed(cfg.master_seed,
                                                                  _WEIGHTS_STREAM))
    d_joint = weights.config.d_joint

    if cfg.aesthetic_path is not None:
        embedding = load_aesthetic(cfg.aesthetic_path)
    else:
        embedding = synthesize_aesthetic(d_joint, cfg.aesthetic_source_count, cfg.master_seed)
    if embedding.dim != d_joint:
        raise ConfigError(
            f"aesthetic dim {embedding.dim} does not match encoder d_joint {d_joint}")

    if cfg.scorer_path is not None:
        scorer = load_scorer(cfg.scorer_path, expected_dim=d_joint)
    else:
        scorer = make_aligned_scorer(embedding, gain=cfg.scorer_gain, b=cfg.scorer_bias)

    generator = init_toy_generator(d_joint, seed=_derived_seed(cfg.master_seed,
                                                               _GENERATOR_STREAM),
                                   noise_scale=cfg.generator_noise_scale)
    return ResolvedExperiment(config=cfg, weights=weights, embedding=embedding,
                              scorer=scorer, generator=generator)


__all__ = [
    "ENCODER_PRESETS",
    "REFERENCE_EPSILON",
    "ResolvedExperiment",
    "RunConfig",
    "builtin_run_config",
    "encoder_preset",
    "load_run_config",
    "resolve_experiment",
    "run_config_from_dict",
    "run_config_to_dict",
    "synthesize_aesthetic",
    "write_run_config",
]
