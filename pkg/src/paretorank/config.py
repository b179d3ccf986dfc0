"""Layered run configuration: defaults, INI-style file, command-line overrides.

Precedence is flags > file > defaults.  Every key lives in a section named
after the module it configures, and the default values are read off the
dataclass defaults so this file never drifts from the code.
"""

from __future__ import annotations

import configparser
from typing import Mapping

import numpy as np

from .backends import (
    HttpBackend,
    OracleBackend,
    RetryPolicy,
    adjacent_confusion,
    diagonal_confusion,
    identity_confusion,
    uniform_confusion,
)
from .core import ConfigError, LabelSource, RelevanceLevel
from .judge import PromptSpec
from .ranker import TrainConfig
from .simulator import ClickModel, SimConfig
from .util import child_seed

_SIM = SimConfig()
_NOISE = ClickModel()
_TRAIN = TrainConfig()
_SPEC = PromptSpec()
_RETRY = RetryPolicy()


def default_config() -> dict[str, dict[str, object]]:
    """Fresh copy of the full default configuration tree."""
    return {
        "simulator": {
            "n_queries": _SIM.n_queries,
            "n_items": _SIM.n_items,
            "candidates_per_query": _SIM.candidates_per_query,
            "feature_dim": _SIM.feature_dim,
            "zipf_exponent": _SIM.zipf_exponent,
            "sessions_total": _SIM.sessions_total,
            "human_label_fraction": _SIM.human_label_fraction,
            "eval_fraction": _SIM.eval_fraction,
            "min_impressions": _SIM.min_impressions,
            "click_slope": _NOISE.click_slope,
            "click_center": _NOISE.click_center,
            "download_slope": _NOISE.download_slope,
            "download_center": _NOISE.download_center,
            "clickiness_weight": _NOISE.clickiness_weight,
            "pair_noise_sd": _NOISE.pair_noise_sd,
            "impressions_per_session": _NOISE.impressions_per_session,
            "exposure_affinity": _NOISE.exposure_affinity,
            "exposure_clickiness": _NOISE.exposure_clickiness,
            "exposure_noise_sd": _NOISE.exposure_noise_sd,
            "click_weight": _NOISE.click_weight,
            "download_weight": _NOISE.download_weight,
        },
        "judge": {
            "mode": _SPEC.mode,
            "k": _SPEC.k,
            "label_style": _SPEC.label_style,
            "template_version": _SPEC.template_version,
        },
        "backend": {
            "kind": "oracle",
            "diagonal": 0.8,
            "confusion": "adjacent",
            "url": "",
            "model": "",
            "token_env": "JUDGE_API_TOKEN",
            "timeout": 30.0,
            "concurrency": 8,
            "max_attempts": _RETRY.max_attempts,
            "base_delay": _RETRY.base_delay,
            "jitter": _RETRY.jitter,
            "max_transport_failures": _RETRY.max_transport_failures,
        },
        "ranker": {
            "n_trees": _TRAIN.n_trees,
            "learning_rate": _TRAIN.learning_rate,
            "max_leaves": _TRAIN.max_leaves,
            "min_examples_per_leaf": _TRAIN.min_examples_per_leaf,
            "ndcg_truncation": _TRAIN.ndcg_truncation,
            "weight_behavioral": _TRAIN.resolved_weights()[LabelSource.BEHAVIORAL],
            "weight_human_textual": _TRAIN.resolved_weights()[LabelSource.HUMAN_TEXTUAL],
            "weight_llm_textual": _TRAIN.resolved_weights()[LabelSource.LLM_TEXTUAL],
        },
        "experiment": {
            "n_seeds": 5,
            "behavioral_fractions": "0.0,0.3,0.5,0.7,1.0",
            "textual_gain_min": 0.005,
            "behavioral_drop_max": 0.003,
        },
    }


KEY_DOCS: dict[str, str] = {
    "simulator.n_queries": "number of simulated search queries",
    "simulator.n_items": "catalog size",
    "simulator.candidates_per_query": "retrieved candidates per query",
    "simulator.feature_dim": "ranker feature vector width",
    "simulator.zipf_exponent": "query traffic power-law exponent",
    "simulator.sessions_total": "total search sessions to simulate",
    "simulator.human_label_fraction": "fraction of pairs given gold labels",
    "simulator.eval_fraction": "held-out query fraction",
    "simulator.min_impressions": "impressions needed before a behavioral label is minted",
    "simulator.clickiness_weight": "strength of the popularity term in engagement",
    "judge.mode": "zero_shot or few_shot",
    "judge.k": "exemplars per prompt in few_shot mode",
    "judge.label_style": "textual or numeric label emission",
    "backend.kind": "oracle or http",
    "backend.diagonal": "oracle confusion diagonal",
    "backend.confusion": "oracle error shape: adjacent, uniform, identity, flat",
    "backend.url": "chat-completion endpoint for the http backend",
    "backend.model": "model name sent to the http backend",
    "backend.concurrency": "in-flight judge requests",
    "ranker.n_trees": "boosting rounds",
    "ranker.learning_rate": "shrinkage per round",
    "ranker.weight_llm_textual": "gradient weight of machine-labeled groups",
    "experiment.n_seeds": "seeds run by the experiment command",
    "experiment.behavioral_fractions": "mixing fractions for the frontier sweep",
    "experiment.textual_gain_min": "--check floor for mean textual NDCG@3 gain",
    "experiment.behavioral_drop_max": "--check ceiling for mean behavioral NDCG@3 drop",
}


def _coerce(section: str, key: str, raw: str, default: object) -> object:
    text = raw.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(
            f"{section}.{key}: cannot parse {raw!r} as {type(default).__name__}"
        ) from None
    return text


def _set(config: dict[str, dict[str, object]], section: str, key: str, raw: str) -> None:
    if section not in config:
        raise ConfigError(f"unknown config section {section!r}")
    if key not in config[section]:
        raise ConfigError(f"unknown config key {section}.{key}")
    config[section][key] = _coerce(section, key, raw, config[section][key])


def load_config(path: str | None) -> dict[str, dict[str, object]]:
    """Defaults overlaid with an INI-style file, if one is given."""
    config = default_config()
    if path is None:
        return config
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    for section in parser.sections():
        for key, raw in parser.items(section):
            _set(config, section, key, raw)
    return config


def apply_overrides(
    config: dict[str, dict[str, object]], overrides: list[str]
) -> None:
    """Apply --set style overrides of the form section.key=value, in order."""
    for item in overrides:
        head, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        section, dot, key = head.strip().partition(".")
        if not dot:
            raise ConfigError(f"override key {head!r} must be section.key")
        _set(config, section, key.strip(), raw)


def config_to_text(config: Mapping[str, Mapping[str, object]]) -> str:
    """Deterministic INI rendering of a resolved configuration."""
    lines: list[str] = []
    for section in sorted(config):
        lines.append(f"[{section}]")
        for key in sorted(config[section]):
            lines.append(f"{key} = {config[section][key]}")
        lines.append("")
    return "\n".join(lines)


def build_sim_config(config: Mapping[str, Mapping[str, object]], seed: int) -> SimConfig:
    s = config["simulator"]
    noise = ClickModel(
        click_slope=float(s["click_slope"]),
        click_center=float(s["click_center"]),
        download_slope=float(s["download_slope"]),
        download_center=float(s["download_center"]),
        clickiness_weight=float(s["clickiness_weight"]),
        pair_noise_sd=float(s["pair_noise_sd"]),
        impressions_per_session=int(s["impressions_per_session"]),
        exposure_affinity=float(s["exposure_affinity"]),
        exposure_clickiness=float(s["exposure_clickiness"]),
        exposure_noise_sd=float(s["exposure_noise_sd"]),
        click_weight=float(s["click_weight"]),
        download_weight=float(s["download_weight"]),
    )
    return SimConfig(
        n_queries=int(s["n_queries"]),
        n_items=int(s["n_items"]),
        candidates_per_query=int(s["candidates_per_query"]),
        feature_dim=int(s["feature_dim"]),
        zipf_exponent=float(s["zipf_exponent"]),
        sessions_total=int(s["sessions_total"]),
        human_label_fraction=float(s["human_label_fraction"]),
        eval_fraction=float(s["eval_fraction"]),
        min_impressions=int(s["min_impressions"]),
        noise=noise,
        seed=seed,
    )


def build_train_config(config: Mapping[str, Mapping[str, object]], seed: int) -> TrainConfig:
    r = config["ranker"]
    return TrainConfig(
        n_trees=int(r["n_trees"]),
        learning_rate=float(r["learning_rate"]),
        max_leaves=int(r["max_leaves"]),
        min_examples_per_leaf=int(r["min_examples_per_leaf"]),
        ndcg_truncation=int(r["ndcg_truncation"]),
        source_weights={
            LabelSource.BEHAVIORAL: float(r["weight_behavioral"]),
            LabelSource.HUMAN_TEXTUAL: float(r["weight_human_textual"]),
            LabelSource.LLM_TEXTUAL: float(r["weight_llm_textual"]),
        },
        seed=seed,
    )


def build_prompt_spec(config: Mapping[str, Mapping[str, object]]) -> PromptSpec:
    j = config["judge"]
    return PromptSpec(
        mode=str(j["mode"]),
        k=int(j["k"]),
        label_style=str(j["label_style"]),
        template_version=str(j["template_version"]),
    )


def build_retry_policy(config: Mapping[str, Mapping[str, object]], seed: int) -> RetryPolicy:
    b = config["backend"]
    return RetryPolicy(
        max_attempts=int(b["max_attempts"]),
        base_delay=float(b["base_delay"]),
        jitter=float(b["jitter"]),
        max_transport_failures=int(b["max_transport_failures"]),
        seed=child_seed(seed, "retry"),
    )


def build_confusion(kind: str, diagonal: float) -> np.ndarray:
    if kind == "adjacent":
        return adjacent_confusion(diagonal)
    if kind == "uniform":
        return diagonal_confusion(diagonal)
    if kind == "identity":
        return identity_confusion()
    if kind == "flat":
        return uniform_confusion()
    raise ConfigError(f"unknown confusion shape {kind!r}")


def build_backend(
    config: Mapping[str, Mapping[str, object]],
    seed: int,
    truth: Mapping[tuple[str, str], RelevanceLevel] | None = None,
):
    """Instantiate the judge backend the config asks for.

    The oracle backend needs the simulator's latent truth table; callers
    labeling real data use the http backend and never touch truth.
    """
    b = config["backend"]
    kind = str(b["kind"])
    if kind == "oracle":
        if truth is None:
            raise ConfigError("oracle backend requires a latent truth table")
        confusion = build_confusion(str(b["confusion"]), float(b["diagonal"]))
        return OracleBackend(truth, confusion, seed=child_seed(seed, "judge"))
    if kind == "http":
        if not str(b["url"]):
            raise ConfigError("http backend requires backend.url")
        return HttpBackend(
            url=str(b["url"]),
            model=str(b["model"]) or "judge",
            token_env=str(b["token_env"]),
            timeout=float(b["timeout"]),
        )
    raise ConfigError(f"unknown backend kind {kind!r}")


def parse_fractions(text: str) -> tuple[float, ...]:
    """Parse the sweep's comma-separated mixing fractions."""
    parts = [p.strip() for p in str(text).split(",") if p.strip()]
    if not parts:
        raise ConfigError("behavioral_fractions must name at least one value")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"bad fraction list {text!r}") from None
