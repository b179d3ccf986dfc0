"""Domain types, dataset assembly, and label-source mixing.

A :class:`RankingDataset` holds (query, app) training examples from up to
three label sources: behavioral engagement scores, human relevance judgments,
and judge-generated judgments.  Examples are grouped by (query, source) and
the grouping is the unit everything downstream respects: gradient pairs are
formed only within a group, and mixing resamples whole groups.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .util import child_seed

GAIN_SET = (0.0, 1.0, 3.0, 7.0, 15.0)


class ParetoRankError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(ParetoRankError):
    """A configuration value violates its documented domain."""


class DataError(ParetoRankError):
    """Base class for dataset construction and validation failures."""


class DuplicateExampleError(DataError):
    """Two examples share (query_id, app_id, source)."""


class DanglingReferenceError(DataError):
    """An example references a query or item absent from the dataset maps."""


class FeatureDimMismatchError(DataError):
    """An example's feature vector length differs from the dataset's."""


class FeatureVectorConflictError(DataError):
    """The same (query, app) pair appears with two different feature vectors."""


class EmptySourceError(DataError):
    """A requested mixing fraction needs a label source that has no examples."""


class InvalidCountsError(DataError):
    """Engagement counts violate 0 <= downloads <= clicks <= impressions."""


class UnknownQueryError(DataError):
    """A query id with no candidates was asked for."""


class RelevanceLevel(enum.IntEnum):
    """Ordinal relevance judgment on a five-point scale; higher is better."""

    LABEL_1 = 1
    LABEL_2 = 2
    LABEL_3 = 3
    LABEL_4 = 4
    LABEL_5 = 5

    @property
    def canonical_name(self) -> str:
        """Lowercase wire name, e.g. ``label_3``."""
        return f"label_{self.value}"

    @classmethod
    def from_name(cls, name: str) -> "RelevanceLevel":
        try:
            return _LEVEL_BY_NAME[name.lower()]
        except KeyError:
            raise ValueError(f"unknown relevance label name: {name!r}") from None


_LEVEL_BY_NAME = {level.canonical_name: level for level in RelevanceLevel}


class LabelSource(enum.Enum):
    """Provenance of a training label."""

    BEHAVIORAL = "behavioral"
    HUMAN_TEXTUAL = "human_textual"
    LLM_TEXTUAL = "llm_textual"

    @property
    def is_textual(self) -> bool:
        return self is not LabelSource.BEHAVIORAL

    @classmethod
    def from_value(cls, value: str) -> "LabelSource":
        try:
            return cls(value)
        except ValueError:
            raise ValueError(f"unknown label source: {value!r}") from None


def gain_of(level: RelevanceLevel) -> float:
    """Exponential gain for a graded judgment: levels 1..5 map to 0, 1, 3, 7, 15."""
    return float(2 ** (int(level) - 1) - 1)


_LEVEL_BY_GAIN = {gain_of(level): level for level in RelevanceLevel}


def level_from_gain(gain: float) -> RelevanceLevel:
    """Inverse of :func:`gain_of`; rejects values outside the gain set."""
    try:
        return _LEVEL_BY_GAIN[float(gain)]
    except KeyError:
        raise ValueError(f"not a textual gain value: {gain!r}") from None


@dataclass(frozen=True)
class Query:
    query_id: str
    text: str
    frequency_count: int

    def __post_init__(self):
        if self.frequency_count < 0:
            raise ValueError(
                f"frequency_count must be >= 0, got {self.frequency_count}"
            )


@dataclass(frozen=True)
class AppItem:
    """A catalog entry with exactly three metadata strings."""

    app_id: str
    title: str
    metadata: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "metadata", tuple(self.metadata))
        if len(self.metadata) != 3:
            raise ValueError(
                f"item {self.app_id!r} needs exactly 3 metadata entries, "
                f"got {len(self.metadata)}"
            )


@dataclass(frozen=True)
class LabeledExample:
    """One (query, app) training row under a single label source.

    Textual sources carry a gain-mapped relevance from ``GAIN_SET``;
    behavioral relevance is a continuous engagement score in [0, 1].
    """

    query_id: str
    app_id: str
    features: tuple[float, ...]
    relevance: float
    source: LabelSource

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(float(x) for x in self.features))
        object.__setattr__(self, "relevance", float(self.relevance))
        if not all(math.isfinite(x) for x in self.features):
            raise ValueError(
                f"non-finite feature for ({self.query_id}, {self.app_id})"
            )
        if not math.isfinite(self.relevance):
            raise ValueError(
                f"non-finite relevance for ({self.query_id}, {self.app_id})"
            )
        if self.source.is_textual:
            if self.relevance not in GAIN_SET:
                raise ValueError(
                    f"textual relevance must be one of {GAIN_SET}, "
                    f"got {self.relevance} for ({self.query_id}, {self.app_id})"
                )
        elif not 0.0 <= self.relevance <= 1.0:
            raise ValueError(
                f"behavioral relevance must lie in [0, 1], "
                f"got {self.relevance} for ({self.query_id}, {self.app_id})"
            )


@dataclass(frozen=True)
class RankingDataset:
    """Immutable-by-convention container for queries, items and examples.

    ``groups`` indexes ``examples`` by (query_id, source); it is derived at
    construction time and the index tuples partition all example positions.
    """

    feature_dim: int
    queries: dict[str, Query]
    items: dict[str, AppItem]
    examples: tuple[LabeledExample, ...]
    groups: dict[tuple[str, LabelSource], tuple[int, ...]]

    def candidate_pairs(self, query_id: str) -> list[tuple[str, tuple[float, ...]]]:
        """Deduped (app_id, features) candidates of a query, in first-appearance order."""
        seen: dict[str, tuple[float, ...]] = {}
        for source in LabelSource:
            for idx in self.groups.get((query_id, source), ()):
                ex = self.examples[idx]
                if ex.app_id not in seen:
                    seen[ex.app_id] = ex.features
        if not seen:
            raise UnknownQueryError(f"query {query_id!r} has no candidates")
        return list(seen.items())

    def example_query_ids(self) -> list[str]:
        """Sorted ids of queries that have at least one example."""
        return sorted({qid for qid, _ in self.groups})

    def source_sizes(self) -> dict[LabelSource, int]:
        sizes = {source: 0 for source in LabelSource}
        for (_, source), idxs in self.groups.items():
            sizes[source] += len(idxs)
        return sizes


def build_dataset(
    queries: Iterable[Query],
    items: Iterable[AppItem],
    examples: Iterable[LabeledExample],
) -> RankingDataset:
    """Assemble and validate a dataset.

    Enforces referential integrity, per-(query, app, source) uniqueness, a
    single feature dimensionality, and byte-identical feature vectors wherever
    a (query, app) pair recurs across sources.
    """
    query_map: dict[str, Query] = {}
    for q in queries:
        if q.query_id in query_map:
            raise DataError(f"duplicate query_id {q.query_id!r}")
        query_map[q.query_id] = q
    item_map: dict[str, AppItem] = {}
    for it in items:
        if it.app_id in item_map:
            raise DataError(f"duplicate app_id {it.app_id!r}")
        item_map[it.app_id] = it
    example_list = tuple(examples)
    if not query_map or not item_map or not example_list:
        raise DataError("queries, items and examples must all be nonempty")

    feature_dim = len(example_list[0].features)
    groups: dict[tuple[str, LabelSource], list[int]] = {}
    seen_keys: set[tuple[str, str, LabelSource]] = set()
    pair_features: dict[tuple[str, str], tuple[float, ...]] = {}
    for idx, ex in enumerate(example_list):
        if len(ex.features) != feature_dim:
            raise FeatureDimMismatchError(
                f"example ({ex.query_id}, {ex.app_id}) has {len(ex.features)} "
                f"features, expected {feature_dim}"
            )
        if ex.query_id not in query_map:
            raise DanglingReferenceError(f"unknown query_id {ex.query_id!r}")
        if ex.app_id not in item_map:
            raise DanglingReferenceError(f"unknown app_id {ex.app_id!r}")
        key = (ex.query_id, ex.app_id, ex.source)
        if key in seen_keys:
            raise DuplicateExampleError(
                f"duplicate example for ({ex.query_id}, {ex.app_id}, "
                f"{ex.source.value})"
            )
        seen_keys.add(key)
        pair = (ex.query_id, ex.app_id)
        known = pair_features.setdefault(pair, ex.features)
        if known != ex.features:
            raise FeatureVectorConflictError(
                f"pair ({ex.query_id}, {ex.app_id}) appears with two "
                f"different feature vectors"
            )
        groups.setdefault((ex.query_id, ex.source), []).append(idx)

    return RankingDataset(
        feature_dim=feature_dim,
        queries=query_map,
        items=item_map,
        examples=example_list,
        groups={key: tuple(idxs) for key, idxs in groups.items()},
    )


def mix_sources(
    dataset: RankingDataset, behavioral_fraction: float, seed: int
) -> RankingDataset:
    """Rebalance behavioral vs. textual examples by resampling whole groups.

    The over-represented side is downsampled by drawing whole (query, source)
    groups uniformly without replacement until the behavioral share of the
    output is as close to ``behavioral_fraction`` as intact groups allow; the
    other side is kept complete.  Group membership is never split, so the
    achieved fraction can deviate from the request by up to the largest group
    on the sampled side.
    """
    if not 0.0 <= behavioral_fraction <= 1.0:
        raise ValueError(
            f"behavioral_fraction must lie in [0, 1], got {behavioral_fraction}"
        )
    behavioral_keys = sorted(
        (key for key in dataset.groups if not key[1].is_textual),
        key=lambda key: (key[0], key[1].value),
    )
    textual_keys = sorted(
        (key for key in dataset.groups if key[1].is_textual),
        key=lambda key: (key[0], key[1].value),
    )
    n_behavioral = sum(len(dataset.groups[k]) for k in behavioral_keys)
    n_textual = sum(len(dataset.groups[k]) for k in textual_keys)
    fraction = float(behavioral_fraction)
    if fraction > 0.0 and n_behavioral == 0:
        raise EmptySourceError("requested behavioral share but no behavioral examples")
    if fraction < 1.0 and n_textual == 0:
        raise EmptySourceError("requested textual share but no textual examples")

    if fraction == 1.0:
        chosen = set(behavioral_keys)
    elif fraction == 0.0:
        chosen = set(textual_keys)
    else:
        share = n_behavioral / (n_behavioral + n_textual)
        if share > fraction:
            sampled, kept = behavioral_keys, textual_keys
            target = round(n_textual * fraction / (1.0 - fraction))
        elif share < fraction:
            sampled, kept = textual_keys, behavioral_keys
            target = round(n_behavioral * (1.0 - fraction) / fraction)
        else:
            sampled, kept = [], behavioral_keys + textual_keys
            target = 0
        chosen = set(kept)
        chosen.update(_sample_groups(dataset, sampled, target, seed))

    keep_indices = set()
    for key in chosen:
        keep_indices.update(dataset.groups[key])
    mixed = [ex for idx, ex in enumerate(dataset.examples) if idx in keep_indices]
    return build_dataset(dataset.queries.values(), dataset.items.values(), mixed)


def _sample_groups(dataset, keys, target, seed):
    """Greedy seeded draw of whole groups totalling as close to target as possible."""
    if not keys or target <= 0:
        return []
    rng = np.random.default_rng(child_seed(seed, "mix"))
    order = [keys[i] for i in rng.permutation(len(keys))]
    taken: list = []
    total = 0
    for key in order:
        if total >= target:
            break
        taken.append(key)
        total += len(dataset.groups[key])
    if taken:
        last = len(dataset.groups[taken[-1]])
        if abs(total - last - target) < abs(total - target):
            taken.pop()
    return taken
