"""Generative contracts of the synthetic search-log world."""

import math

import numpy as np
import pytest

from paretorank.core import ConfigError, LabelSource, gain_of
from paretorank.evaluation import frequency_bucket
from paretorank.simulator import (
    ClickModel,
    SimConfig,
    level_from_similarity,
    simulate,
    split_by_query,
)

from conftest import SMALL_SIM


class TestSimConfigValidation:
    def test_zipf_exponent_must_be_positive(self):
        with pytest.raises(ConfigError):
            SimConfig(zipf_exponent=0.0).validate()

    def test_counts_must_be_positive(self):
        with pytest.raises(ConfigError):
            SimConfig(n_queries=0).validate()
        with pytest.raises(ConfigError):
            SimConfig(candidates_per_query=0).validate()

    def test_label_fraction_bounded(self):
        with pytest.raises(ConfigError):
            SimConfig(human_label_fraction=1.5).validate()

    def test_min_impressions_positive(self):
        with pytest.raises(ConfigError):
            SimConfig(min_impressions=0).validate()

    def test_candidates_cannot_exceed_items(self):
        with pytest.raises(ConfigError):
            SimConfig(n_items=10, candidates_per_query=11).validate()

    def test_default_config_valid(self):
        SimConfig().validate()


class TestSimulatedWorld:
    def test_deterministic(self):
        config = SMALL_SIM
        d1, t1 = simulate(config)
        d2, t2 = simulate(config)
        assert t1 == t2
        assert d1.examples == d2.examples
        assert d1.queries == d2.queries

    def test_seed_changes_world(self):
        base = SMALL_SIM
        other = SimConfig(**{**_as_kwargs(base), "seed": base.seed + 1})
        d1, _ = simulate(base)
        d2, _ = simulate(other)
        assert d1.examples != d2.examples

    def test_truth_covers_every_candidate_pair(self, small_sim):
        dataset, truth = small_sim
        for query_id in dataset.queries:
            for app_id, _ in dataset.candidate_pairs(query_id):
                assert (query_id, app_id) in truth

    def test_frequency_buckets_span_head_and_tail(self, small_sim):
        dataset, _ = small_sim
        buckets = {
            frequency_bucket(q.frequency_count) for q in dataset.queries.values()
        }
        assert len(buckets) >= 4

    def test_zipf_shape(self, small_sim):
        # frequency of rank r should fall roughly like r^-s: top query much
        # bigger than the median one
        dataset, _ = small_sim
        counts = sorted(
            (q.frequency_count for q in dataset.queries.values()), reverse=True
        )
        assert counts[0] >= 10 * counts[len(counts) // 2]

    def test_behavioral_relevance_in_unit_interval(self, small_sim):
        dataset, _ = small_sim
        for ex in dataset.examples:
            if ex.source is LabelSource.BEHAVIORAL:
                assert 0.0 <= ex.relevance <= 1.0

    def test_human_labels_match_truth_exactly(self, small_sim):
        dataset, truth = small_sim
        n = 0
        for ex in dataset.examples:
            if ex.source is LabelSource.HUMAN_TEXTUAL:
                assert ex.relevance == gain_of(truth[(ex.query_id, ex.app_id)])
                n += 1
        assert n > 0

    def test_no_llm_labels_at_birth(self, small_sim):
        dataset, _ = small_sim
        assert dataset.source_sizes()[LabelSource.LLM_TEXTUAL] == 0

    def test_features_identical_where_pair_recurs(self, small_sim):
        dataset, _ = small_sim
        seen = {}
        for ex in dataset.examples:
            key = (ex.query_id, ex.app_id)
            if key in seen:
                assert seen[key] == ex.features
            seen[key] = ex.features

    def test_features_correlate_with_level(self, small_sim):
        dataset, truth = small_sim
        levels, first_feature = [], []
        for ex in dataset.examples:
            levels.append(int(truth[(ex.query_id, ex.app_id)]))
            first_feature.append(ex.features[0])
        r = np.corrcoef(levels, first_feature)[0, 1]
        assert r > 0.5

    def test_full_label_fraction_covers_every_pair(self):
        config = SimConfig(
            **{**_as_kwargs(SMALL_SIM), "human_label_fraction": 1.0}
        )
        dataset, truth = simulate(config)
        human = {
            (ex.query_id, ex.app_id)
            for ex in dataset.examples
            if ex.source is LabelSource.HUMAN_TEXTUAL
        }
        assert human == set(truth)

    def test_tail_behavioral_sparser_than_head(self, small_sim):
        dataset, _ = small_sim
        by_query = {}
        for ex in dataset.examples:
            if ex.source is LabelSource.BEHAVIORAL:
                by_query[ex.query_id] = by_query.get(ex.query_id, 0) + 1
        ranked = sorted(
            dataset.queries.values(), key=lambda q: q.frequency_count
        )
        quarter = len(ranked) // 4
        tail = ranked[:quarter]
        head = ranked[-quarter:]
        tail_mean = np.mean([by_query.get(q.query_id, 0) for q in tail])
        head_mean = np.mean([by_query.get(q.query_id, 0) for q in head])
        assert head_mean >= 3 * max(tail_mean, 0.2)

    def test_min_impressions_gate(self):
        base = _as_kwargs(SMALL_SIM)
        gated = SimConfig(**{**base, "min_impressions": 20})
        open_cfg = SimConfig(**{**base, "min_impressions": 1})
        n_gated = simulate(gated)[0].source_sizes()[LabelSource.BEHAVIORAL]
        n_open = simulate(open_cfg)[0].source_sizes()[LabelSource.BEHAVIORAL]
        assert n_gated < n_open


class TestLevelFromSimilarity:
    def test_monotone(self):
        sims = np.linspace(-1.0, 1.0, 201)
        levels = [int(level_from_similarity(s)) for s in sims]
        assert levels == sorted(levels)
        assert min(levels) == 1 and max(levels) == 5


class TestSplitByQuery:
    def test_disjoint_and_exhaustive(self, small_sim):
        dataset, _ = small_sim
        train, evaluation = split_by_query(dataset, 0.2, seed=5)
        train_q = set(train.example_query_ids())
        eval_q = set(evaluation.example_query_ids())
        assert train_q.isdisjoint(eval_q)
        assert train_q | eval_q == set(dataset.example_query_ids())

    def test_eval_share(self, small_sim):
        dataset, _ = small_sim
        _, evaluation = split_by_query(dataset, 0.25, seed=5)
        total = len(dataset.example_query_ids())
        assert len(evaluation.example_query_ids()) == max(1, round(total * 0.25))

    def test_deterministic(self, small_sim):
        dataset, _ = small_sim
        a = split_by_query(dataset, 0.2, seed=5)
        b = split_by_query(dataset, 0.2, seed=5)
        assert a[0].example_query_ids() == b[0].example_query_ids()

    def test_bad_fraction(self, small_sim):
        dataset, _ = small_sim
        with pytest.raises(ConfigError):
            split_by_query(dataset, 0.0, seed=5)


def _as_kwargs(config: SimConfig) -> dict:
    return {
        "n_queries": config.n_queries,
        "n_items": config.n_items,
        "candidates_per_query": config.candidates_per_query,
        "feature_dim": config.feature_dim,
        "zipf_exponent": config.zipf_exponent,
        "sessions_total": config.sessions_total,
        "human_label_fraction": config.human_label_fraction,
        "eval_fraction": config.eval_fraction,
        "min_impressions": config.min_impressions,
        "noise": config.noise,
        "seed": config.seed,
    }
