"""Shared fixtures: hand-built micro datasets and one small simulated world."""

import pytest

from paretorank.core import (
    AppItem,
    LabeledExample,
    LabelSource,
    Query,
    RelevanceLevel,
    build_dataset,
    gain_of,
)
from paretorank.simulator import ClickModel, SimConfig, simulate


def make_query(qid: str, freq: int = 10) -> Query:
    return Query(query_id=qid, text=f"search {qid}", frequency_count=freq)


def make_item(aid: str) -> AppItem:
    return AppItem(
        app_id=aid,
        title=f"App {aid}",
        metadata=(f"desc {aid}", "tools", "free"),
    )


def make_example(qid, aid, rel, source, features=(0.0, 0.0, 0.0)):
    return LabeledExample(
        query_id=qid, app_id=aid, features=features, relevance=rel, source=source
    )


@pytest.fixture
def tiny_dataset():
    """Two queries, three items, behavioral plus textual labels."""
    queries = [make_query("q1", 100), make_query("q2", 3)]
    items = [make_item(a) for a in ("a1", "a2", "a3")]
    examples = [
        make_example("q1", "a1", 0.9, LabelSource.BEHAVIORAL, (1.0, 0.0, 0.0)),
        make_example("q1", "a2", 0.2, LabelSource.BEHAVIORAL, (0.0, 1.0, 0.0)),
        make_example("q1", "a1", gain_of(RelevanceLevel.LABEL_5),
                     LabelSource.HUMAN_TEXTUAL, (1.0, 0.0, 0.0)),
        make_example("q2", "a2", gain_of(RelevanceLevel.LABEL_1),
                     LabelSource.HUMAN_TEXTUAL, (0.0, 0.5, 1.0)),
        make_example("q2", "a3", gain_of(RelevanceLevel.LABEL_4),
                     LabelSource.LLM_TEXTUAL, (0.5, 0.5, 0.5)),
    ]
    return build_dataset(queries, items, examples)


SMALL_SIM = SimConfig(
    n_queries=150,
    n_items=400,
    candidates_per_query=20,
    sessions_total=8000,
    human_label_fraction=0.1,
    noise=ClickModel(),
    seed=11,
)


@pytest.fixture(scope="session")
def small_sim():
    """One modest simulated world shared by read-only tests."""
    dataset, truth = simulate(SMALL_SIM)
    return dataset, truth
