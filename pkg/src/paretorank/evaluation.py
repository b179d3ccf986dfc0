"""Dual-objective evaluation: NDCG, frontier sweeps, frequency buckets.

A model is scored separately against the textual objective (gain-mapped
judgments) and the behavioral objective (engagement scores); a query counts
toward an objective only when the eval set actually holds a label of that
kind for it, so a missing objective is reported as absent rather than zero.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .core import (
    LabeledExample,
    LabelSource,
    ParetoRankError,
    Query,
    RankingDataset,
    RelevanceLevel,
    build_dataset,
    gain_of,
    mix_sources,
)
from .dataset_io import dataset_fingerprint
from .ranker import (
    BoostedEnsemble,
    DimMismatchError,
    TrainConfig,
    model_to_json,
    predict_many,
    train,
)
from .util import child_seed, sha256_hex

REPORT_SCHEMA = "pareto-rank-report/v1"
NDCG_CUTS = (1, 3, 7)
FRONTIER_HEADER = "behavioral_fraction,seed,textual_ndcg3,behavioral_ndcg3,nondominated"
BUCKET_HEADER = "bucket,count,ndcg3_a,ndcg3_b,abs_diff"

_COMPACT = {"separators": (",", ":")}


class NegativeGainError(ParetoRankError):
    """A gain passed to NDCG is negative."""


class EmptyEvalSetError(ParetoRankError):
    """No query in the eval set contributes to any objective."""


class QuerySetMismatchError(ParetoRankError):
    """Two reports being compared were not evaluated on the same query set."""


def ndcg_at_k(ranked_gains: Sequence[float], k: int) -> float:
    """NDCG at cutoff k; 1.0 by convention when the ideal DCG is zero."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    gains = np.asarray(ranked_gains, dtype=float)
    if gains.size == 0:
        raise ValueError("ranked_gains must be nonempty")
    if (gains < 0).any():
        raise NegativeGainError("gains must be nonnegative")
    cut = min(k, gains.size)
    discounts = 1.0 / np.log2(np.arange(2, cut + 2))
    dcg = float(np.sum(gains[:cut] * discounts))
    ideal = np.sort(gains)[::-1]
    idcg = float(np.sum(ideal[:cut] * discounts))
    if idcg == 0.0:
        return 1.0
    return dcg / idcg


@dataclass(frozen=True)
class QueryScore:
    query_id: str
    ndcg1: float
    ndcg3: float
    ndcg7: float


@dataclass(frozen=True)
class ObjectiveSummary:
    ndcg1: float
    ndcg3: float
    ndcg7: float
    n_queries: int
    per_query: tuple[QueryScore, ...]


@dataclass(frozen=True)
class EvalReport:
    """Per-objective NDCG summary for one model on one eval set."""

    textual: ObjectiveSummary | None
    behavioral: ObjectiveSummary | None
    model_fingerprint: str
    dataset_fingerprint: str


def evaluate(model: BoostedEnsemble, eval_dataset: RankingDataset) -> EvalReport:
    """Rank every eval query once and score both objectives.

    Candidates without a label under an objective contribute gain 0 to that
    objective's list; human judgments win over judge-generated ones when a
    pair somehow carries both.  Query means are unweighted and summed in
    sorted query order.
    """
    if model.feature_dim != eval_dataset.feature_dim:
        raise DimMismatchError(
            f"model feature_dim {model.feature_dim} vs eval set "
            f"{eval_dataset.feature_dim}"
        )
    textual_scores: list[QueryScore] = []
    behavioral_scores: list[QueryScore] = []
    for query_id in eval_dataset.example_query_ids():
        pairs = eval_dataset.candidate_pairs(query_id)
        X = np.array([features for _, features in pairs], dtype=float)
        scored = list(
            zip((app_id for app_id, _ in pairs), predict_many(model, X))
        )
        scored.sort(key=lambda pair: (-pair[1], pair[0]))
        ranked_ids = [app_id for app_id, _ in scored]

        textual_gain: dict[str, float] = {}
        behavioral_gain: dict[str, float] = {}
        for source in LabelSource:
            for idx in eval_dataset.groups.get((query_id, source), ()):
                ex = eval_dataset.examples[idx]
                if source is LabelSource.BEHAVIORAL:
                    behavioral_gain[ex.app_id] = ex.relevance
                elif source is LabelSource.HUMAN_TEXTUAL:
                    textual_gain[ex.app_id] = ex.relevance
                else:
                    textual_gain.setdefault(ex.app_id, ex.relevance)
        if textual_gain:
            gains = [textual_gain.get(app_id, 0.0) for app_id in ranked_ids]
            textual_scores.append(_query_score(query_id, gains))
        if behavioral_gain:
            gains = [behavioral_gain.get(app_id, 0.0) for app_id in ranked_ids]
            behavioral_scores.append(_query_score(query_id, gains))

    if not textual_scores and not behavioral_scores:
        raise EmptyEvalSetError("no eval query contributes to any objective")
    return EvalReport(
        textual=_summarize(textual_scores),
        behavioral=_summarize(behavioral_scores),
        model_fingerprint=sha256_hex(model_to_json(model).encode("utf-8")),
        dataset_fingerprint=dataset_fingerprint(eval_dataset),
    )


def _query_score(query_id: str, gains: Sequence[float]) -> QueryScore:
    return QueryScore(
        query_id=query_id,
        ndcg1=ndcg_at_k(gains, 1),
        ndcg3=ndcg_at_k(gains, 3),
        ndcg7=ndcg_at_k(gains, 7),
    )


def _summarize(scores: list[QueryScore]) -> ObjectiveSummary | None:
    if not scores:
        return None
    n = len(scores)
    return ObjectiveSummary(
        ndcg1=sum(s.ndcg1 for s in scores) / n,
        ndcg3=sum(s.ndcg3 for s in scores) / n,
        ndcg7=sum(s.ndcg7 for s in scores) / n,
        n_queries=n,
        per_query=tuple(scores),
    )


def _summary_payload(summary: ObjectiveSummary | None):
    if summary is None:
        return None
    return {
        "ndcg1": summary.ndcg1,
        "ndcg3": summary.ndcg3,
        "ndcg7": summary.ndcg7,
        "n_queries": summary.n_queries,
        "per_query": [
            {
                "query_id": s.query_id,
                "ndcg1": s.ndcg1,
                "ndcg3": s.ndcg3,
                "ndcg7": s.ndcg7,
            }
            for s in summary.per_query
        ],
    }


def _summary_from_payload(payload) -> ObjectiveSummary | None:
    if payload is None:
        return None
    return ObjectiveSummary(
        ndcg1=payload["ndcg1"],
        ndcg3=payload["ndcg3"],
        ndcg7=payload["ndcg7"],
        n_queries=payload["n_queries"],
        per_query=tuple(
            QueryScore(
                query_id=s["query_id"],
                ndcg1=s["ndcg1"],
                ndcg3=s["ndcg3"],
                ndcg7=s["ndcg7"],
            )
            for s in payload["per_query"]
        ),
    )


def report_to_json(report: EvalReport) -> str:
    payload = {
        "schema": REPORT_SCHEMA,
        "model_fingerprint": report.model_fingerprint,
        "dataset_fingerprint": report.dataset_fingerprint,
        "objectives": {
            "textual": _summary_payload(report.textual),
            "behavioral": _summary_payload(report.behavioral),
        },
    }
    return json.dumps(payload, **_COMPACT) + "\n"


def report_from_json(text: str) -> EvalReport:
    payload = json.loads(text)
    if payload.get("schema") != REPORT_SCHEMA:
        raise ValueError(
            f"expected schema {REPORT_SCHEMA!r}, found {payload.get('schema')!r}"
        )
    return EvalReport(
        textual=_summary_from_payload(payload["objectives"]["textual"]),
        behavioral=_summary_from_payload(payload["objectives"]["behavioral"]),
        model_fingerprint=payload["model_fingerprint"],
        dataset_fingerprint=payload["dataset_fingerprint"],
    )


def write_report(report: EvalReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report_to_json(report))


def read_report(path: str) -> EvalReport:
    with open(path, "r", encoding="utf-8") as fh:
        return report_from_json(fh.read())


def comparison_table(rows: Sequence[tuple[str, EvalReport]]) -> str:
    """Aligned dual-objective table, one row per named model."""
    header = (
        f"{'model':<16}"
        f"{'textual@1':>11}{'textual@3':>11}{'textual@7':>11}"
        f"{'behav@1':>10}{'behav@3':>10}{'behav@7':>10}"
    )
    lines = [header, "-" * len(header)]
    for name, report in rows:
        cells = []
        for summary in (report.textual, report.behavioral):
            for cut in ("ndcg1", "ndcg3", "ndcg7"):
                cells.append(
                    f"{getattr(summary, cut):.4f}" if summary else "-"
                )
        lines.append(
            f"{name:<16}"
            f"{cells[0]:>11}{cells[1]:>11}{cells[2]:>11}"
            f"{cells[3]:>10}{cells[4]:>10}{cells[5]:>10}"
        )
    return "\n".join(lines) + "\n"


class MissingTruthError(ParetoRankError):
    """A dataset pair has no entry in the supplied truth map."""


def with_gold_textual(
    dataset: RankingDataset, truth: Mapping[tuple[str, str], RelevanceLevel]
) -> RankingDataset:
    """Replace a dataset's textual labels with gain-mapped true levels.

    Every (query, app) pair appearing in the dataset gets exactly one human
    textual example at the gain of its true level; whatever sparse textual
    judgments the split happened to carry are dropped, and behavioral
    examples pass through untouched.  This is how a held-out split gets
    scored against the ground truth instead of a 2% sprinkle of judgments.
    """
    behavioral = []
    features_of: dict[tuple[str, str], tuple] = {}
    for ex in dataset.examples:
        if ex.source is LabelSource.BEHAVIORAL:
            behavioral.append(ex)
        features_of.setdefault((ex.query_id, ex.app_id), ex.features)
    gold = []
    for (query_id, app_id), features in features_of.items():
        level = truth.get((query_id, app_id))
        if level is None:
            raise MissingTruthError(
                f"pair ({query_id}, {app_id}) is missing from the truth map"
            )
        gold.append(
            LabeledExample(
                query_id=query_id,
                app_id=app_id,
                features=features,
                relevance=gain_of(level),
                source=LabelSource.HUMAN_TEXTUAL,
            )
        )
    return build_dataset(
        dataset.queries.values(), dataset.items.values(), behavioral + gold
    )


@dataclass(frozen=True)
class FrontierPoint:
    behavioral_fraction: float
    seed: int
    textual_ndcg3: float
    behavioral_ndcg3: float
    nondominated: bool


def nondominated_mask(points: Sequence[tuple[float, float]]) -> list[bool]:
    """Brute-force Pareto filter maximizing both coordinates."""
    mask = []
    for i, (ti, bi) in enumerate(points):
        dominated = any(
            tj >= ti and bj >= bi and (tj > ti or bj > bi)
            for j, (tj, bj) in enumerate(points)
            if j != i
        )
        mask.append(not dominated)
    return mask


def sweep_frontier(
    train_set: RankingDataset,
    eval_set: RankingDataset,
    fractions: Sequence[float],
    config: TrainConfig,
    seeds: Sequence[int],
) -> list[FrontierPoint]:
    """Train and evaluate one model per (mixing fraction, seed) grid cell.

    Points come back sorted by fraction then seed, flagged with membership in
    the non-dominated set over the whole grid.
    """
    if not fractions:
        raise ValueError("fractions must be nonempty")
    if not seeds:
        raise ValueError("seeds must be nonempty")
    if any(not 0.0 <= f <= 1.0 for f in fractions):
        raise ValueError("fractions must lie in [0, 1]")
    cells = []
    for fraction in sorted(set(float(f) for f in fractions)):
        for seed in sorted(set(int(s) for s in seeds)):
            mixed = mix_sources(train_set, fraction, child_seed(seed, "mix"))
            cell_config = replace(
                config, seed=child_seed(seed, "train", repr(fraction))
            )
            model = train(mixed, cell_config)
            report = evaluate(model, eval_set)
            if report.textual is None or report.behavioral is None:
                raise EmptyEvalSetError(
                    "frontier sweep needs an eval set with both objectives"
                )
            cells.append(
                (fraction, seed, report.textual.ndcg3, report.behavioral.ndcg3)
            )
    mask = nondominated_mask([(t, b) for _, _, t, b in cells])
    return [
        FrontierPoint(
            behavioral_fraction=fraction,
            seed=seed,
            textual_ndcg3=t,
            behavioral_ndcg3=b,
            nondominated=flag,
        )
        for (fraction, seed, t, b), flag in zip(cells, mask)
    ]


def frontier_to_csv(points: Sequence[FrontierPoint]) -> str:
    lines = [FRONTIER_HEADER]
    for p in points:
        lines.append(
            f"{p.behavioral_fraction!r},{p.seed},{p.textual_ndcg3!r},"
            f"{p.behavioral_ndcg3!r},{'true' if p.nondominated else 'false'}"
        )
    return "\n".join(lines) + "\n"


def frontier_from_csv(text: str) -> list[FrontierPoint]:
    reader = csv.DictReader(io.StringIO(text))
    points = []
    for row in reader:
        points.append(
            FrontierPoint(
                behavioral_fraction=float(row["behavioral_fraction"]),
                seed=int(row["seed"]),
                textual_ndcg3=float(row["textual_ndcg3"]),
                behavioral_ndcg3=float(row["behavioral_ndcg3"]),
                nondominated=row["nondominated"] == "true",
            )
        )
    return points


def write_frontier(points: Sequence[FrontierPoint], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(frontier_to_csv(points))


@dataclass(frozen=True)
class BucketRow:
    bucket: int
    count: int
    ndcg3_a: float
    ndcg3_b: float
    diff: float


@dataclass(frozen=True)
class BucketReport:
    rows: tuple[BucketRow, ...]


def frequency_bucket(frequency_count: int) -> int:
    """floor(log2(count)) with counts below 1 clamped into bucket 0."""
    return max(frequency_count, 1).bit_length() - 1


def _textual_per_query(report: EvalReport, which: str) -> dict[str, float]:
    if report.textual is None:
        raise QuerySetMismatchError(f"report {which} has no textual objective")
    return {s.query_id: s.ndcg3 for s in report.textual.per_query}


def bucket_analysis(
    report_a: EvalReport,
    report_b: EvalReport,
    queries: Mapping[str, Query],
) -> BucketReport:
    """Group textual NDCG@3 of two models by query-frequency bucket.

    ``diff`` is the absolute-terms difference (b - a) per bucket.  Both
    reports must cover the same textual query set, and every query must be
    present in ``queries``.
    """
    map_a = _textual_per_query(report_a, "a")
    map_b = _textual_per_query(report_b, "b")
    if set(map_a) != set(map_b):
        raise QuerySetMismatchError(
            "reports were evaluated on different textual query sets"
        )
    buckets: dict[int, list[tuple[float, float]]] = {}
    for query_id in sorted(map_a):
        if query_id not in queries:
            raise QuerySetMismatchError(
                f"query {query_id!r} missing from the query map"
            )
        bucket = frequency_bucket(queries[query_id].frequency_count)
        buckets.setdefault(bucket, []).append((map_a[query_id], map_b[query_id]))
    rows = []
    for bucket in sorted(buckets):
        pairs = buckets[bucket]
        mean_a = sum(a for a, _ in pairs) / len(pairs)
        mean_b = sum(b for _, b in pairs) / len(pairs)
        rows.append(
            BucketRow(
                bucket=bucket,
                count=len(pairs),
                ndcg3_a=mean_a,
                ndcg3_b=mean_b,
                diff=mean_b - mean_a,
            )
        )
    return BucketReport(rows=tuple(rows))


def buckets_to_csv(report: BucketReport) -> str:
    lines = [BUCKET_HEADER]
    for row in report.rows:
        lines.append(
            f"{row.bucket},{row.count},{row.ndcg3_a!r},{row.ndcg3_b!r},{row.diff!r}"
        )
    return "\n".join(lines) + "\n"


def write_buckets(report: BucketReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(buckets_to_csv(report))


def quartile_improvements(
    report_a: EvalReport,
    report_b: EvalReport,
    queries: Mapping[str, Query],
) -> tuple[float, float]:
    """Mean textual NDCG@3 improvement (b - a) on the bottom and top
    frequency quartiles of the evaluated queries."""
    map_a = _textual_per_query(report_a, "a")
    map_b = _textual_per_query(report_b, "b")
    if set(map_a) != set(map_b):
        raise QuerySetMismatchError(
            "reports were evaluated on different textual query sets"
        )
    ordered = sorted(
        map_a,
        key=lambda qid: (queries[qid].frequency_count, qid),
    )
    if len(ordered) < 4:
        raise ValueError("need at least 4 evaluated queries for quartiles")
    quart = max(1, len(ordered) // 4)
    bottom = ordered[:quart]
    top = ordered[-quart:]

    def mean_delta(qids):
        return sum(map_b[q] - map_a[q] for q in qids) / len(qids)

    return mean_delta(bottom), mean_delta(top)
