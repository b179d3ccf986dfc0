"""Line-delimited JSON persistence for datasets and latent-truth sidecars.

First line of a dataset file is a header record naming the schema version and
feature dimensionality; every following line is a query, item or example
record.  Serialization is canonical: stable record order, stable key order,
and shortest round-trip float representation, so writing the same dataset
twice produces identical bytes.
"""

from __future__ import annotations

import json
from typing import Mapping

from .core import (
    AppItem,
    LabeledExample,
    LabelSource,
    ParetoRankError,
    Query,
    RankingDataset,
    RelevanceLevel,
    build_dataset,
)
from .util import sha256_hex

DATASET_SCHEMA = "pareto-rank/v1"

_COMPACT = {"separators": (",", ":")}


class DatasetParseError(ParetoRankError):
    """A dataset or truth file line failed to parse; carries the line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class SchemaVersionError(ParetoRankError):
    """The file declares a schema this code does not read."""


def dumps_dataset(dataset: RankingDataset) -> str:
    lines = [
        json.dumps(
            {"schema": DATASET_SCHEMA, "feature_dim": dataset.feature_dim},
            **_COMPACT,
        )
    ]
    for q in dataset.queries.values():
        lines.append(
            json.dumps(
                {
                    "kind": "query",
                    "query_id": q.query_id,
                    "text": q.text,
                    "frequency_count": q.frequency_count,
                },
                **_COMPACT,
            )
        )
    for it in dataset.items.values():
        lines.append(
            json.dumps(
                {
                    "kind": "item",
                    "app_id": it.app_id,
                    "title": it.title,
                    "metadata": list(it.metadata),
                },
                **_COMPACT,
            )
        )
    for ex in dataset.examples:
        lines.append(
            json.dumps(
                {
                    "kind": "example",
                    "query_id": ex.query_id,
                    "app_id": ex.app_id,
                    "features": list(ex.features),
                    "relevance": ex.relevance,
                    "source": ex.source.value,
                },
                **_COMPACT,
            )
        )
    return "\n".join(lines) + "\n"


def write_dataset(dataset: RankingDataset, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_dataset(dataset))


def loads_dataset(text: str) -> RankingDataset:
    lines = text.splitlines()
    if not lines:
        raise DatasetParseError(1, "empty file, missing header record")
    header = _parse_json_line(lines[0], 1)
    schema = header.get("schema")
    if schema != DATASET_SCHEMA:
        raise SchemaVersionError(
            f"expected schema {DATASET_SCHEMA!r}, found {schema!r}"
        )
    queries: list[Query] = []
    items: list[AppItem] = []
    examples: list[LabeledExample] = []
    for offset, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        record = _parse_json_line(line, offset)
        kind = record.get("kind")
        try:
            if kind == "query":
                queries.append(
                    Query(
                        query_id=record["query_id"],
                        text=record["text"],
                        frequency_count=int(record["frequency_count"]),
                    )
                )
            elif kind == "item":
                items.append(
                    AppItem(
                        app_id=record["app_id"],
                        title=record["title"],
                        metadata=tuple(record["metadata"]),
                    )
                )
            elif kind == "example":
                examples.append(
                    LabeledExample(
                        query_id=record["query_id"],
                        app_id=record["app_id"],
                        features=tuple(record["features"]),
                        relevance=record["relevance"],
                        source=LabelSource.from_value(record["source"]),
                    )
                )
            else:
                raise DatasetParseError(offset, f"unknown record kind {kind!r}")
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetParseError(offset, f"bad {kind or 'record'}: {exc}") from exc
    dataset = build_dataset(queries, items, examples)
    if dataset.feature_dim != header.get("feature_dim"):
        raise SchemaVersionError(
            f"header feature_dim {header.get('feature_dim')!r} does not match "
            f"examples ({dataset.feature_dim})"
        )
    return dataset


def read_dataset(path: str) -> RankingDataset:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_dataset(fh.read())


def dataset_fingerprint(dataset: RankingDataset) -> str:
    """Content hash of the canonical serialization."""
    return sha256_hex(dumps_dataset(dataset).encode("utf-8"))


def _parse_json_line(line: str, line_no: int) -> dict:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DatasetParseError(line_no, f"invalid JSON: {exc.msg}") from exc
    if not isinstance(record, dict):
        raise DatasetParseError(line_no, "record is not a JSON object")
    return record


def write_truth(truth: Mapping[tuple[str, str], RelevanceLevel], path: str) -> None:
    """Write latent (query, app) -> level judgments, one record per line, sorted."""
    with open(path, "w", encoding="utf-8") as fh:
        for (query_id, app_id) in sorted(truth):
            fh.write(
                json.dumps(
                    {
                        "query_id": query_id,
                        "app_id": app_id,
                        "true_level": int(truth[(query_id, app_id)]),
                    },
                    **_COMPACT,
                )
                + "\n"
            )


def read_truth(path: str) -> dict[tuple[str, str], RelevanceLevel]:
    truth: dict[tuple[str, str], RelevanceLevel] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            record = _parse_json_line(line, line_no)
            try:
                key = (record["query_id"], record["app_id"])
                truth[key] = RelevanceLevel(int(record["true_level"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise DatasetParseError(line_no, f"bad truth record: {exc}") from exc
    return truth
