"""Judge prompt construction, response parsing, and judge-quality metrics.

The prompt follows a fixed evaluator script: role framing, the closed label
set, a rubric describing each level, a strict output guideline, optional
numbered exemplars, and the target pair.  Responses are parsed strictly; any
deviation from the canonical label text is a parse failure, never a guess.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (
    AppItem,
    ParetoRankError,
    Query,
    RelevanceLevel,
)
from .util import child_seed

N_LEVELS = len(RelevanceLevel)

STRICT_GUIDELINE = "Your response should only be the label and nothing else."

DEFAULT_RUBRIC = (
    "label_5 means the app is an excellent, direct match for the search term; "
    "label_4 means a strong match with minor gaps; "
    "label_3 means a partial or substitutable match; "
    "label_2 means the app is only loosely related to the search term; "
    "label_1 means the app is unrelated to the search term."
)

JUDGE_REPORT_SCHEMA = "pareto-rank-judge-report/v1"

_COMPACT = {"separators": (",", ":")}


class PromptSpecError(ParetoRankError):
    """A prompt spec field is outside its documented domain."""


class ExemplarCountMismatchError(ParetoRankError):
    """Exemplar count does not match what the prompt spec demands."""


class InsufficientGoldError(ParetoRankError):
    """The gold pool cannot supply the requested exemplars."""


class UnparsableResponseError(ParetoRankError):
    """A judge response did not normalize to a valid label; carries the raw text."""

    def __init__(self, raw: str, label_style: str):
        super().__init__(f"unparsable {label_style} response: {raw!r}")
        self.raw = raw


class MissingGoldError(ParetoRankError):
    """A verdict refers to a pair absent from the gold map."""


@dataclass(frozen=True)
class PromptSpec:
    """Shape of the judge prompt: shot mode, exemplar count, label style."""

    mode: str = "zero_shot"
    k: int = 0
    label_style: str = "textual"
    rubric_text: str = DEFAULT_RUBRIC
    template_version: str = "v1"

    def __post_init__(self):
        if self.mode not in ("zero_shot", "few_shot"):
            raise PromptSpecError(f"unknown prompt mode {self.mode!r}")
        if self.label_style not in ("textual", "numeric"):
            raise PromptSpecError(f"unknown label style {self.label_style!r}")
        if self.mode == "few_shot" and self.k < 1:
            raise PromptSpecError("few_shot prompts need k >= 1 exemplars")
        if self.mode == "zero_shot" and self.k != 0:
            raise PromptSpecError("zero_shot prompts must have k == 0")


@dataclass(frozen=True)
class JudgeVerdict:
    query_id: str
    app_id: str
    level: RelevanceLevel
    raw_response: str
    backend_id: str
    attempts: int

    def __post_init__(self):
        if self.attempts < 1:
            raise ValueError("attempts must be >= 1")


def emit_label(level: RelevanceLevel, label_style: str) -> str:
    """Canonical response text for a level under a label style."""
    if label_style == "textual":
        return level.canonical_name
    if label_style == "numeric":
        return str(int(level))
    raise PromptSpecError(f"unknown label style {label_style!r}")


def parse_label(raw: str, label_style: str) -> RelevanceLevel:
    """Strictly parse a judge response.

    Normalization is limited to trimming whitespace, stripping at most one
    trailing period, and lowercasing; after that the text must match a
    canonical label exactly.
    """
    text = raw.strip()
    if text.endswith("."):
        text = text[:-1]
    text = text.lower()
    if label_style == "textual":
        try:
            return RelevanceLevel.from_name(text)
        except ValueError:
            raise UnparsableResponseError(raw, label_style) from None
    if label_style == "numeric":
        if len(text) == 1 and text.isdigit() and 1 <= int(text) <= N_LEVELS:
            return RelevanceLevel(int(text))
        raise UnparsableResponseError(raw, label_style)
    raise PromptSpecError(f"unknown label style {label_style!r}")


def build_prompt(
    spec: PromptSpec,
    query: Query,
    item: AppItem,
    exemplars: Sequence[tuple[Query, AppItem, RelevanceLevel]] = (),
) -> str:
    """Render the full judge prompt for one (query, app) pair.

    Deterministic in its inputs; the returned text ends with a single newline
    so prompts can be written to files verbatim.
    """
    if spec.mode == "zero_shot" and exemplars:
        raise ExemplarCountMismatchError(
            f"zero_shot prompt got {len(exemplars)} exemplars"
        )
    if spec.mode == "few_shot" and len(exemplars) != spec.k:
        raise ExemplarCountMismatchError(
            f"few_shot prompt needs {spec.k} exemplars, got {len(exemplars)}"
        )
    labels = ", ".join(
        emit_label(level, spec.label_style) for level in RelevanceLevel
    )
    blocks = [
        "Imagine you are an App Store evaluator. You are given a user search "
        "term and an app returned for this query, with app metadata 1, app "
        "metadata 2, app metadata 3.",
        "The goal is to choose one of the following labels for the app given "
        f"the query: {labels}.",
        f"Description of relevance levels is as follows: {spec.rubric_text}",
        f"Strict guideline: {STRICT_GUIDELINE}",
    ]
    for n, (ex_query, ex_item, ex_level) in enumerate(exemplars, start=1):
        blocks.append(
            f"Example {n}: query: {ex_query.text}; app: {ex_item.title} "
            f"with associated app metadata: {_metadata(ex_item)}; "
            f"label: {emit_label(ex_level, spec.label_style)}."
        )
    blocks.append(
        f"Now generate the label for this: query: {query.text}; "
        f"app: {item.title} with associated app metadata: {_metadata(item)}."
    )
    return "\n\n".join(blocks) + "\n"


def _metadata(item: AppItem) -> str:
    return ", ".join(item.metadata)


def select_exemplars(
    gold: Sequence[tuple[Query, AppItem, RelevanceLevel]],
    k: int,
    seed: int,
    exclude: tuple[str, str] | None = None,
) -> list[tuple[Query, AppItem, RelevanceLevel]]:
    """Pick k exemplars, stratified by label class.

    Rotates through classes 1..5 in order, drawing seeded-uniformly without
    replacement within each class, and never returns the excluded target
    pair.  With k = 5 and every class populated, each class appears once.
    """
    if not gold:
        raise InsufficientGoldError("gold pool is empty")
    pool = [
        g
        for g in gold
        if exclude is None or (g[0].query_id, g[1].app_id) != exclude
    ]
    if k > len(pool):
        raise InsufficientGoldError(
            f"need {k} exemplars but only {len(pool)} gold pairs available"
        )
    by_class: dict[int, list] = {int(level): [] for level in RelevanceLevel}
    for g in pool:
        by_class[int(g[2])].append(g)
    rng = np.random.default_rng(child_seed(seed, "exemplars"))
    shuffled = {}
    for cls in sorted(by_class):
        members = by_class[cls]
        shuffled[cls] = [members[i] for i in rng.permutation(len(members))]
    picked: list = []
    while len(picked) < k:
        progressed = False
        for cls in sorted(shuffled):
            if shuffled[cls] and len(picked) < k:
                picked.append(shuffled[cls].pop(0))
                progressed = True
        if not progressed:
            raise InsufficientGoldError("gold pool exhausted")
    return picked


@dataclass(frozen=True)
class ClassMetrics:
    label: str
    precision: float
    recall: float
    f1: float
    support: int
    predicted: int


@dataclass(frozen=True)
class JudgeReport:
    """Judge quality against gold: confusion, per-class and macro P/R/F1."""

    confusion: tuple[tuple[int, ...], ...]
    per_class: tuple[ClassMetrics, ...]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    coverage: float
    averaging: str = "macro"


def evaluate_judge(
    verdicts: Iterable[JudgeVerdict],
    gold: Mapping[tuple[str, str], RelevanceLevel],
) -> JudgeReport:
    """Score verdicts against gold judgments.

    Per-class precision/recall/F1 use the 0-when-undefined convention; the
    macro averages run over classes present in gold or in the predictions, so
    never-seen classes do not dilute the summary.  Coverage is the fraction
    of gold pairs that received a verdict.
    """
    if not gold:
        raise MissingGoldError("gold map is empty")
    confusion = [[0] * N_LEVELS for _ in range(N_LEVELS)]
    n_verdicts = 0
    for v in verdicts:
        key = (v.query_id, v.app_id)
        if key not in gold:
            raise MissingGoldError(f"no gold judgment for pair {key}")
        confusion[int(gold[key]) - 1][int(v.level) - 1] += 1
        n_verdicts += 1

    per_class = []
    for c in range(N_LEVELS):
        tp = confusion[c][c]
        support = sum(confusion[c])
        predicted = sum(confusion[r][c] for r in range(N_LEVELS))
        precision = tp / predicted if predicted else 0.0
        recall = tp / support if support else 0.0
        f1 = (
            2.0 * precision * recall / (precision + recall)
            if precision + recall
            else 0.0
        )
        per_class.append(
            ClassMetrics(
                label=RelevanceLevel(c + 1).canonical_name,
                precision=precision,
                recall=recall,
                f1=f1,
                support=support,
                predicted=predicted,
            )
        )
    present = [m for m in per_class if m.support or m.predicted]

    def macro(attr: str) -> float:
        if not present:
            return 0.0
        return sum(getattr(m, attr) for m in present) / len(present)

    return JudgeReport(
        confusion=tuple(tuple(row) for row in confusion),
        per_class=tuple(per_class),
        macro_precision=macro("precision"),
        macro_recall=macro("recall"),
        macro_f1=macro("f1"),
        coverage=n_verdicts / len(gold),
    )


def judge_report_to_json(report: JudgeReport) -> str:
    payload = {
        "schema": JUDGE_REPORT_SCHEMA,
        "averaging": report.averaging,
        "confusion": [list(row) for row in report.confusion],
        "per_class": [
            {
                "label": m.label,
                "precision": m.precision,
                "recall": m.recall,
                "f1": m.f1,
                "support": m.support,
                "predicted": m.predicted,
            }
            for m in report.per_class
        ],
        "macro": {
            "precision": report.macro_precision,
            "recall": report.macro_recall,
            "f1": report.macro_f1,
        },
        "coverage": report.coverage,
    }
    return json.dumps(payload, **_COMPACT) + "\n"


def judge_report_from_json(text: str) -> JudgeReport:
    payload = json.loads(text)
    if payload.get("schema") != JUDGE_REPORT_SCHEMA:
        raise ValueError(
            f"expected schema {JUDGE_REPORT_SCHEMA!r}, found {payload.get('schema')!r}"
        )
    return JudgeReport(
        confusion=tuple(tuple(int(x) for x in row) for row in payload["confusion"]),
        per_class=tuple(
            ClassMetrics(
                label=m["label"],
                precision=m["precision"],
                recall=m["recall"],
                f1=m["f1"],
                support=m["support"],
                predicted=m["predicted"],
            )
            for m in payload["per_class"]
        ),
        macro_precision=payload["macro"]["precision"],
        macro_recall=payload["macro"]["recall"],
        macro_f1=payload["macro"]["f1"],
        coverage=payload["coverage"],
        averaging=payload["averaging"],
    )


def write_judge_report(report: JudgeReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(judge_report_to_json(report))


def read_judge_report(path: str) -> JudgeReport:
    with open(path, "r", encoding="utf-8") as fh:
        return judge_report_from_json(fh.read())


def judge_report_table(report: JudgeReport) -> str:
    """Aligned plain-text rendering of a judge report."""
    header = f"{'class':<10}{'precision':>11}{'recall':>9}{'f1':>9}{'support':>9}"
    lines = [header, "-" * len(header)]
    for m in report.per_class:
        lines.append(
            f"{m.label:<10}{m.precision:>11.4f}{m.recall:>9.4f}"
            f"{m.f1:>9.4f}{m.support:>9d}"
        )
    lines.append(
        f"{'macro':<10}{report.macro_precision:>11.4f}"
        f"{report.macro_recall:>9.4f}{report.macro_f1:>9.4f}{'':>9}"
    )
    lines.append(f"coverage {report.coverage:.4f}")
    return "\n".join(lines) + "\n"


def write_verdicts(verdicts: Sequence[JudgeVerdict], path: str) -> None:
    """Persist verdicts as line-delimited JSON, sorted by pair."""
    ordered = sorted(verdicts, key=lambda v: (v.query_id, v.app_id))
    with open(path, "w", encoding="utf-8") as fh:
        for v in ordered:
            fh.write(
                json.dumps(
                    {
                        "query_id": v.query_id,
                        "app_id": v.app_id,
                        "level": int(v.level),
                        "backend_id": v.backend_id,
                        "attempts": v.attempts,
                    },
                    **_COMPACT,
                )
                + "\n"
            )


def read_verdicts(path: str) -> list[JudgeVerdict]:
    verdicts = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            verdicts.append(
                JudgeVerdict(
                    query_id=record["query_id"],
                    app_id=record["app_id"],
                    level=RelevanceLevel(int(record["level"])),
                    raw_response="",
                    backend_id=record["backend_id"],
                    attempts=int(record["attempts"]),
                )
            )
    return verdicts
