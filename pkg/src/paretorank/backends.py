"""Judge backends and the batch labeling loop.

Two backends ship: a confusion-matrix oracle that perturbs latent truth for
fully offline runs, and a thin HTTP chat-completion client.  ``label_pairs``
drives either one with per-pair retry, seeded backoff jitter, an append-only
on-disk cache, and bounded concurrency; results are deterministic for the
oracle backend at any concurrency because each pair's draw is keyed by
(seed, query_id, app_id) rather than by call order.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np
import requests

from .core import AppItem, ParetoRankError, Query, RelevanceLevel
from .judge import (
    JudgeVerdict,
    PromptSpec,
    UnparsableResponseError,
    build_prompt,
    parse_label,
    select_exemplars,
)
from .util import child_seed

logger = logging.getLogger(__name__)

_COMPACT = {"separators": (",", ":")}


class BackendError(ParetoRankError):
    """A transient transport failure; the attempt may be retried."""


class BackendUnavailableError(ParetoRankError):
    """Too many transport failures in one run; the backend is considered down."""


class NotRowStochasticError(ParetoRankError):
    """A confusion matrix row does not sum to 1."""


class JudgeBackend(Protocol):
    backend_id: str

    def complete(self, prompt: str, query_id: str, app_id: str) -> str:
        """Return the raw response text for one prompt."""


def identity_confusion() -> np.ndarray:
    return np.eye(5)


def diagonal_confusion(diagonal: float) -> np.ndarray:
    """Row-stochastic matrix with a fixed diagonal and uniform off-diagonal mass."""
    if not 0.0 <= diagonal <= 1.0:
        raise ValueError(f"diagonal must lie in [0, 1], got {diagonal}")
    off = (1.0 - diagonal) / 4.0
    matrix = np.full((5, 5), off)
    np.fill_diagonal(matrix, diagonal)
    return matrix


def adjacent_confusion(diagonal: float) -> np.ndarray:
    """Row-stochastic matrix whose errors land on adjacent levels only.

    Interior rows split the off-diagonal mass evenly between both
    neighbours; the two edge rows give it all to their single neighbour.
    Mimics human-style grading mistakes, which confuse neighbouring
    relevance levels rather than opposite ends of the scale.
    """
    if not 0.0 <= diagonal <= 1.0:
        raise ValueError(f"diagonal must lie in [0, 1], got {diagonal}")
    off = 1.0 - diagonal
    matrix = np.zeros((5, 5))
    np.fill_diagonal(matrix, diagonal)
    matrix[0, 1] = off
    matrix[4, 3] = off
    for i in range(1, 4):
        matrix[i, i - 1] = off / 2.0
        matrix[i, i + 1] = off / 2.0
    return matrix


def uniform_confusion() -> np.ndarray:
    return np.full((5, 5), 0.2)


class OracleBackend:
    """Simulated judge: emits the true level pushed through a confusion matrix.

    Each pair's emitted class is sampled from the confusion row of its latent
    level with an RNG keyed by (seed, query_id, app_id), so verdicts do not
    depend on labeling order or concurrency.
    """

    def __init__(
        self,
        truth: Mapping[tuple[str, str], RelevanceLevel],
        confusion: np.ndarray,
        seed: int,
        backend_id: str = "oracle",
    ):
        confusion = np.asarray(confusion, dtype=float)
        if confusion.shape != (5, 5):
            raise NotRowStochasticError(
                f"confusion matrix must be 5x5, got {confusion.shape}"
            )
        if (confusion < 0).any():
            raise NotRowStochasticError("confusion matrix has negative entries")
        row_sums = confusion.sum(axis=1)
        if np.abs(row_sums - 1.0).max() > 1e-9:
            raise NotRowStochasticError(
                f"confusion rows must sum to 1, got sums {row_sums.tolist()}"
            )
        self.truth = truth
        self.confusion = confusion
        self.seed = seed
        self.backend_id = backend_id

    def complete(self, prompt: str, query_id: str, app_id: str) -> str:
        try:
            level = self.truth[(query_id, app_id)]
        except KeyError:
            raise BackendError(
                f"oracle has no latent truth for pair ({query_id}, {app_id})"
            ) from None
        rng = np.random.default_rng(
            child_seed(self.seed, "oracle", query_id, app_id)
        )
        # Renormalize the row to absorb float dust so probabilities sum to 1.
        row = self.confusion[int(level) - 1]
        row = row / row.sum()
        emitted = int(rng.choice(5, p=row)) + 1
        return RelevanceLevel(emitted).canonical_name


class HttpBackend:
    """Chat-completion client for a remote judge endpoint.

    Sends the prompt as a single user message at temperature 0; authenticates
    with a bearer token read from a configurable environment variable when
    that variable is set.
    """

    def __init__(
        self,
        url: str,
        model: str,
        token_env: str = "JUDGE_API_TOKEN",
        timeout: float = 30.0,
        backend_id: str | None = None,
    ):
        self.url = url
        self.model = model
        self.token_env = token_env
        self.timeout = timeout
        self.backend_id = backend_id if backend_id is not None else model

    def complete(self, prompt: str, query_id: str, app_id: str) -> str:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
            "max_tokens": 8,
        }
        try:
            response = requests.post(
                self.url, json=body, headers=headers, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise BackendError(f"transport failure: {exc}") from exc
        if response.status_code != 200:
            raise BackendError(f"backend returned status {response.status_code}")
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed backend response: {exc}") from exc


@dataclass(frozen=True)
class RetryPolicy:
    """Retry and failure budget for one labeling run.

    Delays follow base_delay * 2^(attempt-1) with +/-jitter seeded noise.
    Once transport failures across the whole run reach
    ``max_transport_failures`` the backend is declared unavailable.
    """

    max_attempts: int = 3
    base_delay: float = 1.0
    jitter: float = 0.2
    max_transport_failures: int = 30
    seed: int = 0

    def delay(self, query_id: str, app_id: str, attempt: int) -> float:
        rng = np.random.default_rng(
            child_seed(self.seed, "retry", query_id, app_id, attempt)
        )
        wobble = 1.0 + rng.uniform(-self.jitter, self.jitter)
        return self.base_delay * (2.0 ** (attempt - 1)) * wobble


@dataclass(frozen=True)
class LabelFailure:
    query_id: str
    app_id: str
    reason: str


@dataclass
class _CacheStore:
    """Append-only verdict cache keyed by (backend_id, template_version, pair)."""

    path: str | None
    entries: dict = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def load(self) -> None:
        if self.path is None or not os.path.exists(self.path):
            return
        with open(self.path, "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                record = json.loads(line)
                key = (
                    record["backend_id"],
                    record["template_version"],
                    record["query_id"],
                    record["app_id"],
                )
                self.entries[key] = (int(record["level"]), int(record["attempts"]))

    def get(self, key):
        return self.entries.get(key)

    def put(self, key, level: int, attempts: int) -> None:
        with self.lock:
            self.entries[key] = (level, attempts)
            if self.path is None:
                return
            record = {
                "backend_id": key[0],
                "template_version": key[1],
                "query_id": key[2],
                "app_id": key[3],
                "level": level,
                "attempts": attempts,
            }
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, **_COMPACT) + "\n")


def label_pairs(
    backend: JudgeBackend,
    spec: PromptSpec,
    pairs: Sequence[tuple[Query, AppItem]],
    exemplar_pool: Sequence[tuple[Query, AppItem, RelevanceLevel]] = (),
    policy: RetryPolicy | None = None,
    cache_path: str | None = None,
    concurrency: int = 8,
    sleep: Callable[[float], None] = time.sleep,
) -> tuple[list[JudgeVerdict], list[LabelFailure]]:
    """Label every pair through the backend, with retry, cache and concurrency.

    Returns verdicts in input pair order plus the pairs that exhausted their
    retries.  Pairs found in the cache are returned without touching the
    backend; fresh verdicts are appended to the cache as they complete.
    """
    if policy is None:
        policy = RetryPolicy()
    if concurrency < 1:
        raise ValueError(f"concurrency must be >= 1, got {concurrency}")
    cache = _CacheStore(cache_path)
    cache.load()
    transport_failures = [0]
    failure_lock = threading.Lock()

    def handle_one(pair):
        query, item = pair
        key = (backend.backend_id, spec.template_version, query.query_id, item.app_id)
        hit = cache.get(key)
        if hit is not None:
            level, attempts = hit
            return JudgeVerdict(
                query_id=query.query_id,
                app_id=item.app_id,
                level=RelevanceLevel(level),
                raw_response="",
                backend_id=backend.backend_id,
                attempts=attempts,
            )
        exemplars = ()
        if spec.mode == "few_shot":
            exemplars = select_exemplars(
                exemplar_pool,
                spec.k,
                child_seed(policy.seed, "pair", query.query_id, item.app_id),
                exclude=(query.query_id, item.app_id),
            )
        prompt = build_prompt(spec, query, item, exemplars)
        last_error: Exception | None = None
        for attempt in range(1, policy.max_attempts + 1):
            try:
                raw = backend.complete(prompt, query.query_id, item.app_id)
                level = parse_label(raw, spec.label_style)
                verdict = JudgeVerdict(
                    query_id=query.query_id,
                    app_id=item.app_id,
                    level=level,
                    raw_response=raw,
                    backend_id=backend.backend_id,
                    attempts=attempt,
                )
                cache.put(key, int(level), attempt)
                return verdict
            except UnparsableResponseError as exc:
                last_error = exc
            except BackendError as exc:
                last_error = exc
                with failure_lock:
                    transport_failures[0] += 1
                    if transport_failures[0] >= policy.max_transport_failures:
                        raise BackendUnavailableError(
                            f"{transport_failures[0]} transport failures, "
                            f"giving up on backend {backend.backend_id!r}"
                        ) from exc
            if attempt < policy.max_attempts:
                sleep(policy.delay(query.query_id, item.app_id, attempt))
        return LabelFailure(
            query_id=query.query_id,
            app_id=item.app_id,
            reason=str(last_error),
        )

    results: list = [None] * len(pairs)
    if concurrency == 1 or len(pairs) <= 1:
        for i, pair in enumerate(pairs):
            results[i] = handle_one(pair)
    else:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            futures = {pool.submit(handle_one, pair): i for i, pair in enumerate(pairs)}
            for future, i in futures.items():
                results[i] = future.result()

    verdicts = [r for r in results if isinstance(r, JudgeVerdict)]
    failures = [r for r in results if isinstance(r, LabelFailure)]
    if failures:
        logger.warning("labeling left %d pairs unlabeled", len(failures))
    return verdicts, failures
