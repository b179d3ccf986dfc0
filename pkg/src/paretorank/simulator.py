"""Synthetic app-search marketplace with latent relevance and engagement logs.

Queries and apps get latent topic vectors; binned cosine similarity defines
the true relevance level of each candidate pair.  Query traffic follows a
Zipf law, sessions expose a handful of candidates each, and clicks/downloads
are drawn from a logistic engagement model, so head queries accumulate dense
behavioral signal while tail queries stay sparse and noisy.  Each pair's
impressions are split into a history window that feeds the counter features
and a later outcome window that mints the behavioral label, so the feature
snapshot never contains the impressions it is asked to predict.  A small
seeded subset of pairs receives human textual judgments equal to the latent
level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    ConfigError,
    InvalidCountsError,
    LabeledExample,
    LabelSource,
    Query,
    AppItem,
    RankingDataset,
    RelevanceLevel,
    build_dataset,
    gain_of,
)
from .util import child_seed

# Latent topic dimensionality and the similarity cut points that bin a pair's
# cosine similarity into levels 1..5.  The cuts are deliberately high so that
# top labels are rare and the label histogram is adjacent-heavy.
TOPIC_DIM = 8
LEVEL_CUTS = (0.30, 0.48, 0.68, 0.88)


@dataclass(frozen=True)
class ClickModel:
    """Engagement model parameters.

    Click and download probabilities are logistic in the latent level plus a
    popularity term: every item carries an intrinsic clickiness drawn once at
    generation time, so engagement is a noisy, biased proxy of relevance
    rather than relevance itself, and the two ranking objectives genuinely
    disagree.  Exposure within a session is drawn from a softmax over noisy
    level-plus-popularity affinities, mimicking an imperfect production
    ranker.
    """

    click_slope: float = 1.1
    click_center: float = 3.2
    download_slope: float = 1.0
    download_center: float = 3.8
    clickiness_weight: float = 0.9
    pair_noise_sd: float = 0.35
    impressions_per_session: int = 5
    exposure_affinity: float = 0.9
    exposure_clickiness: float = 0.5
    exposure_noise_sd: float = 1.0
    click_weight: float = 0.3
    download_weight: float = 1.0


@dataclass(frozen=True)
class SimConfig:
    n_queries: int = 2000
    n_items: int = 5000
    candidates_per_query: int = 20
    feature_dim: int = 8
    zipf_exponent: float = 1.1
    sessions_total: int = 30000
    human_label_fraction: float = 0.02
    eval_fraction: float = 0.2
    # A behavioral label is only minted once a pair has this many
    # impressions; rarer pairs stay candidates without a label, the way a
    # production counter pipeline discards under-observed cells.
    min_impressions: int = 4
    noise: ClickModel = field(default_factory=ClickModel)
    seed: int = 0

    def validate(self) -> None:
        if self.n_queries < 1 or self.n_items < 1:
            raise ConfigError("n_queries and n_items must be positive")
        if not 1 <= self.candidates_per_query <= self.n_items:
            raise ConfigError(
                "candidates_per_query must lie in [1, n_items], got "
                f"{self.candidates_per_query}"
            )
        if self.feature_dim < 1:
            raise ConfigError("feature_dim must be positive")
        if self.zipf_exponent <= 0:
            raise ConfigError(
                f"zipf_exponent must be > 0, got {self.zipf_exponent}"
            )
        if self.sessions_total < 0:
            raise ConfigError("sessions_total must be >= 0")
        if self.min_impressions < 1:
            raise ConfigError(
                f"min_impressions must be >= 1, got {self.min_impressions}"
            )
        if not 0.0 <= self.human_label_fraction <= 1.0:
            raise ConfigError("human_label_fraction must lie in [0, 1]")
        if not 0.0 < self.eval_fraction < 1.0:
            raise ConfigError("eval_fraction must lie in (0, 1)")
        if self.noise.impressions_per_session < 1:
            raise ConfigError("impressions_per_session must be positive")
        if self.noise.click_weight < 0 or self.noise.download_weight <= 0:
            raise ConfigError("engagement weights must be positive")


def behavioral_score(
    impressions: int,
    clicks: int,
    downloads: int,
    *,
    click_weight: float = 0.3,
    download_weight: float = 1.0,
) -> float:
    """Weighted engagement rate in [0, 1].

    Downloads count fully, clicks at ``click_weight``, normalized so that
    clicking and downloading on every impression scores exactly 1.
    """
    if impressions < 1 or not 0 <= downloads <= clicks <= impressions:
        raise InvalidCountsError(
            f"need 0 <= downloads <= clicks <= impressions with impressions >= 1, "
            f"got impressions={impressions} clicks={clicks} downloads={downloads}"
        )
    numer = download_weight * downloads + click_weight * clicks
    denom = (download_weight + click_weight) * impressions
    return numer / denom


def level_from_similarity(similarity: float) -> RelevanceLevel:
    """Bin a cosine similarity into an ordinal level via fixed cut points."""
    level = 1
    for cut in LEVEL_CUTS:
        if similarity > cut:
            level += 1
    return RelevanceLevel(level)


def simulate(config: SimConfig) -> tuple[RankingDataset, dict]:
    """Generate a dataset and its latent truth map.

    Returns ``(dataset, truth)`` where truth maps every candidate
    (query_id, app_id) pair to its latent :class:`RelevanceLevel`.
    """
    config.validate()
    nq, ni, cand = config.n_queries, config.n_items, config.candidates_per_query
    noise = config.noise

    topic_rng = np.random.default_rng(child_seed(config.seed, "topics"))
    q_topics = _unit_rows(topic_rng.normal(size=(nq, TOPIC_DIM)))
    i_topics = _unit_rows(topic_rng.normal(size=(ni, TOPIC_DIM)))

    session_rng = np.random.default_rng(child_seed(config.seed, "sessions"))
    zipf_p = np.arange(1, nq + 1, dtype=float) ** (-config.zipf_exponent)
    zipf_p /= zipf_p.sum()
    freq = session_rng.multinomial(config.sessions_total, zipf_p)

    queries = [
        Query(query_id=f"q{qi:05d}", text=f"search term {qi}", frequency_count=int(freq[qi]))
        for qi in range(nq)
    ]
    items = [
        AppItem(
            app_id=f"app{ai:05d}",
            title=f"App {ai}",
            metadata=(
                f"category {ai % 23}",
                f"developer studio {ai % 101}",
                f"short description of app {ai}",
            ),
        )
        for ai in range(ni)
    ]

    retrieval_rng = np.random.default_rng(child_seed(config.seed, "retrieval"))
    feature_rng = np.random.default_rng(child_seed(config.seed, "features"))
    engage_rng = np.random.default_rng(child_seed(config.seed, "engagement"))
    human_rng = np.random.default_rng(child_seed(config.seed, "human"))
    item_rng = np.random.default_rng(child_seed(config.seed, "clickiness"))
    clickiness = item_rng.normal(0.0, 1.0, ni)

    examples: list[LabeledExample] = []
    truth: dict[tuple[str, str], RelevanceLevel] = {}
    n_retrieved = (cand + 2) // 3

    for qi in range(nq):
        sims = i_topics @ q_topics[qi]
        noisy = sims + retrieval_rng.normal(0.0, 0.25, ni)
        ranked = np.argsort(-noisy, kind="stable")
        retrieved = ranked[:n_retrieved]
        rest = ranked[n_retrieved:]
        filler = rest[retrieval_rng.permutation(len(rest))[: cand - n_retrieved]]
        cand_idx = np.concatenate([retrieved, np.sort(filler)])

        cand_sims = sims[cand_idx]
        levels = np.array(
            [int(level_from_similarity(s)) for s in cand_sims], dtype=int
        )
        cand_click = clickiness[cand_idx]

        f_q = int(freq[qi])
        impressions = np.zeros(cand, dtype=int)
        hist_impr = np.zeros(cand, dtype=int)
        out_impr = np.zeros(cand, dtype=int)
        hist_clicks = np.zeros(cand, dtype=int)
        hist_downloads = np.zeros(cand, dtype=int)
        out_clicks = np.zeros(cand, dtype=int)
        out_downloads = np.zeros(cand, dtype=int)
        # Per-pair noise exists for every pair, traffic or not, so the noise
        # draw happens before the zero-session early-out.
        exposure_logit = (
            noise.exposure_affinity * levels
            + noise.exposure_clickiness * cand_click
            + engage_rng.normal(0.0, noise.exposure_noise_sd, cand)
        )
        eps_click = engage_rng.normal(0.0, noise.pair_noise_sd, cand)
        eps_down = engage_rng.normal(0.0, noise.pair_noise_sd, cand)
        if f_q > 0:
            exposure_p = _softmax(exposure_logit)
            shown = min(noise.impressions_per_session, cand) * f_q
            impressions = engage_rng.multinomial(shown, exposure_p)
            impressions = np.minimum(impressions, f_q)
            p_click = _sigmoid(
                noise.click_slope * (levels - noise.click_center)
                + noise.clickiness_weight * cand_click
                + eps_click
            )
            p_down = _sigmoid(
                noise.download_slope * (levels - noise.download_center)
                + noise.clickiness_weight * cand_click
                + eps_down
            )
            # Point-in-time split: the first half of each pair's traffic is
            # the feature history, the remainder is the outcome window the
            # label is minted from.  The engagement draws are independent
            # between windows; only the persistent per-pair effects carry
            # over, the way a real counter snapshot predicts future traffic.
            hist_impr = impressions // 2
            out_impr = impressions - hist_impr
            hist_clicks = engage_rng.binomial(hist_impr, p_click)
            hist_downloads = engage_rng.binomial(hist_clicks, p_down)
            out_clicks = engage_rng.binomial(out_impr, p_click)
            out_downloads = engage_rng.binomial(out_clicks, p_down)

        hist_rate = np.zeros(cand)
        label_rate = np.zeros(cand)
        for ci in range(cand):
            if hist_impr[ci] >= 1:
                hist_rate[ci] = behavioral_score(
                    int(hist_impr[ci]),
                    int(hist_clicks[ci]),
                    int(hist_downloads[ci]),
                    click_weight=noise.click_weight,
                    download_weight=noise.download_weight,
                )
            if out_impr[ci] >= 1:
                label_rate[ci] = behavioral_score(
                    int(out_impr[ci]),
                    int(out_clicks[ci]),
                    int(out_downloads[ci]),
                    click_weight=noise.click_weight,
                    download_weight=noise.download_weight,
                )

        # Serving-style feature vector: two relevance signals, one popularity
        # signal, and two engagement-history counters.  The rate counter is
        # shrunk toward zero at low impression counts, the way production
        # CTR features are smoothed, so a lucky single-impression download
        # cannot be read off the features.  Counters are only informative
        # where the query saw traffic, which is what starves tail queries
        # under behavioral-only supervision.
        feats = feature_rng.normal(size=(cand, config.feature_dim))
        shrunk = hist_rate * hist_impr / (hist_impr + 5.0)
        signals = (
            (levels.astype(float), 0.8),
            (5.0 * cand_sims, 0.5),
            (cand_click, 0.3),
            (shrunk, 0.2),
            (np.log1p(hist_impr.astype(float)), 0.2),
        )
        for col, (base, sd) in enumerate(signals):
            if col >= config.feature_dim:
                break
            feats[:, col] = base + sd * feats[:, col]

        human_mask = human_rng.random(cand) < config.human_label_fraction

        query_id = queries[qi].query_id
        for ci in range(cand):
            app_id = items[int(cand_idx[ci])].app_id
            level = RelevanceLevel(int(levels[ci]))
            truth[(query_id, app_id)] = level
            features = tuple(float(x) for x in feats[ci])
            if impressions[ci] >= config.min_impressions:
                examples.append(
                    LabeledExample(
                        query_id=query_id,
                        app_id=app_id,
                        features=features,
                        relevance=float(label_rate[ci]),
                        source=LabelSource.BEHAVIORAL,
                    )
                )
            if human_mask[ci]:
                examples.append(
                    LabeledExample(
                        query_id=query_id,
                        app_id=app_id,
                        features=features,
                        relevance=gain_of(level),
                        source=LabelSource.HUMAN_TEXTUAL,
                    )
                )

    dataset = build_dataset(queries, items, examples)
    return dataset, truth


def split_by_query(
    dataset: RankingDataset, eval_fraction: float, seed: int
) -> tuple[RankingDataset, RankingDataset]:
    """Partition a dataset into disjoint train/eval sides by whole query."""
    if not 0.0 < eval_fraction < 1.0:
        raise ConfigError(f"eval_fraction must lie in (0, 1), got {eval_fraction}")
    qids = sorted(dataset.queries)
    rng = np.random.default_rng(child_seed(seed, "split"))
    perm = rng.permutation(len(qids))
    n_eval = max(1, round(len(qids) * eval_fraction))
    if n_eval >= len(qids):
        n_eval = len(qids) - 1
    eval_ids = {qids[i] for i in perm[:n_eval]}
    return (
        _restrict(dataset, lambda qid: qid not in eval_ids),
        _restrict(dataset, lambda qid: qid in eval_ids),
    )


def _restrict(dataset: RankingDataset, keep) -> RankingDataset:
    examples = [ex for ex in dataset.examples if keep(ex.query_id)]
    used_items = {ex.app_id for ex in examples}
    return build_dataset(
        (q for q in dataset.queries.values() if keep(q.query_id)),
        (it for it in dataset.items.values() if it.app_id in used_items),
        examples,
    )


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    return matrix / np.linalg.norm(matrix, axis=1, keepdims=True)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = np.exp(logits - logits.max())
    return shifted / shifted.sum()


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))
