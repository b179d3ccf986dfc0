"""LambdaRank-style gradient boosted trees over per-(query, source) groups.

Each boosting round computes pairwise lambda gradients independently inside
every (query, label-source) group: a pair (i, j) with gains[i] > gains[j]
contributes lambda = |delta NDCG@truncation from swapping i and j| *
sigmoid(s_j - s_i) positively to example i and negatively to example j, with
hessian weight lambda * (1 - sigmoid).  Pairs never cross group boundaries,
which is what lets behavioral and textual objectives coexist in one model:
each source's gradients are scaled by its weight and summed per example, and
one regression tree per round is fit to the aggregate with exact greedy
variance-reduction splits and second-order leaf values sum(g)/(sum(h) + 1).

Training is deterministic: group iteration, split search and float
accumulation all run in fixed order, so identical inputs produce a
byte-identical serialized model.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .core import (
    LabelSource,
    ParetoRankError,
    RankingDataset,
)
from .dataset_io import dataset_fingerprint

MODEL_SCHEMA = "pareto-rank-model/v1"
LEAF_RIDGE = 1.0

_COMPACT = {"separators": (",", ":")}


class DegenerateDatasetError(ParetoRankError):
    """No participating group has the two examples a gradient pair needs."""


class DimMismatchError(ParetoRankError):
    """A feature vector's length does not match the model's feature_dim."""


class LengthMismatchError(ParetoRankError):
    """scores and gains passed to the gradient kernel differ in length."""


@dataclass(frozen=True)
class TrainConfig:
    """Boosting hyperparameters and per-source loss weights.

    Sources missing from ``source_weights`` default to weight 1.0; a source
    weighted 0 is excluded from training entirely, as if its examples had
    been deleted from the dataset.
    """

    n_trees: int = 60
    learning_rate: float = 0.1
    max_leaves: int = 8
    min_examples_per_leaf: int = 20
    ndcg_truncation: int = 10
    source_weights: Mapping[LabelSource, float] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "source_weights", dict(self.source_weights))

    def validate(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.max_leaves < 2:
            raise ValueError("max_leaves must be >= 2")
        if self.min_examples_per_leaf < 1:
            raise ValueError("min_examples_per_leaf must be >= 1")
        if self.ndcg_truncation < 1:
            raise ValueError("ndcg_truncation must be >= 1")
        weights = self.resolved_weights()
        if any(w < 0 for w in weights.values()):
            raise ValueError("source weights must be >= 0")
        if all(w == 0 for w in weights.values()):
            raise ValueError("at least one source weight must be positive")

    def resolved_weights(self) -> dict[LabelSource, float]:
        return {
            source: float(self.source_weights.get(source, 1.0))
            for source in LabelSource
        }


@dataclass(frozen=True)
class TreeNode:
    """One node of a fitted tree: either a split or a leaf value.

    Routing sends feature < threshold to the left child; thresholds sit at
    midpoints strictly between adjacent distinct training values.
    """

    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: float | None = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


@dataclass(frozen=True)
class BoostedEnsemble:
    trees: tuple[TreeNode, ...]
    learning_rate: float
    feature_dim: int
    config: TrainConfig
    metadata: dict


def lambda_gradients(
    scores: np.ndarray, gains: np.ndarray, truncation: int
) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise lambda gradients and hessian weights for one group.

    ``gradients[i] > 0`` means example i should move up.  A group whose ideal
    DCG at the truncation is zero, or where all gains are equal, contributes
    nothing.  Rank positions come from the current scores with ties broken by
    input position.
    """
    scores = np.asarray(scores, dtype=float)
    gains = np.asarray(gains, dtype=float)
    if scores.shape != gains.shape or scores.ndim != 1:
        raise LengthMismatchError(
            f"scores and gains must be equal-length vectors, got shapes "
            f"{scores.shape} and {gains.shape}"
        )
    n = scores.size
    if n < 2:
        raise ValueError("lambda gradients need at least two examples")
    if truncation < 1:
        raise ValueError("truncation must be >= 1")
    if (gains < 0).any():
        raise ValueError("gains must be nonnegative")

    order = np.argsort(-scores, kind="stable")
    ranks = np.empty(n, dtype=int)
    ranks[order] = np.arange(1, n + 1)
    discount = np.where(ranks <= truncation, 1.0 / np.log2(ranks + 1.0), 0.0)

    ideal = np.sort(gains)[::-1][: min(truncation, n)]
    idcg = float(np.sum(ideal / np.log2(np.arange(2, ideal.size + 2))))
    if idcg == 0.0:
        return np.zeros(n), np.zeros(n)

    score_diff = scores[:, None] - scores[None, :]
    with np.errstate(over="ignore"):
        sig = 1.0 / (1.0 + np.exp(score_diff))
    swap = (
        np.abs(gains[:, None] - gains[None, :])
        * np.abs(discount[:, None] - discount[None, :])
        / idcg
    )
    better = gains[:, None] > gains[None, :]
    lam = np.where(better, swap * sig, 0.0)
    weight = np.where(better, swap * sig * (1.0 - sig), 0.0)
    gradients = lam.sum(axis=1) - lam.sum(axis=0)
    hessians = weight.sum(axis=1) + weight.sum(axis=0)
    return gradients, hessians


def _best_split(X, targets, idx, min_leaf):
    """Exact greedy scan for the split maximizing SSE reduction on targets.

    Returns (feature, threshold, gain) or None.  Ties resolve to the lowest
    feature index, then the lowest threshold, so the choice is deterministic.
    """
    n = idx.size
    if n < 2 * min_leaf:
        return None
    node_targets = targets[idx]
    total = node_targets.sum()
    base = total * total / n
    best = None
    best_gain = 0.0
    left_count = np.arange(1, n)
    right_count = n - left_count
    for f in range(X.shape[1]):
        vals = X[idx, f]
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        st = node_targets[order]
        mids = 0.5 * (sv[:-1] + sv[1:])
        # A midpoint collapsing onto either neighbor (adjacent floats) cannot
        # separate them and is skipped.
        valid = (mids > sv[:-1]) & (mids < sv[1:])
        valid &= (left_count >= min_leaf) & (right_count >= min_leaf)
        if not valid.any():
            continue
        left_sum = np.cumsum(st)[:-1]
        right_sum = total - left_sum
        gain = (
            left_sum * left_sum / left_count
            + right_sum * right_sum / right_count
            - base
        )
        gain = np.where(valid, gain, -np.inf)
        j = int(np.argmax(gain))
        if gain[j] > best_gain:
            best_gain = float(gain[j])
            best = (f, float(mids[j]), best_gain)
    return best


def _fit_tree(X, grad, hess, config: TrainConfig) -> TreeNode:
    """Grow one tree best-first on the gradient targets, Newton leaf values."""
    nodes: list[dict] = []

    def make_node(idx):
        node = {
            "id": len(nodes),
            "idx": idx,
            "split": _best_split(X, grad, idx, config.min_examples_per_leaf),
            "left": None,
            "right": None,
        }
        nodes.append(node)
        return node

    root = make_node(np.arange(X.shape[0]))
    n_leaves = 1
    frontier: list[tuple[float, int]] = []
    if root["split"] is not None:
        heapq.heappush(frontier, (-root["split"][2], root["id"]))
    while frontier and n_leaves < config.max_leaves:
        _, node_id = heapq.heappop(frontier)
        node = nodes[node_id]
        feature, threshold, _ = node["split"]
        mask = X[node["idx"], feature] < threshold
        left = make_node(node["idx"][mask])
        right = make_node(node["idx"][~mask])
        node["left"], node["right"] = left["id"], right["id"]
        n_leaves += 1
        for child in (left, right):
            if child["split"] is not None:
                heapq.heappush(frontier, (-child["split"][2], child["id"]))

    def freeze(node) -> TreeNode:
        if node["left"] is None:
            g_sum = float(grad[node["idx"]].sum())
            h_sum = float(hess[node["idx"]].sum())
            return TreeNode(value=g_sum / (h_sum + LEAF_RIDGE))
        return TreeNode(
            feature=node["split"][0],
            threshold=node["split"][1],
            left=freeze(nodes[node["left"]]),
            right=freeze(nodes[node["right"]]),
        )

    return freeze(root)


def _tree_values(node: TreeNode, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0])
    _fill_values(node, X, np.arange(X.shape[0]), out)
    return out


def _fill_values(node, X, idx, out):
    if node.is_leaf:
        out[idx] = node.value
        return
    mask = X[idx, node.feature] < node.threshold
    _fill_values(node.left, X, idx[mask], out)
    _fill_values(node.right, X, idx[~mask], out)


RoundHook = Callable[[int, dict], None]


def train(
    dataset: RankingDataset,
    config: TrainConfig,
    on_round: RoundHook | None = None,
) -> BoostedEnsemble:
    """Fit a boosted ensemble on every group whose source weight is positive.

    ``on_round`` is observability for tests and debugging: after each round's
    gradient pass it receives (round_index, {group_key: (gradients, hessians)})
    with the weighted per-group arrays.
    """
    config.validate()
    weights = config.resolved_weights()
    rows = [
        i
        for i, ex in enumerate(dataset.examples)
        if weights[ex.source] > 0.0
    ]
    if not rows:
        raise DegenerateDatasetError("no examples from a positively weighted source")
    row_pos = {orig: pos for pos, orig in enumerate(rows)}
    groups = []
    for key in sorted(dataset.groups, key=lambda k: (k[0], k[1].value)):
        if weights[key[1]] <= 0.0:
            continue
        groups.append(
            (key, np.array([row_pos[i] for i in dataset.groups[key]], dtype=int))
        )
    if not any(gidx.size >= 2 for _, gidx in groups):
        raise DegenerateDatasetError(
            "training needs at least one group with two examples"
        )

    X = np.array([dataset.examples[i].features for i in rows], dtype=float)
    gains = np.array([dataset.examples[i].relevance for i in rows], dtype=float)
    scores = np.zeros(len(rows))
    trees = []
    for round_index in range(config.n_trees):
        grad = np.zeros(len(rows))
        hess = np.zeros(len(rows))
        logged: dict = {}
        for key, gidx in groups:
            if gidx.size < 2:
                continue
            g, h = lambda_gradients(
                scores[gidx], gains[gidx], config.ndcg_truncation
            )
            w = weights[key[1]]
            if w != 1.0:
                g = g * w
                h = h * w
            grad[gidx] += g
            hess[gidx] += h
            if on_round is not None:
                logged[key] = (g.copy(), h.copy())
        if on_round is not None:
            on_round(round_index, logged)
        tree = _fit_tree(X, grad, hess, config)
        trees.append(tree)
        scores += config.learning_rate * _tree_values(tree, X)

    return BoostedEnsemble(
        trees=tuple(trees),
        learning_rate=config.learning_rate,
        feature_dim=dataset.feature_dim,
        config=config,
        metadata={
            "seed": config.seed,
            "dataset_fingerprint": dataset_fingerprint(dataset),
        },
    )


def predict(model: BoostedEnsemble, features: Sequence[float]) -> float:
    """Score one feature vector: base 0 plus learning_rate times each leaf."""
    if len(features) != model.feature_dim:
        raise DimMismatchError(
            f"model expects {model.feature_dim} features, got {len(features)}"
        )
    total = 0.0
    for tree in model.trees:
        node = tree
        while not node.is_leaf:
            if features[node.feature] < node.threshold:
                node = node.left
            else:
                node = node.right
        total += model.learning_rate * node.value
    return total


def predict_many(model: BoostedEnsemble, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.feature_dim:
        raise DimMismatchError(
            f"model expects (n, {model.feature_dim}) features, got {X.shape}"
        )
    out = np.zeros(X.shape[0])
    for tree in model.trees:
        out += model.learning_rate * _tree_values(tree, X)
    return out


def rank(model: BoostedEnsemble, query_id: str, dataset: RankingDataset) -> list[str]:
    """Order a query's deduped candidates by descending score, ties by app_id."""
    pairs = dataset.candidate_pairs(query_id)
    if dataset.feature_dim != model.feature_dim:
        raise DimMismatchError(
            f"model feature_dim {model.feature_dim} vs dataset "
            f"{dataset.feature_dim}"
        )
    X = np.array([features for _, features in pairs], dtype=float)
    scored = list(zip((app_id for app_id, _ in pairs), predict_many(model, X)))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return [app_id for app_id, _ in scored]


def _node_to_payload(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"value": node.value}
    return {
        "feature": node.feature,
        "threshold": node.threshold,
        "left": _node_to_payload(node.left),
        "right": _node_to_payload(node.right),
    }


def _node_from_payload(payload: dict) -> TreeNode:
    if "value" in payload:
        return TreeNode(value=float(payload["value"]))
    return TreeNode(
        feature=int(payload["feature"]),
        threshold=float(payload["threshold"]),
        left=_node_from_payload(payload["left"]),
        right=_node_from_payload(payload["right"]),
    )


def model_to_json(model: BoostedEnsemble) -> str:
    config = model.config
    payload = {
        "schema": MODEL_SCHEMA,
        "feature_dim": model.feature_dim,
        "learning_rate": model.learning_rate,
        "config": {
            "n_trees": config.n_trees,
            "learning_rate": config.learning_rate,
            "max_leaves": config.max_leaves,
            "min_examples_per_leaf": config.min_examples_per_leaf,
            "ndcg_truncation": config.ndcg_truncation,
            "source_weights": {
                source.value: weight
                for source, weight in sorted(
                    config.resolved_weights().items(), key=lambda kv: kv[0].value
                )
            },
            "seed": config.seed,
        },
        "metadata": model.metadata,
        "trees": [_node_to_payload(tree) for tree in model.trees],
    }
    return json.dumps(payload, **_COMPACT) + "\n"


def model_from_json(text: str) -> BoostedEnsemble:
    payload = json.loads(text)
    if payload.get("schema") != MODEL_SCHEMA:
        raise ValueError(
            f"expected schema {MODEL_SCHEMA!r}, found {payload.get('schema')!r}"
        )
    config_payload = payload["config"]
    config = TrainConfig(
        n_trees=config_payload["n_trees"],
        learning_rate=config_payload["learning_rate"],
        max_leaves=config_payload["max_leaves"],
        min_examples_per_leaf=config_payload["min_examples_per_leaf"],
        ndcg_truncation=config_payload["ndcg_truncation"],
        source_weights={
            LabelSource.from_value(name): weight
            for name, weight in config_payload["source_weights"].items()
        },
        seed=config_payload["seed"],
    )
    return BoostedEnsemble(
        trees=tuple(_node_from_payload(t) for t in payload["trees"]),
        learning_rate=float(payload["learning_rate"]),
        feature_dim=int(payload["feature_dim"]),
        config=config,
        metadata=payload["metadata"],
    )


def write_model(model: BoostedEnsemble, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(model_to_json(model))


def read_model(path: str) -> BoostedEnsemble:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_json(fh.read())
