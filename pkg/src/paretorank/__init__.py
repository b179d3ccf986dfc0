"""Dual-objective app-search ranking with judge-generated textual relevance labels.

The package covers the full desk-scale loop: a synthetic marketplace simulator,
an LLM-judge labeling harness with an oracle backend for offline runs, a
LambdaRank-style gradient boosted ranker trained per label source, and the
evaluation layer (dual-objective NDCG, mixing-ratio frontier sweeps, frequency
bucket analysis).
"""

__version__ = "0.1.0"
