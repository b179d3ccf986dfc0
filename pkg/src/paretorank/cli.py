"""Command-line pipeline: simulate, label, train, evaluate, sweep, compare.

Each subcommand reads the layered config (defaults < file < --section.key=value
overrides), does one pipeline stage, and writes its outputs plus a run
manifest into --out-dir.  The experiment subcommand chains the whole pipeline
per seed and emits the headline comparison.

Exit codes: 0 success, 2 validation error, 3 failed --check, 4 backend down.
"""

from __future__ import annotations

import argparse
import os
import statistics
import sys

from .backends import (
    BackendError,
    BackendUnavailableError,
    label_pairs,
)
from .config import (
    KEY_DOCS,
    apply_overrides,
    build_backend,
    build_prompt_spec,
    build_retry_policy,
    build_sim_config,
    build_train_config,
    config_to_text,
    default_config,
    load_config,
    parse_fractions,
)
from .core import (
    LabeledExample,
    LabelSource,
    ParetoRankError,
    RankingDataset,
    build_dataset,
    gain_of,
    level_from_gain,
    mix_sources,
)
from .dataset_io import read_dataset, read_truth, write_dataset, write_truth
from .evaluation import (
    bucket_analysis,
    comparison_table,
    evaluate,
    quartile_improvements,
    read_report,
    sweep_frontier,
    with_gold_textual,
    write_buckets,
    write_frontier,
    write_report,
)
from .judge import evaluate_judge, judge_report_to_json, read_verdicts, write_verdicts
from .manifest import new_manifest
from .ranker import read_model, train, write_model
from .simulator import simulate, split_by_query
from .util import child_seed

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CHECK_FAILED = 3
EXIT_BACKEND = 4


def unlabeled_pairs(dataset: RankingDataset):
    """Candidate pairs that carry no textual label of either provenance.

    Human-labeled pairs are excluded outright: gold judgments are never
    re-labeled or overwritten by the machine judge.
    """
    labeled = {
        (ex.query_id, ex.app_id) for ex in dataset.examples if ex.source.is_textual
    }
    pairs = []
    for query_id in dataset.example_query_ids():
        query = dataset.queries[query_id]
        for app_id, _ in dataset.candidate_pairs(query_id):
            if (query_id, app_id) not in labeled:
                pairs.append((query, dataset.items[app_id]))
    return pairs


def exemplar_pool(dataset: RankingDataset):
    """Human-labeled triples available as few-shot exemplars."""
    pool = []
    for ex in dataset.examples:
        if ex.source is LabelSource.HUMAN_TEXTUAL:
            pool.append(
                (
                    dataset.queries[ex.query_id],
                    dataset.items[ex.app_id],
                    level_from_gain(ex.relevance),
                )
            )
    return pool


def augment_with_verdicts(dataset: RankingDataset, verdicts) -> RankingDataset:
    """Fold judge verdicts into the dataset as machine-labeled examples."""
    features = {}
    for ex in dataset.examples:
        features.setdefault((ex.query_id, ex.app_id), ex.features)
    extra = [
        LabeledExample(
            query_id=v.query_id,
            app_id=v.app_id,
            features=features[(v.query_id, v.app_id)],
            relevance=gain_of(v.level),
            source=LabelSource.LLM_TEXTUAL,
        )
        for v in verdicts
    ]
    return build_dataset(
        dataset.queries.values(),
        dataset.items.values(),
        list(dataset.examples) + extra,
    )


def _label_dataset(dataset, truth, config, seed, cache_path, concurrency):
    """Run the judge over every unlabeled pair and return the augmented set."""
    pairs = unlabeled_pairs(dataset)
    spec = build_prompt_spec(config)
    pool = exemplar_pool(dataset) if spec.mode == "few_shot" else ()
    backend = build_backend(config, seed, truth=truth)
    verdicts, failures = label_pairs(
        backend,
        spec,
        pairs,
        exemplar_pool=pool,
        policy=build_retry_policy(config, seed),
        cache_path=cache_path,
        concurrency=concurrency,
    )
    return augment_with_verdicts(dataset, verdicts), verdicts, failures


# per-command output file names, fixed so manifests are comparable across runs
TRAIN_FILE = "train.jsonl"
EVAL_FILE = "eval.jsonl"
TRUTH_FILE = "truth.jsonl"


def cmd_simulate(args, config) -> int:
    sim_config = build_sim_config(config, args.seed)
    dataset, truth = simulate(sim_config)
    train_split, eval_split = split_by_query(
        dataset, sim_config.eval_fraction, child_seed(args.seed, "split")
    )
    manifest = new_manifest("simulate", args.seed, config_to_text(config))
    out = args.out_dir
    write_dataset(train_split, os.path.join(out, TRAIN_FILE))
    write_dataset(eval_split, os.path.join(out, EVAL_FILE))
    write_truth(truth, os.path.join(out, TRUTH_FILE))
    for name in (TRAIN_FILE, EVAL_FILE, TRUTH_FILE):
        manifest.add_output(os.path.join(out, name))
    manifest.note("train_queries", len(train_split.example_query_ids()))
    manifest.note("eval_queries", len(eval_split.example_query_ids()))
    manifest.write(os.path.join(out, "manifest_simulate.json"))
    print(
        f"simulate: {len(train_split.example_query_ids())} train / "
        f"{len(eval_split.example_query_ids())} eval queries -> {out}"
    )
    return EXIT_OK


def cmd_label(args, config) -> int:
    dataset = read_dataset(args.dataset)
    truth = read_truth(args.truth) if args.truth else None
    manifest = new_manifest("label", args.seed, config_to_text(config))
    manifest.add_input(args.dataset)
    if args.truth:
        manifest.add_input(args.truth)
    out = args.out_dir
    cache_path = args.cache or os.path.join(out, "verdict_cache.jsonl")
    augmented, verdicts, failures = _label_dataset(
        dataset, truth, config, args.seed, cache_path, args.concurrency
    )
    verdicts_path = os.path.join(out, "verdicts.jsonl")
    augmented_path = os.path.join(out, "augmented.jsonl")
    write_verdicts(verdicts, verdicts_path)
    write_dataset(augmented, augmented_path)
    manifest.add_output(verdicts_path)
    manifest.add_output(augmented_path)
    manifest.note("verdicts", len(verdicts))
    manifest.note("failures", [f.reason for f in failures][:10])
    manifest.write(os.path.join(out, "manifest_label.json"))
    print(f"label: {len(verdicts)} verdicts, {len(failures)} failures -> {out}")
    return EXIT_OK


def cmd_judge_eval(args, config) -> int:
    verdicts = read_verdicts(args.verdicts)
    truth = read_truth(args.truth)
    judged = {(v.query_id, v.app_id) for v in verdicts}
    gold = {pair: level for pair, level in truth.items() if pair in judged}
    report = evaluate_judge(verdicts, gold)
    manifest = new_manifest("judge-eval", args.seed, config_to_text(config))
    manifest.add_input(args.verdicts)
    manifest.add_input(args.truth)
    out_path = os.path.join(args.out_dir, "judge_report.json")
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(judge_report_to_json(report))
    manifest.add_output(out_path)
    manifest.write(os.path.join(args.out_dir, "manifest_judge_eval.json"))
    print(
        f"judge-eval: accuracy {_accuracy(report):.4f} "
        f"macro_f1 {report.macro_f1:.4f} coverage {report.coverage:.4f}"
    )
    return EXIT_OK


def _accuracy(report) -> float:
    total = sum(sum(row) for row in report.confusion)
    hits = sum(report.confusion[i][i] for i in range(len(report.confusion)))
    return hits / total if total else 0.0


def cmd_mix(args, config) -> int:
    dataset = read_dataset(args.dataset)
    mixed = mix_sources(dataset, args.fraction, child_seed(args.seed, "mix"))
    manifest = new_manifest("mix", args.seed, config_to_text(config))
    manifest.add_input(args.dataset)
    out_path = os.path.join(args.out_dir, "mixed.jsonl")
    write_dataset(mixed, out_path)
    manifest.add_output(out_path)
    manifest.note("behavioral_fraction", args.fraction)
    manifest.write(os.path.join(args.out_dir, "manifest_mix.json"))
    sizes = mixed.source_sizes()
    print(f"mix: kept {sum(sizes.values())} examples -> {out_path}")
    return EXIT_OK


def cmd_train(args, config) -> int:
    dataset = read_dataset(args.dataset)
    model = train(dataset, build_train_config(config, child_seed(args.seed, "train")))
    manifest = new_manifest("train", args.seed, config_to_text(config))
    manifest.add_input(args.dataset)
    out_path = os.path.join(args.out_dir, "model.json")
    write_model(model, out_path)
    manifest.add_output(out_path)
    manifest.write(os.path.join(args.out_dir, "manifest_train.json"))
    print(f"train: {len(model.trees)} trees -> {out_path}")
    return EXIT_OK


def cmd_eval(args, config) -> int:
    model = read_model(args.model)
    dataset = read_dataset(args.dataset)
    if args.truth:
        dataset = with_gold_textual(dataset, read_truth(args.truth))
    report = evaluate(model, dataset)
    manifest = new_manifest("eval", args.seed, config_to_text(config))
    manifest.add_input(args.model)
    manifest.add_input(args.dataset)
    if args.truth:
        manifest.add_input(args.truth)
    out_path = os.path.join(args.out_dir, "eval_report.json")
    write_report(report, out_path)
    manifest.add_output(out_path)
    manifest.write(os.path.join(args.out_dir, "manifest_eval.json"))
    tex = report.textual.ndcg3 if report.textual else float("nan")
    beh = report.behavioral.ndcg3 if report.behavioral else float("nan")
    print(f"eval: textual ndcg@3 {tex:.4f} behavioral ndcg@3 {beh:.4f}")
    return EXIT_OK


def cmd_sweep(args, config) -> int:
    train_set = read_dataset(args.train_dataset)
    eval_set = read_dataset(args.eval_dataset)
    if args.truth:
        eval_set = with_gold_textual(eval_set, read_truth(args.truth))
    fractions = parse_fractions(config["experiment"]["behavioral_fractions"])
    points = sweep_frontier(
        train_set,
        eval_set,
        fractions,
        build_train_config(config, 0),
        seeds=[child_seed(args.seed, "sweep")],
    )
    manifest = new_manifest("sweep", args.seed, config_to_text(config))
    manifest.add_input(args.train_dataset)
    manifest.add_input(args.eval_dataset)
    if args.truth:
        manifest.add_input(args.truth)
    out_path = os.path.join(args.out_dir, "frontier.csv")
    write_frontier(points, out_path)
    manifest.add_output(out_path)
    manifest.write(os.path.join(args.out_dir, "manifest_sweep.json"))
    for p in points:
        flag = "*" if p.nondominated else " "
        print(
            f"sweep: {flag} fraction {p.behavioral_fraction:.1f} "
            f"textual {p.textual_ndcg3:.4f} behavioral {p.behavioral_ndcg3:.4f}"
        )
    return EXIT_OK


def cmd_buckets(args, config) -> int:
    report_a = read_report(args.report_a)
    report_b = read_report(args.report_b)
    dataset = read_dataset(args.dataset)
    report = bucket_analysis(report_a, report_b, dataset.queries)
    manifest = new_manifest("buckets", args.seed, config_to_text(config))
    for path in (args.report_a, args.report_b, args.dataset):
        manifest.add_input(path)
    out_path = os.path.join(args.out_dir, "buckets.csv")
    write_buckets(report, out_path)
    manifest.add_output(out_path)
    manifest.write(os.path.join(args.out_dir, "manifest_buckets.json"))
    for row in report.rows:
        print(
            f"buckets: bucket {row.bucket} n={row.count} diff {row.diff:+.4f}"
        )
    return EXIT_OK


def run_experiment_seed(config, seed: int, out_dir: str, concurrency: int) -> dict:
    """One full pipeline pass: simulate, train prod, label, train augmented.

    Returns the seed's headline numbers; artifacts land under ``out_dir``.
    """
    os.makedirs(out_dir, exist_ok=True)
    sim_config = build_sim_config(config, seed)
    dataset, truth = simulate(sim_config)
    train_split, eval_split = split_by_query(
        dataset, sim_config.eval_fraction, child_seed(seed, "split")
    )

    # Held-out queries are scored against the full latent truth, not the
    # sparse judgment sprinkle they happened to receive; otherwise the
    # textual metric is mostly sampling noise.
    gold_eval = with_gold_textual(eval_split, truth)

    train_config = build_train_config(config, child_seed(seed, "train"))
    prod = train(train_split, train_config)
    report_prod = evaluate(prod, gold_eval)

    augmented, verdicts, failures = _label_dataset(
        train_split, truth, config, seed, None, concurrency
    )
    aug = train(augmented, train_config)
    report_aug = evaluate(aug, gold_eval)

    judged = {(v.query_id, v.app_id) for v in verdicts}
    gold = {pair: level for pair, level in truth.items() if pair in judged}
    judge_report = evaluate_judge(verdicts, gold)

    write_report(report_prod, os.path.join(out_dir, "eval_prod.json"))
    write_report(report_aug, os.path.join(out_dir, "eval_augmented.json"))
    write_model(prod, os.path.join(out_dir, "model_prod.json"))
    write_model(aug, os.path.join(out_dir, "model_augmented.json"))
    with open(os.path.join(out_dir, "judge_report.json"), "w", encoding="utf-8") as fh:
        fh.write(judge_report_to_json(judge_report))
    buckets = bucket_analysis(report_prod, report_aug, gold_eval.queries)
    write_buckets(buckets, os.path.join(out_dir, "buckets.csv"))
    with open(os.path.join(out_dir, "comparison.txt"), "w", encoding="utf-8") as fh:
        fh.write(comparison_table([("prod", report_prod), ("llm-augmented", report_aug)]))
        fh.write("\n")

    bottom, top = quartile_improvements(report_prod, report_aug, gold_eval.queries)
    return {
        "seed": seed,
        "prod_textual_ndcg3": report_prod.textual.ndcg3,
        "aug_textual_ndcg3": report_aug.textual.ndcg3,
        "textual_delta": report_aug.textual.ndcg3 - report_prod.textual.ndcg3,
        "prod_behavioral_ndcg3": report_prod.behavioral.ndcg3,
        "aug_behavioral_ndcg3": report_aug.behavioral.ndcg3,
        "behavioral_delta": report_aug.behavioral.ndcg3
        - report_prod.behavioral.ndcg3,
        "bottom_quartile_delta": bottom,
        "top_quartile_delta": top,
        "judge_accuracy": _accuracy(judge_report),
        "label_failures": len(failures),
        "train_split": train_split,
        "eval_split": gold_eval,
    }


def cmd_experiment(args, config) -> int:
    if args.seeds:
        seeds = [int(s) for s in args.seeds.split(",")]
    else:
        seeds = [args.seed + i for i in range(int(config["experiment"]["n_seeds"]))]

    rows = []
    for seed in seeds:
        seed_dir = os.path.join(args.out_dir, f"seed_{seed}")
        manifest = new_manifest("experiment", seed, config_to_text(config))
        row = run_experiment_seed(config, seed, seed_dir, args.concurrency)
        for name in ("eval_prod.json", "eval_augmented.json", "buckets.csv"):
            manifest.add_output(os.path.join(seed_dir, name))
        manifest.write(os.path.join(seed_dir, "manifest_experiment.json"))
        print(
            f"experiment seed {seed}: textual {row['textual_delta']:+.4f} "
            f"behavioral {row['behavioral_delta']:+.4f} "
            f"tail {row['bottom_quartile_delta']:+.4f} "
            f"head {row['top_quartile_delta']:+.4f}"
        )
        rows.append(row)

    # frontier sweep on the first seed's data, one model per mixing fraction
    first = rows[0]
    fractions = parse_fractions(config["experiment"]["behavioral_fractions"])
    points = sweep_frontier(
        first["train_split"],
        first["eval_split"],
        fractions,
        build_train_config(config, 0),
        seeds=[child_seed(seeds[0], "sweep")],
    )
    write_frontier(points, os.path.join(args.out_dir, "frontier.csv"))

    summary = _aggregate(rows, config)
    _write_aggregate(rows, summary, args.out_dir, config)
    print(
        f"experiment: mean textual {summary['mean_textual_delta']:+.4f} "
        f"({summary['textual_wins']}/{len(rows)} seeds up), "
        f"mean behavioral {summary['mean_behavioral_delta']:+.4f}"
    )
    if args.check:
        for line in summary["check_failures"]:
            print(f"check failed: {line}", file=sys.stderr)
        if summary["check_failures"]:
            return EXIT_CHECK_FAILED
        print("check passed")
    return EXIT_OK


def _aggregate(rows, config) -> dict:
    n = len(rows)
    gain_min = float(config["experiment"]["textual_gain_min"])
    drop_max = float(config["experiment"]["behavioral_drop_max"])
    required_wins = n - n // 5
    mean_tex = statistics.fmean(r["textual_delta"] for r in rows)
    mean_beh = statistics.fmean(r["behavioral_delta"] for r in rows)
    wins = sum(1 for r in rows if r["textual_delta"] > 0)
    failures = []
    if wins < required_wins:
        failures.append(f"textual improved on {wins}/{n} seeds, need {required_wins}")
    if mean_tex < gain_min:
        failures.append(f"mean textual delta {mean_tex:+.4f} below {gain_min:+.4f}")
    if mean_beh < -drop_max:
        failures.append(f"mean behavioral delta {mean_beh:+.4f} below {-drop_max:+.4f}")
    return {
        "mean_textual_delta": mean_tex,
        "mean_behavioral_delta": mean_beh,
        "textual_wins": wins,
        "required_wins": required_wins,
        "check_failures": failures,
    }


def _write_aggregate(rows, summary, out_dir, config) -> None:
    import json

    payload = {
        "seeds": [
            {k: v for k, v in row.items() if not isinstance(v, RankingDataset)}
            for row in rows
        ],
        "summary": {k: v for k, v in summary.items()},
    }
    with open(os.path.join(out_dir, "experiment_report.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _config_epilog(sections: tuple[str, ...]) -> str:
    """Per-command help text listing every config key the command reads."""
    defaults = default_config()
    lines = ["config keys (override with --section.key=value):"]
    for section in sections:
        for key, value in defaults[section].items():
            doc = KEY_DOCS.get(f"{section}.{key}", "")
            note = f"  ({doc})" if doc else ""
            lines.append(f"  {section}.{key} = {value}{note}")
    return "\n".join(lines)


_COMMANDS = {
    "simulate": (cmd_simulate, ("simulator",), "generate synthetic search logs"),
    "label": (cmd_label, ("judge", "backend"), "judge-label unlabeled pairs"),
    "judge-eval": (cmd_judge_eval, (), "score verdicts against gold labels"),
    "mix": (cmd_mix, (), "rebalance behavioral vs textual examples"),
    "train": (cmd_train, ("ranker",), "fit the boosted ranker"),
    "eval": (cmd_eval, (), "score a model on a held-out split"),
    "sweep": (cmd_sweep, ("ranker", "experiment"), "trace the mixing frontier"),
    "buckets": (cmd_buckets, (), "compare two eval reports by query frequency"),
    "experiment": (
        cmd_experiment,
        ("simulator", "judge", "backend", "ranker", "experiment"),
        "run the full multi-seed comparison",
    ),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="INI config file")
    common.add_argument("--seed", type=int, default=1, help="root random seed")
    common.add_argument("--out-dir", default="runs", help="artifact directory")
    common.add_argument(
        "--check", action="store_true", help="exit 3 when acceptance thresholds fail"
    )
    common.add_argument(
        "--concurrency", type=int, default=8, help="in-flight judge requests"
    )

    parser = argparse.ArgumentParser(
        prog="paretorank",
        description="multi-objective ranking pipeline with judge-labeled data",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    parsers = {}
    for name, (func, sections, help_text) in _COMMANDS.items():
        p = sub.add_parser(
            name,
            parents=[common],
            help=help_text,
            epilog=_config_epilog(sections),
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        p.set_defaults(func=func)
        parsers[name] = p

    parsers["label"].add_argument("--dataset", required=True)
    parsers["label"].add_argument("--truth", default=None, help="oracle truth table")
    parsers["label"].add_argument("--cache", default=None, help="verdict cache path")
    parsers["judge-eval"].add_argument("--verdicts", required=True)
    parsers["judge-eval"].add_argument("--truth", required=True)
    parsers["mix"].add_argument("--dataset", required=True)
    parsers["mix"].add_argument("--fraction", type=float, required=True)
    parsers["train"].add_argument("--dataset", required=True)
    parsers["eval"].add_argument("--model", required=True)
    parsers["eval"].add_argument("--dataset", required=True)
    parsers["eval"].add_argument(
        "--truth", default=None, help="score textual NDCG against this truth table"
    )
    parsers["sweep"].add_argument("--train-dataset", required=True)
    parsers["sweep"].add_argument("--eval-dataset", required=True)
    parsers["sweep"].add_argument(
        "--truth", default=None, help="score textual NDCG against this truth table"
    )
    parsers["buckets"].add_argument("--report-a", required=True)
    parsers["buckets"].add_argument("--report-b", required=True)
    parsers["buckets"].add_argument("--dataset", required=True)
    parsers["experiment"].add_argument(
        "--seeds", default=None, help="comma-separated seed list"
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args, extras = parser.parse_known_args(argv)
    overrides = []
    for extra in extras:
        if extra.startswith("--") and "=" in extra and "." in extra:
            overrides.append(extra[2:])
        else:
            print(f"unrecognized argument: {extra}", file=sys.stderr)
            return EXIT_VALIDATION
    try:
        config = load_config(args.config)
        apply_overrides(config, overrides)
        os.makedirs(args.out_dir, exist_ok=True)
        return args.func(args, config)
    except (BackendUnavailableError, BackendError) as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (ParetoRankError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    raise SystemExit(main())
