#!/usr/bin/env python3
"""
Command-line interface for ctfair.

Commands:
    gen-synthetic   write the synthetic template corpus as CSV
    train           train a model and write a checkpoint
    eval            evaluate a checkpoint and write the metrics report
    compare         run an experiment plan and write the comparison table
"""

import argparse
from pathlib import Path
from typing import Any

from ctfair.core.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from ctfair.core.config import TrainConfig
from ctfair.core.constants import TRAINING_METHODS
from ctfair.core.data import CorpusError, generate_skewed, generate_synthetic, write_csv
from ctfair.core.experiment import (
    ExperimentPlan,
    PlanError,
    evaluate_model,
    load_experiment_data,
    load_lexicon,
    load_template_spec,
    run_plan,
)
from ctfair.core.metrics import FairnessSpec
from ctfair.core.model import ModelError, vocab_hash
from ctfair.core.report import COMPARISON_COLUMNS, run_metadata, write_report
from ctfair.core.text import LexiconError
from ctfair.core.train import TrainingError, train_runs, training_vocab
from ctfair.utils.console import (
    ERROR_ICON,
    GEAR_ICON,
    STATUS_OK_ICON,
    WARNING_ICON,
    console,
    render_comparison,
    render_dev_history,
    render_header,
    render_report,
)
from ctfair.utils.file import read_json

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

# Errors caused by bad inputs rather than by a failing computation
VALIDATION_ERRORS = (
    ValueError,
    LexiconError,
    CorpusError,
    CheckpointError,
    PlanError,
    ModelError,
)


def create_parser() -> argparse.ArgumentParser:
    """Create the argument parser for the CLI."""
    parser = argparse.ArgumentParser(
        description="ctfair: counterfactual token fairness for text classifiers"
    )
    parser.add_argument("--debug", action="store_true", help="Enable debug output")
    subparsers = parser.add_subparsers(dest="command", required=True)

    gen = subparsers.add_parser("gen-synthetic", help="Write the synthetic template corpus")
    gen.add_argument("--spec", help="Template spec JSON (default: built-in spec)")
    gen.add_argument("--lexicon", help="Identity lexicon file (default: built-in lexicon)")
    gen.add_argument("--out", required=True, help="Output CSV path")
    gen.add_argument(
        "--skewed",
        action="store_true",
        help="Add identity-only context sentences with term-dependent toxicity rates",
    )

    train = subparsers.add_parser("train", help="Train a model and write a checkpoint")
    train.add_argument("--config", help="Training config JSON")
    train.add_argument(
        "--corpus",
        default="skewed",
        help="Training corpus CSV, or 'synthetic' / 'skewed' for the built-in corpora",
    )
    train.add_argument("--lexicon", help="Identity lexicon file (default: built-in lexicon)")
    train.add_argument("--template-spec", help="Template spec JSON for built-in corpora")
    train.add_argument("--out", required=True, help="Checkpoint output path")
    _add_override_flags(train)

    evaluate = subparsers.add_parser("eval", help="Evaluate a checkpoint")
    evaluate.add_argument("--checkpoint", required=True, help="Checkpoint written by 'train'")
    evaluate.add_argument(
        "--corpus", default="skewed", help="The corpus the checkpoint was trained on"
    )
    evaluate.add_argument(
        "--eval-corpus", help="Fairness evaluation corpus (default: the corpus's test split)"
    )
    evaluate.add_argument("--lexicon", help="Identity lexicon file (default: built-in lexicon)")
    evaluate.add_argument("--template-spec", help="Template spec JSON for built-in corpora")
    evaluate.add_argument("--spec", help="Fairness spec JSON (epsilon, max_tokens, threshold)")
    evaluate.add_argument("--out", required=True, help="Output directory for the report")

    compare = subparsers.add_parser("compare", help="Run an experiment plan")
    compare.add_argument("--plan", help="Experiment plan JSON (default: the seven-model grid)")
    compare.add_argument("--out", help="Output directory (overrides the plan)")
    compare.add_argument("--seed", type=int, help="First run seed (overrides the plan)")
    compare.add_argument("--runs", type=int, help="Runs per cell (overrides the plan)")
    compare.add_argument(
        "--parallel",
        type=int,
        help="Worker threads: 0=auto (based on CPU cores), N=specific number of workers",
    )
    return parser


def _add_override_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--method", choices=TRAINING_METHODS, help="Mitigation method")
    parser.add_argument("--lambda", dest="lambda_", type=float, help="CLP weight")
    parser.add_argument("--seed", type=int, help="Random seed")
    parser.add_argument("--runs", type=int, help="Number of seeded runs")


def _train_config(args: argparse.Namespace) -> TrainConfig:
    """Config file values with command-line flags applied on top."""
    settings: dict[str, Any] = {}
    if args.config:
        settings = read_json(args.config)
        if not isinstance(settings, dict):
            raise ValueError(f"{args.config}: training config must be a JSON object")
    overrides = {
        "method": args.method,
        "lambda": args.lambda_,
        "seed": args.seed,
        "runs": args.runs,
    }
    if args.method is not None and args.method != settings.get("method") and args.lambda_ is None:
        # A lambda from the file belongs to the file's method
        settings.pop("lambda", None)
    settings.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig.from_dict(settings)


def _run_checkpoint_path(out: Path, seed: int, runs: int) -> Path:
    if runs == 1:
        return out
    return out.with_name(f"{out.stem}-seed{seed}{out.suffix}")


def cmd_gen_synthetic(args: argparse.Namespace) -> int:
    spec = load_template_spec(args.spec)
    terms = sorted(load_lexicon(args.lexicon).all_terms)
    generator = generate_skewed if args.skewed else generate_synthetic
    corpus = generator(spec, terms)
    path = write_csv(corpus, args.out)
    counts = corpus.label_counts()
    console.print("\nSummary: ", style="summary_header")
    console.print(f"\t- {len(corpus)} documents written to {path}", style="summary_item")
    console.print(f"\t- {counts[1]} toxic, {counts[0]} nontoxic", style="summary_item")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config = _train_config(args)
    lexicon = load_lexicon(args.lexicon)
    data = load_experiment_data(
        args.corpus,
        lexicon,
        load_template_spec(args.template_spec),
        config.split_seed,
        config.split_fractions,
    )
    render_header(f"Training {config.method} ({config.runs} run(s))", icon=GEAR_ICON)
    models = train_runs((data.train_docs, data.dev_docs), config, lexicon, debug=args.debug)

    out = Path(args.out)
    for model in models:
        path = save_checkpoint(model, _run_checkpoint_path(out, model.config.seed, config.runs))
        console.print(
            f"{STATUS_OK_ICON}Seed {model.config.seed}: selected epoch {model.selected_epoch}, "
            f"checkpoint written to {path}",
            style="success",
        )
        render_dev_history(model.dev_history, model.selected_epoch)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    model = load_checkpoint(args.checkpoint)
    lexicon = load_lexicon(args.lexicon)
    spec = FairnessSpec.load(args.spec) if args.spec else FairnessSpec()
    data = load_experiment_data(
        args.corpus,
        lexicon,
        load_template_spec(args.template_spec),
        model.config.split_seed,
        model.config.split_fractions,
        args.eval_corpus,
    )
    expected = vocab_hash(training_vocab(data.train_docs, lexicon, model.config.method))
    if expected != vocab_hash(model.params.vocab):
        raise CheckpointError(
            f"Checkpoint vocabulary does not match the training split of {args.corpus}"
        )

    report = evaluate_model(model, data.eval_docs, lexicon, spec)
    if report["auc"] is None:
        console.print(
            f"{WARNING_ICON}AUC is undefined: the evaluation documents lack one of the classes.",
            style="warning",
        )
    metadata = run_metadata(
        model.config,
        [model.config.seed],
        checkpoint=Path(args.checkpoint).name,
        n_eval=len(data.eval_docs),
    )
    json_path, csv_path = write_report(report, metadata, args.out)
    render_header("Evaluation")
    render_report(report)
    console.print(f"{STATUS_OK_ICON}Report written to {json_path} and {csv_path}", style="success")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    plan = ExperimentPlan.load(args.plan) if args.plan else ExperimentPlan.paper_grid()
    for name in ("seed", "runs", "parallel"):
        value = getattr(args, name)
        if value is not None:
            setattr(plan, name, value)
    if args.out:
        plan.output_dir = args.out
    # Re-validate after overrides
    plan = ExperimentPlan.from_dict(plan.to_dict())

    render_header(f"Comparing {len(plan.cells)} cell(s), {plan.runs} run(s) each")
    result = run_plan(plan, debug=args.debug)
    render_comparison(result.rows, COMPARISON_COLUMNS)
    console.print(f"{STATUS_OK_ICON}Comparison written to {plan.output_dir}", style="success")
    if result.failures:
        console.print(f"\n{ERROR_ICON}{len(result.failures)} cell(s) failed:", style="error")
        for name, message in result.failures:
            console.print(f"\t- {name}: {message}", style="error")
        return EXIT_RUNTIME
    return EXIT_OK


COMMANDS = {
    "gen-synthetic": cmd_gen_synthetic,
    "train": cmd_train,
    "eval": cmd_eval,
    "compare": cmd_compare,
}


def main(argv: list[str] | None = None) -> int:
    """Main entry point for ctfair."""
    parser = create_parser()
    args = parser.parse_args(argv)

    try:
        return COMMANDS[args.command](args)
    except TrainingError as e:
        console.print(f"{ERROR_ICON}Training failed: {e}", style="error")
        return EXIT_RUNTIME
    except VALIDATION_ERRORS as e:
        console.print(f"{WARNING_ICON}Error: {e}", style="warning")
        return EXIT_VALIDATION
    except OSError as e:
        console.print(f"{ERROR_ICON}File error: {e}", style="error")
        return EXIT_VALIDATION
    except Exception as e:
        console.print(f"{ERROR_ICON}Unexpected error: {e}", style="error")
        if args.debug:
            console.print_exception()
        return EXIT_RUNTIME
