#!/usr/bin/env python3
"""
Experiment plans: a grid of (method, lambda) cells trained for several seeds each,
evaluated with the same functions the train and eval commands use, and averaged.
"""

from collections.abc import Mapping, Sequence
import concurrent.futures
from dataclasses import dataclass, field
import os
from pathlib import Path
from typing import Any

from ctfair.core.config import TrainConfig
from ctfair.core.constants import CLP_METHODS, DEFAULT_SPLIT_FRACTIONS, TRAINING_METHODS
from ctfair.core.data import Corpus, TemplateSpec, resolve_corpus, split
from ctfair.core.metrics import FairnessSpec, evaluate
from ctfair.core.report import flatten_report, write_comparison
from ctfair.core.text import Document, IdentityLexicon
from ctfair.core.train import TrainedModel, train
from ctfair.utils.console import ERROR_ICON, INFO_ICON, console
from ctfair.utils.file import canonical_json, read_json, sha256_text

METHOD_LABELS = {
    "baseline": "Baseline",
    "blind": "Blind",
    "augment": "CF Aug",
    "clp": "CLP",
    "clp_nontoxic": "CLP_nontoxic",
}
PLAN_KEYS = (
    "corpus",
    "eval_corpus",
    "template_spec",
    "lexicon",
    "split_seed",
    "split_fractions",
    "cells",
    "runs",
    "seed",
    "train",
    "metrics",
    "output_dir",
    "parallel",
)


class PlanError(Exception):
    """Custom exception for invalid experiment plans."""

    pass


@dataclass(frozen=True)
class Cell:
    """One row of the comparison grid."""

    method: str
    lambda_: float | None = None

    def __post_init__(self):
        if self.method not in TRAINING_METHODS:
            raise PlanError(f"Unknown method {self.method!r} in plan cell")
        if self.lambda_ is not None and self.lambda_ < 0:
            raise PlanError(f"Cell {self.method}: lambda must be nonnegative")

    @property
    def name(self) -> str:
        """File-system friendly cell name, e.g. ``clp_lambda0.05``."""
        if self.method in CLP_METHODS and self.lambda_ is not None:
            return f"{self.method}_lambda{self.lambda_:g}"
        return self.method

    @property
    def label(self) -> str:
        """Display name, e.g. ``CLP, λ=0.05``."""
        text = METHOD_LABELS[self.method]
        if self.method in CLP_METHODS and self.lambda_ is not None:
            text += f", λ={self.lambda_:g}"
        return text

    def train_config(self, base: TrainConfig) -> TrainConfig:
        return base.with_overrides(method=self.method, lambda_=self.lambda_)

    def to_dict(self) -> dict[str, Any]:
        return {"method": self.method, "lambda": self.lambda_}


@dataclass
class ExperimentPlan:
    """A comparison grid and everything needed to run it reproducibly."""

    cells: list[Cell]
    corpus: str = "skewed"
    eval_corpus: str | None = None
    template_spec: str | None = None
    lexicon: str | None = None
    split_seed: int = 0
    split_fractions: tuple[float, float, float] = DEFAULT_SPLIT_FRACTIONS
    runs: int = 1
    seed: int = 0
    train: dict[str, Any] = field(default_factory=dict)
    metrics: FairnessSpec = field(default_factory=FairnessSpec)
    output_dir: str = "results"
    parallel: int = 0

    def __post_init__(self):
        if not self.cells:
            raise PlanError("Experiment plan has no cells")
        if self.runs < 1:
            raise PlanError("runs must be at least 1")
        if self.parallel < 0:
            raise PlanError("parallel must be nonnegative")
        names = [cell.name for cell in self.cells]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise PlanError(f"Duplicate cells in plan: {', '.join(duplicates)}")
        self.split_fractions = tuple(self.split_fractions)  # type: ignore[assignment]
        try:
            self.base_config()
        except ValueError as e:
            raise PlanError(f"Invalid training settings: {e}") from e

    @classmethod
    def paper_grid(cls, **kwargs: Any) -> "ExperimentPlan":
        """The seven-model grid: Baseline, Blind, CF Aug, CLP_nontoxic and CLP at three lambdas."""
        cells = [
            Cell("baseline"),
            Cell("blind"),
            Cell("augment"),
            Cell("clp_nontoxic", 1.0),
            Cell("clp", 0.05),
            Cell("clp", 1.0),
            Cell("clp", 5.0),
        ]
        return cls(cells=cells, **kwargs)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentPlan":
        """Build a plan from JSON data.

        Raises:
            PlanError: On unknown keys, malformed cells or invalid values.
        """
        unknown = set(data) - set(PLAN_KEYS)
        if unknown:
            raise PlanError(f"Unknown plan keys: {', '.join(sorted(unknown))}")
        kwargs = {k: v for k, v in data.items() if k not in ("cells", "metrics")}
        try:
            cells = [Cell(c["method"], c.get("lambda")) for c in data.get("cells", [])]
            metrics = FairnessSpec.from_dict(data.get("metrics", {}))
        except (KeyError, TypeError, AttributeError) as e:
            raise PlanError(f"Malformed plan cell or metrics section: {e!r}") from e
        except ValueError as e:
            raise PlanError(f"Invalid metrics section: {e}") from e
        return cls(cells=cells, metrics=metrics, **kwargs)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentPlan":
        try:
            data = read_json(path)
        except (OSError, ValueError) as e:
            raise PlanError(f"Failed to read plan {path}: {e}") from e
        if not isinstance(data, dict):
            raise PlanError(f"{path}: plan must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        return {
            "cells": [cell.to_dict() for cell in self.cells],
            "corpus": self.corpus,
            "eval_corpus": self.eval_corpus,
            "template_spec": self.template_spec,
            "lexicon": self.lexicon,
            "split_seed": self.split_seed,
            "split_fractions": list(self.split_fractions),
            "runs": self.runs,
            "seed": self.seed,
            "train": dict(self.train),
            "metrics": self.metrics.to_dict(),
            "output_dir": self.output_dir,
            "parallel": self.parallel,
        }

    def plan_hash(self) -> str:
        return sha256_text(canonical_json(self.to_dict()))

    def base_config(self) -> TrainConfig:
        """Training settings shared by every cell."""
        settings = {
            **self.train,
            "seed": self.seed,
            "runs": self.runs,
            "split_seed": self.split_seed,
            "split_fractions": list(self.split_fractions),
        }
        settings.setdefault("method", "baseline")
        return TrainConfig.from_dict(settings)


@dataclass(frozen=True)
class ExperimentData:
    """Training, dev and evaluation documents."""

    train_docs: list[Document]
    dev_docs: list[Document]
    eval_docs: list[Document]
    corpus: Corpus


def load_lexicon(path: str | Path | None = None) -> IdentityLexicon:
    return IdentityLexicon.load(path) if path else IdentityLexicon.default()


def load_template_spec(path: str | Path | None = None) -> TemplateSpec:
    return TemplateSpec.load(path) if path else TemplateSpec.default()


def prepare_corpus(
    source: str | Path,
    template_spec: TemplateSpec,
    lexicon: IdentityLexicon,
    split_seed: int,
    split_fractions: Sequence[float],
) -> Corpus:
    """Resolve a corpus source and split it; a CSV that carries split tags keeps them."""
    corpus = resolve_corpus(source, template_spec, lexicon)
    if corpus.is_split:
        return corpus
    return split(corpus, split_fractions, split_seed)


def load_experiment_data(
    corpus_source: str | Path,
    lexicon: IdentityLexicon,
    template_spec: TemplateSpec,
    split_seed: int = 0,
    split_fractions: Sequence[float] = DEFAULT_SPLIT_FRACTIONS,
    eval_source: str | Path | None = None,
) -> ExperimentData:
    """Split the training corpus; evaluation uses the test split of ``eval_source``
    when given, otherwise the training corpus's own test split."""
    corpus = prepare_corpus(corpus_source, template_spec, lexicon, split_seed, split_fractions)
    if eval_source is None:
        eval_docs = corpus.subset("test")
    else:
        eval_corpus = prepare_corpus(
            eval_source, template_spec, lexicon, split_seed, split_fractions
        )
        eval_docs = eval_corpus.subset("test")
    return ExperimentData(
        train_docs=corpus.subset("train"),
        dev_docs=corpus.subset("dev"),
        eval_docs=eval_docs,
        corpus=corpus,
    )


def evaluate_model(
    model: TrainedModel,
    eval_docs: Sequence[Document],
    lexicon: IdentityLexicon,
    spec: FairnessSpec,
) -> dict[str, Any]:
    """The report dictionary written by the eval command."""
    return evaluate(model, eval_docs, lexicon, spec).to_dict()


def _mean_or_none(values: Sequence[Any]) -> Any:
    defined = [v for v in values if v is not None]
    if not defined:
        return None
    if all(isinstance(v, bool) for v in defined):
        return all(defined)
    if all(isinstance(v, int | float) for v in defined):
        return sum(defined) / len(defined)
    return defined[0]


def average_reports(reports: Sequence[Mapping[str, Any]]) -> dict[str, Any]:
    """Average every numeric leaf across run reports, skipping undefined values.

    Flags are combined with ``all``; nested dictionaries are averaged key by key.
    """
    if not reports:
        raise ValueError("Cannot average an empty list of reports")
    averaged: dict[str, Any] = {}
    keys = sorted({key for report in reports for key in report})
    for key in keys:
        values = [report.get(key) for report in reports]
        if any(isinstance(v, Mapping) for v in values):
            averaged[key] = average_reports([v for v in values if isinstance(v, Mapping)])
        else:
            averaged[key] = _mean_or_none(values)
    return averaged


@dataclass
class CellResult:
    cell: Cell
    config: TrainConfig
    reports: list[dict[str, Any]]

    @property
    def averaged(self) -> dict[str, Any]:
        return average_reports(self.reports)

    def row(self) -> dict[str, Any]:
        return {
            "model": self.cell.label,
            "method": self.cell.method,
            "lambda": self.config.penalty_weight if self.cell.method in CLP_METHODS else None,
            **flatten_report(self.averaged),
        }


def run_cell(
    cell: Cell,
    base_config: TrainConfig,
    data: ExperimentData,
    lexicon: IdentityLexicon,
    spec: FairnessSpec,
    debug: bool = False,
) -> CellResult:
    """Train and evaluate one cell for every run seed."""
    config = cell.train_config(base_config)
    reports = []
    for seed in config.run_seeds():
        run_config = config.with_overrides(seed=seed, runs=1)
        model = train((data.train_docs, data.dev_docs), run_config, lexicon, debug=debug)
        reports.append(evaluate_model(model, data.eval_docs, lexicon, spec))
        if debug:
            console.print(
                f"[debug]DEBUG:[/] {cell.label} seed={seed} selected epoch {model.selected_epoch}",
                style="debug",
            )
    return CellResult(cell=cell, config=config, reports=reports)


@dataclass
class ComparisonResult:
    rows: list[dict[str, Any]]
    per_term: dict[str, dict[str, Any]]
    failures: list[tuple[str, str]]
    written: list[Path]
    run_aucs: dict[str, list[float | None]] = field(default_factory=dict)


def run_plan(
    plan: ExperimentPlan,
    data: ExperimentData | None = None,
    debug: bool = False,
    output_dir: str | Path | None = None,
) -> ComparisonResult:
    """Run every cell (concurrently, bounded by ``plan.parallel``) and write the tables.

    Failed cells do not stop the others; they are listed in the result and left out of
    the written tables.
    """
    lexicon = load_lexicon(plan.lexicon)
    if data is None:
        data = load_experiment_data(
            plan.corpus,
            lexicon,
            load_template_spec(plan.template_spec),
            plan.split_seed,
            plan.split_fractions,
            plan.eval_corpus,
        )
    base_config = plan.base_config()

    n_cells = len(plan.cells)
    if plan.parallel <= 0:
        max_workers = min(n_cells, os.cpu_count() or 1)
    else:
        max_workers = min(n_cells, plan.parallel)

    results: list[CellResult | None] = [None] * n_cells
    failures: list[tuple[str, str]] = []
    with concurrent.futures.ThreadPoolExecutor(max_workers=max_workers) as executor:
        future_to_index = {
            executor.submit(run_cell, cell, base_config, data, lexicon, plan.metrics, debug): i
            for i, cell in enumerate(plan.cells)
        }
        for future in concurrent.futures.as_completed(future_to_index):
            index = future_to_index[future]
            cell = plan.cells[index]
            try:
                results[index] = future.result()
                console.print(f"{INFO_ICON}Finished cell {cell.label}", style="info")
            except Exception as e:
                console.print(f"{ERROR_ICON}Cell {cell.label} failed: {e}", style="error")
                failures.append((cell.name, str(e)))

    completed = [r for r in results if r is not None]
    rows = [r.row() for r in completed]
    per_term = {r.cell.name: r.averaged.get("per_term_rates", {}) for r in completed}
    metadata = {
        "plan": plan.to_dict(),
        "plan_hash": plan.plan_hash(),
        "config_hashes": {r.cell.name: r.config.config_hash() for r in completed},
        "seeds": base_config.run_seeds(),
        "n_train": len(data.train_docs),
        "n_dev": len(data.dev_docs),
        "n_eval": len(data.eval_docs),
    }
    written = write_comparison(rows, per_term, metadata, output_dir or plan.output_dir)
    # Failures sorted by grid order
    order = {cell.name: i for i, cell in enumerate(plan.cells)}
    failures.sort(key=lambda f: order[f[0]])
    run_aucs = {r.cell.label: [report.get("auc") for report in r.reports] for r in completed}
    return ComparisonResult(
        rows=rows, per_term=per_term, failures=failures, written=written, run_aucs=run_aucs
    )
