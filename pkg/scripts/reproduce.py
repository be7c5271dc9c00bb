#!/usr/bin/env python
"""
Run the seven-model grid on the synthetic corpora and check the expected trends.

Models are trained on the skewed corpus and evaluated on the test split of the
symmetric synthetic corpus. Exit code 0 when every check passes, 1 otherwise.
"""

import argparse
import filecmp
from pathlib import Path
import sys
import tempfile
from typing import Any

from rich.table import Table

from ctfair.core.experiment import ExperimentPlan, run_plan
from ctfair.utils.console import console, format_metric, render_header


def _by_label(rows: list[dict[str, Any]]) -> dict[str, dict[str, Any]]:
    return {row["model"]: row for row in rows}


def check_trends(
    rows: list[dict[str, Any]], run_aucs: dict[str, list[float | None]] | None = None
) -> list[tuple[str, bool, str]]:
    """Evaluate the trend criteria on seed-averaged comparison rows.

    With ``run_aucs`` (model label -> per-seed AUCs) every single run must also reach
    an AUC of 0.90.
    """
    grid = _by_label(rows)
    base, aug = grid["Baseline"], grid["CF Aug"]
    clp_small, clp_mid, clp_big = grid["CLP, λ=0.05"], grid["CLP, λ=1"], grid["CLP, λ=5"]
    gap = "ctf_nontoxic_train"

    checks = []
    checks.append(
        (
            "baseline nontoxic gap >= 0.05",
            base[gap] is not None and base[gap] >= 0.05,
            format_metric(base[gap]),
        )
    )
    checks.append(
        (
            "CLP λ=5 gap <= 25% of baseline",
            clp_big[gap] is not None and base[gap] is not None and clp_big[gap] <= 0.25 * base[gap],
            f"{format_metric(clp_big[gap])} vs {format_metric(base[gap])}",
        )
    )
    ladder = [clp_big[gap], clp_mid[gap], clp_small[gap], base[gap]]
    checks.append(
        (
            "gap ordering λ=5 <= λ=1 <= λ=0.05 <= baseline",
            None not in ladder and all(a <= b for a, b in zip(ladder, ladder[1:], strict=False)),
            " <= ".join(format_metric(v) for v in ladder),
        )
    )
    aucs = {label: row["auc"] for label, row in grid.items()}
    checks.append(
        (
            "every AUC >= 0.90 and within 0.02 of baseline",
            None not in aucs.values()
            and all(v >= 0.90 and abs(v - aucs["Baseline"]) <= 0.02 for v in aucs.values()),
            ", ".join(f"{k}: {format_metric(v)}" for k, v in aucs.items()),
        )
    )
    if run_aucs is not None:
        low = {
            label: [format_metric(v) for v in values if v is None or v < 0.90]
            for label, values in run_aucs.items()
        }
        low = {label: values for label, values in low.items() if values}
        checks.append(
            (
                "every run AUC >= 0.90",
                not low,
                "; ".join(f"{k}: {', '.join(v)}" for k, v in low.items()) or "all runs",
            )
        )
    cos_big, cos_base = clp_big["avg_identity_cosine"], base["avg_identity_cosine"]
    checks.append(
        (
            "identity embedding cosine: CLP λ=5 > baseline",
            cos_big is not None and cos_base is not None and cos_big > cos_base,
            f"{format_metric(cos_big)} vs {format_metric(cos_base)}",
        )
    )
    checks.append(
        (
            "augmentation gap not worse than baseline by more than 0.1",
            aug[gap] is not None and base[gap] is not None and aug[gap] <= base[gap] + 0.1,
            f"{format_metric(aug[gap])} vs {format_metric(base[gap])}",
        )
    )
    return checks


def _same_files(first: Path, second: Path) -> bool:
    names = sorted(p.relative_to(first) for p in first.rglob("*") if p.is_file())
    other = sorted(p.relative_to(second) for p in second.rglob("*") if p.is_file())
    if names != other:
        return False
    return all(filecmp.cmp(first / n, second / n, shallow=False) for n in names)


def main():
    """Run the grid, print the trend checks and exit with their verdict."""
    parser = argparse.ArgumentParser(description="Reproduce the mitigation trends")
    parser.add_argument("--runs", type=int, default=5, help="Seeds per cell (default: 5)")
    parser.add_argument("--seed", type=int, default=0, help="First seed")
    parser.add_argument("--parallel", type=int, default=0, help="Worker threads (0=auto)")
    parser.add_argument("--out", default="results/reproduce", help="Output directory")
    parser.add_argument(
        "--check-determinism",
        action="store_true",
        help="Run the grid a second time and compare every emitted file byte for byte",
    )
    args = parser.parse_args()

    plan = ExperimentPlan.paper_grid(
        corpus="skewed",
        eval_corpus="synthetic",
        runs=args.runs,
        seed=args.seed,
        parallel=args.parallel,
        output_dir=args.out,
    )
    render_header(f"Reproducing the mitigation grid ({args.runs} seeds per cell)")
    result = run_plan(plan)
    if result.failures:
        for name, message in result.failures:
            console.print(f"Cell {name} failed: {message}", style="error")
        sys.exit(1)

    checks = check_trends(result.rows, result.run_aucs)
    if args.check_determinism:
        with tempfile.TemporaryDirectory() as second_dir:
            run_plan(plan, output_dir=second_dir)
            # The plan records its own output_dir, so both runs write identical metadata
            checks.append(
                (
                    "rerun reproduces every file byte for byte",
                    _same_files(Path(args.out), Path(second_dir)),
                    second_dir,
                )
            )

    table = Table(show_header=True, header_style="bold magenta")
    table.add_column("Check")
    table.add_column("Result")
    table.add_column("Values")
    for name, passed, values in checks:
        table.add_row(name, "[success]pass[/]" if passed else "[error]FAIL[/]", values)
    console.print(table)

    sys.exit(0 if all(passed for _, passed, _ in checks) else 1)


if __name__ == "__main__":
    main()
