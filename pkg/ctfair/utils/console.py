#!/usr/bin/env python3
"""
Console output utilities.
"""

from collections.abc import Mapping, Sequence
from typing import Any

from rich.console import Console
from rich.table import Table
from rich.text import Text
from rich.theme import Theme

# --- Icons ---
STATUS_OK_ICON = " "
WARNING_ICON = " "
ERROR_ICON = " "
INFO_ICON = " "
CHART_ICON = " "
GEAR_ICON = " "

# Setup Rich console with custom theme
custom_theme = Theme({
    "header_border": "blue",
    "header_title": "bold",
    "summary_header": "bold cyan",
    "summary_item": "cyan",
    "metric_name": "bold",
    "metric_value": "green",
    "metric_undefined": "dim",
    "epoch_selected": "bold green",
    "warning": "bold yellow",
    "error": "bold red",
    "success": "bold green",
    "info": "dim cyan",
    "debug": "dim magenta",
})
console = Console(theme=custom_theme, highlight=False)


def format_metric(value: float | None, digits: int = 3) -> str:
    """Format a metric value; undefined values render as 'n/a'."""
    if value is None:
        return "n/a"
    return f"{value:.{digits}f}"


def render_header(title: str, icon: str = CHART_ICON) -> None:
    """Print a boxed section header."""
    header_width = min(console.width - 4, 60)
    title_text = Text.assemble((icon + " ", "header_title"), (title, "header_title"))
    padding_needed = header_width - len(title_text) - 2
    padded_title = Text.assemble(title_text, (" " * max(0, padding_needed), "default"))
    console.print(f"╭{'─' * header_width}╮", style="header_border")
    console.print(
        Text.assemble(("│ ", "header_border"), padded_title, (" │", "header_border"))
    )
    console.print(f"╰{'─' * header_width}╯", style="header_border")


def render_dev_history(dev_history: Sequence[float], selected_epoch: int) -> None:
    """Print the per-epoch dev criterion, marking the selected epoch."""
    table = Table(show_header=True, header_style="bold magenta")
    table.add_column("Epoch", justify="right")
    table.add_column("Dev criterion", justify="right")
    for epoch, value in enumerate(dev_history, 1):
        style = "epoch_selected" if epoch == selected_epoch else ""
        table.add_row(str(epoch), f"{value:.5f}", style=style)
    console.print(table)


def render_report(report: Mapping[str, Any]) -> None:
    """Print the headline numbers of a metrics report dictionary."""
    table = Table(show_header=True, header_style="bold magenta")
    table.add_column("Metric", style="metric_name")
    table.add_column("Train terms", justify="right")
    table.add_column("Held-out terms", justify="right")
    for key, label in (
        ("ctf_gap_nontoxic", "CTF gap (nontoxic)"),
        ("ctf_gap_toxic", "CTF gap (toxic)"),
        ("ctf_gap_all", "CTF gap (all)"),
    ):
        splits = report.get(key, {})
        table.add_row(
            label, format_metric(splits.get("train")), format_metric(splits.get("heldout"))
        )
    console.print(table)
    for key, label in (
        ("tnr_gap", "TNR gap"),
        ("tpr_gap", "TPR gap"),
        ("auc", "AUC"),
    ):
        console.print(f"\t- {label}: {format_metric(report.get(key))}", style="summary_item")
    probes = report.get("probes", {})
    console.print(
        f"\t- Identity embedding cosine: {format_metric(probes.get('avg_identity_cosine'))}",
        style="summary_item",
    )
    console.print(
        f"\t- Single-token toxicity: {format_metric(probes.get('avg_single_token_toxicity'))}",
        style="summary_item",
    )


def render_comparison(rows: Sequence[Mapping[str, Any]], columns: Sequence[str]) -> None:
    """Print one row per experiment cell."""
    table = Table(show_header=True, header_style="bold magenta")
    table.add_column("Model", style="metric_name")
    for column in columns:
        table.add_column(column, justify="right")
    for row in rows:
        table.add_row(row["model"], *(format_metric(row.get(c)) for c in columns))
    console.print(table)
