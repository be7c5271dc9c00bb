#!/usr/bin/env python3
"""
Machine-readable report files: metrics JSON, per-term CSV and the comparison table.
"""

from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any

import pandas as pd

from ctfair.core.config import TrainConfig
from ctfair.utils.file import atomic_write_text, canonical_json

PER_TERM_COLUMNS = ("term", "tpr", "tnr", "n_positive", "n_negative")

# Flat column name -> path into a report dictionary
COMPARISON_FIELDS: dict[str, tuple[str, ...]] = {
    "ctf_nontoxic_train": ("ctf_gap_nontoxic", "train"),
    "ctf_nontoxic_heldout": ("ctf_gap_nontoxic", "heldout"),
    "ctf_toxic_train": ("ctf_gap_toxic", "train"),
    "ctf_toxic_heldout": ("ctf_gap_toxic", "heldout"),
    "ctf_all_train": ("ctf_gap_all", "train"),
    "ctf_all_heldout": ("ctf_gap_all", "heldout"),
    "tnr_gap": ("tnr_gap",),
    "tpr_gap": ("tpr_gap",),
    "auc": ("auc",),
    "avg_identity_cosine": ("probes", "avg_identity_cosine"),
    "avg_single_token_toxicity": ("probes", "avg_single_token_toxicity"),
}
COMPARISON_COLUMNS = tuple(COMPARISON_FIELDS)


def run_metadata(config: TrainConfig, seeds: Sequence[int], **extra: Any) -> dict[str, Any]:
    """Metadata identifying how a report was produced."""
    return {
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "seeds": list(seeds),
        **extra,
    }


def flatten_report(report: Mapping[str, Any]) -> dict[str, float | None]:
    """Pick the comparison columns out of a report dictionary."""
    row: dict[str, float | None] = {}
    for column, keys in COMPARISON_FIELDS.items():
        value: Any = report
        for key in keys:
            value = value.get(key) if isinstance(value, Mapping) else None
        row[column] = value
    return row


def per_term_frame(rates: Mapping[str, Mapping[str, Any]]) -> pd.DataFrame:
    """One row per term, sorted by term."""
    records = [{"term": term, **rates[term]} for term in sorted(rates)]
    return pd.DataFrame.from_records(records, columns=list(PER_TERM_COLUMNS))


def _csv_text(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, lineterminator="\n")


def write_report(
    report: Mapping[str, Any], metadata: Mapping[str, Any], out_dir: str | Path
) -> tuple[Path, Path]:
    """Write ``report.json`` and ``per_term.csv`` into ``out_dir``.

    Returns:
        The JSON and CSV paths.
    """
    out = Path(out_dir)
    document = {"metadata": dict(metadata), "report": dict(report)}
    json_path = atomic_write_text(out / "report.json", canonical_json(document))
    csv_path = atomic_write_text(
        out / "per_term.csv", _csv_text(per_term_frame(report.get("per_term_rates", {})))
    )
    return json_path, csv_path


def write_comparison(
    rows: Sequence[Mapping[str, Any]],
    per_term: Mapping[str, Mapping[str, Mapping[str, Any]]],
    metadata: Mapping[str, Any],
    out_dir: str | Path,
) -> list[Path]:
    """Write ``comparison.json``, ``comparison.csv`` and ``per_term/<cell>.csv``.

    Args:
        rows: One dictionary per cell with ``model``, ``method``, ``lambda`` and the
            comparison columns.
        per_term: Cell name -> averaged per-term rates.
        metadata: Plan hash, config hashes and seeds.
        out_dir: Output directory.
    """
    out = Path(out_dir)
    written = [
        atomic_write_text(
            out / "comparison.json",
            canonical_json({"metadata": dict(metadata), "rows": [dict(r) for r in rows]}),
        )
    ]
    frame = pd.DataFrame.from_records(
        [dict(r) for r in rows], columns=["model", "method", "lambda", *COMPARISON_COLUMNS]
    )
    written.append(atomic_write_text(out / "comparison.csv", _csv_text(frame)))
    for cell, rates in per_term.items():
        written.append(
            atomic_write_text(out / "per_term" / f"{cell}.csv", _csv_text(per_term_frame(rates)))
        )
    return written
