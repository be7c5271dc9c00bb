#!/usr/bin/env python3
"""
Utility functions for file operations.
"""

import hashlib
import json
import os
from pathlib import Path
import tempfile
from typing import Any


def atomic_write_text(path: str | Path, content: str) -> Path:
    """Write text to a file atomically.

    The content goes to a temporary file in the destination directory first and is
    then moved over the target with ``os.replace``, so readers never observe a
    half-written file.

    Args:
        path: Destination file path. Parent directories are created if missing.
        content: Text to write (UTF-8, newlines written as-is).

    Returns:
        The destination path.
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(content)
        os.replace(tmp_name, target)
    except BaseException:
        # Clean up the temp file if anything went wrong before the rename
        Path(tmp_name).unlink(missing_ok=True)
        raise
    return target


def canonical_json(data: Any) -> str:
    """Serialize data as deterministic, human-readable JSON with a trailing newline."""
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def sha256_text(text: str) -> str:
    """Hex SHA-256 digest of a UTF-8 string."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def read_json(path: str | Path) -> Any:
    """Read a JSON document from disk."""
    with open(path, encoding="utf-8") as f:
        return json.load(f)
