"""
Development and reproduction scripts for ctfair.

Run them with ``uv run proj_test`` and ``uv run proj_reproduce``, or directly
with ``python scripts/<name>.py``.
"""
