"""Console and file helpers for ctfair."""
