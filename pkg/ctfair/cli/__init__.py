"""Command-line interface for ctfair."""
