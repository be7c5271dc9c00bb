"""Text processing, model, training and metrics for ctfair."""
