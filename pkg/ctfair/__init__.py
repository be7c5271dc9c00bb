"""ctfair: counterfactual token fairness training and evaluation for text classifiers."""

__version__ = "1.0.0"
