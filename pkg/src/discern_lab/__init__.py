"""Two-player entry games under alternative solution concepts."""
__version__ = "0.1.0"
