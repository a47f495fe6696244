"""Answer natural-language queries by planning over API actions."""

__version__ = "0.1.0"
