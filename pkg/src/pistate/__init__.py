"""Stateful applied pi calculus toolkit: SAPIC/StatVerif engines, encoder, bounded checker."""

__version__ = "0.1.0"
