"""Boundary CR-invariants, D'Angelo forms and index estimates for domains in C^n."""

__version__ = "0.1.0"
