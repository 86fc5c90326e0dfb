"""minilib: small utilities used to exercise the task pipeline."""

__version__ = "0.3.0"
