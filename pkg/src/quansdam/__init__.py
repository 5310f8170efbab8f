"""Numerical laboratory for information-carrying unitaries and two-branch overlap processes."""
from __future__ import annotations

__version__ = "0.1.0"
