"""Parity-constrained odometer: measures, dynamics, Bratteli model and a
finite-depth replay of the property-A argument."""

from __future__ import annotations

__version__ = "0.1.0"
