"""Exact distribution engine, event algebra and proof replay."""

from __future__ import annotations
