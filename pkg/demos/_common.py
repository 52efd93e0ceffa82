"""Shared paths for the demo scripts."""

from pathlib import Path

SPECS = Path(__file__).resolve().parent / "specs"
