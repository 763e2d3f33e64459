"""Composable life-cycle-assessment models: registry, resolver, integrity checks and computation."""

__version__ = "0.1.0"
