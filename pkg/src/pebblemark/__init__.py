"""Workbench for dynamic-graph memory-hard functions that hide their access pattern by shuffling in cache.

Graph gadgets, a dynamic pebbling simulator, a two-tier memory evaluator
that records leakage patterns, and a data-independency game harness.
"""

__version__ = "0.1.0"
