"""Iterative validation of LLM-suggested LCSH terms against the LOC Linked Data Service."""

__version__ = "0.1.0"
