"""Switches-based hybrid array DOA toolkit."""

__version__ = "0.1.0"
