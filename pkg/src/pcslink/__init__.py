"""Desk-scale simulator for probabilistically shaped coherent optical links."""

__version__ = "0.1.0"
