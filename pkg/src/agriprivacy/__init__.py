"""Federated, locally differentially private linkage of farmers-market data."""

__version__ = "0.1.0"
