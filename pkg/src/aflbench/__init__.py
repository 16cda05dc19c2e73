"""Deterministic benchmark harness for Byzantine-robust asynchronous
federated learning."""

__version__ = "0.1.0"
