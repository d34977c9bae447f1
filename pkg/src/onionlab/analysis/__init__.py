"""Metrics, estimators and numeric oracles."""
