"""Causality-graph spatio-temporal forecasting of hourly airport delays."""

__version__ = "0.1.0"
