"""Deterministic samplers built from measure-preserving ODE flows."""

__version__ = "0.1.0"
