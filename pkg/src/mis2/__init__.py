"""Probabilistic multi-industry classification."""
