"""Desk-scale harness: synthetic data, a two-layer MLP, and the CLI commands."""
