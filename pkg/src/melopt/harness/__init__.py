"""Experiment configuration, Monte Carlo driver, export and CLI."""
