"""Experiment configuration, datasets, runners and outputs."""
