"""Experiment plumbing: datasets, checkpoints, metrics, configuration, reports and the CLI."""
