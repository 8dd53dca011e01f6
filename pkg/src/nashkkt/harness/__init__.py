"""Experiment harness: scenario library, pipelines, metrics, plots and CLI."""
