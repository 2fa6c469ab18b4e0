"""Experiment harness: configs, checkpoints, synthetic oracles, reporting and the CLI."""
