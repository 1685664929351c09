"""Experiment runners and the ``hmala`` command-line interface."""
