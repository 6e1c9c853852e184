"""Reproducible studies driven by the command line interface."""
