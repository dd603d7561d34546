"""Synthetic tasks with known output distributions."""
