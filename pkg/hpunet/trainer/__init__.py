"""Optimization loop, checkpoints and run directories."""
