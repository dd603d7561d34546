"""Hierarchical probabilistic U-Net."""
