"""Segmentation and distribution metrics."""
