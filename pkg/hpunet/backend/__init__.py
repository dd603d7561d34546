"""Minimal differentiable array engine on top of numpy."""
