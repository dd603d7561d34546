"""hpunet: hierarchical probabilistic U-Net at desk scale."""
__version__ = "0.1.0"
