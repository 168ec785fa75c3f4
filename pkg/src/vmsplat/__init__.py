"""Virtual-memory streaming and level-of-detail for Gaussian splat scenes."""

__version__ = "0.1.0"
