"""Interactive RGBD indoor-scene annotation toolkit."""

__version__ = "0.1.0"
