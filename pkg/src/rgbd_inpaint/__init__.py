"""RGB-D inpainting with late fusion and WGAN-GP global/local critics."""

__version__ = "0.1.0"
