"""Single-view reconstruction of thin eyeglasses frames by template FFD."""

__version__ = "0.1.0"
