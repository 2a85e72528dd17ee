"""Online correlated selection, its probability bounds, and the matching LPs built on them."""

__version__ = "0.1.0"
