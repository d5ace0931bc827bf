"""Semi-discrete optimal transport lab for regularity diagnostics in the plane."""

__version__ = "0.1.0"
