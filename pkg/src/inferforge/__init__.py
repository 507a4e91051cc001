"""inferforge: build, serve, and benchmark multi-target inference bundles."""

__version__ = "0.1.0"
