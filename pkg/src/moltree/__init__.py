"""moltree: tree-structured variational autoencoder for small molecules."""

__version__ = "0.1.0"
