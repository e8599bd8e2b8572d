"""Information-flow analysis between the two voices of a symbolic piece."""

__version__ = "0.1.0"
