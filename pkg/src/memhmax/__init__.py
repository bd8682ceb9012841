"""Memory-augmented HMAX recognition engine."""

__version__ = "0.1.0"
