"""Dual supervised learning for paired language understanding and generation."""
__version__ = "0.1.0"
