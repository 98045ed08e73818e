"""Safe test-time search for two-player zero-sum imperfect-information games."""

__version__ = "0.1.0"
