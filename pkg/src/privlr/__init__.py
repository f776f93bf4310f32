"""Private linear regression under differential privacy and PAC privacy."""

__version__ = "0.1.0"
