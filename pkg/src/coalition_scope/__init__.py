"""Coalition-structure prediction for negotiation games."""

__version__ = "0.1.0"
