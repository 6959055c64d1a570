"""Heavy-tailed random walks, their stable limits and inverse-subordinator time changes."""

__version__ = "0.1.0"
