"""Knowledge-graph link prediction via layered graph percolation."""

__version__ = "0.1.0"
