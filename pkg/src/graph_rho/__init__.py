"""Learning-accelerated rolling horizon optimization for flexible job-shop scheduling."""

__version__ = "0.1.0"
