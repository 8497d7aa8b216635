"""Knowledge-graph-augmented actor-critic navigation in symbolic indoor scenes."""

__version__ = "0.1.0"
