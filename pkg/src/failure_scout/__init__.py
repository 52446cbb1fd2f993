"""Sequential annotation recommendation for surfacing classifier failure patterns."""

__version__ = "0.1.0"
