"""drnvc: desk-scale neural video codec with prefix-shared coding routes
and a learned rate-control agent."""

__version__ = "0.1.0"
