"""Trajectory-user linking with max-venue-ID encodings and exact k-NN."""

__version__ = "0.1.0"
