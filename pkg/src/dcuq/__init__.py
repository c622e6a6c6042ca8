"""Data-consistent forward and inverse UQ with approximate models."""

__version__ = "0.1.0"
