"""Replica statistical-mechanics toolkit for noisy random brickwork encoders."""

__version__ = "0.1.0"
