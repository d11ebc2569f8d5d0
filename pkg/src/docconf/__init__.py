"""Confidence estimation for document object detection."""

__version__ = "0.1.0"
