"""Quantization of a charged particle on the sphere in a monopole field."""

__version__ = "0.1.0"
