"""Spiking SqueezeNet training and energy profiling toolkit."""

__version__ = "0.1.0"
