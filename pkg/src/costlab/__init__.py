"""Static cost analysis of neural networks for microcontroller targets."""

__version__ = "0.1.0"
