"""WiSARD weightless neural networks over TFHE-encrypted data."""

__version__ = "0.1.0"
