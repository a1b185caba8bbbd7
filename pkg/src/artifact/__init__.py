"""Diffusion-based generative steganography with analytic score models."""

__version__ = "0.1.0"
