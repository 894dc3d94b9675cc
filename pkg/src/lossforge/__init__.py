"""Genetic-programming search over GAN loss functions, with a desk-scale GAN lab."""

__version__ = "0.1.0"
