"""Refined-rule error correction for bagged CART ensembles on tabular data."""

__version__ = "0.1.0"
