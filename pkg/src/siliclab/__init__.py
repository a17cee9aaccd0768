"""Desk-scale lab for thermodynamic timing experiments on a SHA-256 twin."""

__version__ = "0.1.0"
