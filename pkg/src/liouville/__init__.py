"""Liouville quantum field theory on the Riemann sphere, numerically."""
__version__ = "0.1.0"
