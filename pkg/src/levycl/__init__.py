"""Engquist-Osher schemes for conservation laws with Brownian and Levy noise."""

__version__ = "0.1.0"
