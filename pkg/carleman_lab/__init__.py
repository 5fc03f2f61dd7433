"""
Carleman Lab - unique continuation numerics for the fractional Laplacian.
"""

__version__ = "0.1.0"
