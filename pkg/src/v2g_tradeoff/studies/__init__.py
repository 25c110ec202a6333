"""Configurable reproductions of the trade-off, robustness and projection studies."""
