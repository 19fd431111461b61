"""Entanglement between patches of the free lattice scalar vacuum, traced or volume-measured."""

__version__ = "0.1.0"
