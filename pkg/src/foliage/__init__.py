"""Executable checks for pseudogroups commuting with basic transversely elliptic
operators, and the Haar-averaging construction of invariant transverse metrics."""

__version__ = "0.1.0"
