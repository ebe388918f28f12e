"""Equivariant hypergraph networks for molecular property regression."""

__version__ = "0.1.0"
