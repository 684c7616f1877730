"""Distributed Laplacian solving on a simulated CONGEST network."""
from .estimators import LaplacianSolver, MaxFlow, MinorSchurSparsifier
from .flow import FlowNetwork
from .graph import WeightedGraph

__all__ = ["FlowNetwork", "LaplacianSolver", "MaxFlow", "MinorSchurSparsifier", "WeightedGraph"]
__version__ = "0.1.0"
