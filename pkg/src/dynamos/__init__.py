"""Dynamic monopolies under the simple majority rule on tori and random 4-regular graphs."""

__version__ = "0.1.0"

from .coloring import is_dynamo, run
from .graph_core import AdjacencyGraph, Rectangle, SeedSet, TorusGraph, make_torus
from .montecarlo import GraphSpec, estimate_dynamo_prob, find_threshold, sweep
from .sc_simulator import run_sc
from .torus_analysis import certify_non_dynamo, verify_cage_cover

__all__ = [
    "AdjacencyGraph", "GraphSpec", "Rectangle", "SeedSet", "TorusGraph", "certify_non_dynamo",
    "estimate_dynamo_prob", "find_threshold", "is_dynamo", "make_torus", "run", "run_sc",
    "sweep", "verify_cage_cover",
]
