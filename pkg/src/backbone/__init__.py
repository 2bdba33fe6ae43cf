"""Statistically validated backbones of retweet networks.

Null-model projections of verified/unverified interaction graphs and
user/post retweet graphs, community detection, polarization, hub scores and
bot-squad detection.
"""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    BipartiteGraph, DirectedBipartiteGraph, DirectedGraph, StructuralError, degrees_bipartite,
    degrees_directed,
)
from .bicm import BicmFit, ConvergenceError, fit_bicm  # noqa: E402
from .bidcm import BidcmFit, fit_bidcm  # noqa: E402
from .projection import fdr_select, validate_directed, validate_undirected  # noqa: E402
from .community import louvain_reshuffled  # noqa: E402

__all__ = [
    "BipartiteGraph", "DirectedBipartiteGraph", "DirectedGraph", "StructuralError", "degrees_bipartite",
    "degrees_directed", "BicmFit", "ConvergenceError", "fit_bicm", "BidcmFit", "fit_bidcm", "fdr_select",
    "validate_directed", "validate_undirected", "louvain_reshuffled",
]
