"""Streaming variational Bayes over data streams.

Natural-gradient optimization of a population variational objective, with
LDA and truncated stick-breaking mixture models, classical SVI/SVB
baselines, streaming data sources, and a held-out evaluation harness.
"""

from popvb.backend import backend_name, digamma, gammaln
from popvb.inference import (ALGORITHMS, EngineState, OptimizerConfig,
                             estimate_felbo, initialize_engine,
                             natural_gradient, popvb_step, svb_step, svi_run)
from popvb.models import Document, DpMixModel, DpMixSpec, LdaModel, LdaSpec
from popvb.streaming import StreamSource, SyntheticSpec, synthesize_stream

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "Document",
    "DpMixModel",
    "DpMixSpec",
    "EngineState",
    "LdaModel",
    "LdaSpec",
    "OptimizerConfig",
    "StreamSource",
    "SyntheticSpec",
    "backend_name",
    "digamma",
    "estimate_felbo",
    "gammaln",
    "initialize_engine",
    "natural_gradient",
    "popvb_step",
    "svb_step",
    "svi_run",
    "synthesize_stream",
    "__version__",
]
