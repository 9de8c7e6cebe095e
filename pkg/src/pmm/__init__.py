"""Pairwise Markov models: exact inference and risk-based hidden-path decoding."""

from .core import (
    Alphabet,
    PmmModel,
    check_marginal_markov,
    classify_model,
    reverse_chain,
    stationary_distribution,
    validate_model,
)
from .decoders import (
    HybridConfig,
    brute_force_decode,
    check_admissibility,
    find_c0,
    hybrid_decode,
    pmap_decode,
    rabiner_decode,
    viterbi_decode,
)
from .inference import (
    InferenceContext,
    forward_backward,
    forward_only_marginals,
    path_log_posterior,
    posterior_marginals,
    risks,
)

__version__ = "0.1.0"

__all__ = [
    "Alphabet",
    "PmmModel",
    "validate_model",
    "classify_model",
    "stationary_distribution",
    "reverse_chain",
    "check_marginal_markov",
    "InferenceContext",
    "forward_backward",
    "posterior_marginals",
    "forward_only_marginals",
    "path_log_posterior",
    "risks",
    "HybridConfig",
    "hybrid_decode",
    "viterbi_decode",
    "pmap_decode",
    "rabiner_decode",
    "brute_force_decode",
    "find_c0",
    "check_admissibility",
]
