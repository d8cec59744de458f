"""Gibbs / slice sampler for the factor-analytic mixture family."""

from .config import ADAPTIVE, KINDS, McmcControl, Model, ModelConfig
from .sampler import fit, initialize, sweep
from .state import ChainState
from .trace import ChainTrace
from .updates import (
    adapt_truncation,
    label_switch_moves,
    observed_loglik,
    reorder_by_weight,
    update_allocations,
    update_factor_scores,
    update_loadings,
    update_means,
    update_mgp,
    update_process_params,
    update_slice,
    update_sticks_and_weights,
    update_uniquenesses,
)


def count_nonempty(state):
    """Number of clusters with at least one member."""
    return state.count_nonempty()
