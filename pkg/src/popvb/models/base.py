"""Contract between the optimizer and a concrete model.

A model owns its global variational state and exposes it to the optimizer as
named parameter blocks (plain float arrays).  The optimizer treats blocks
coordinate-wise: it forms natural gradients from prior blocks, current
blocks, and batch statistics, then hands updated blocks back through
``rebuild_state`` so the model can refresh whatever caches it keeps.  Local
steps never mutate global state; a minibatch is processed against one
snapshot and reduced to additive sufficient statistics.
"""

from abc import ABC, abstractmethod


class Model(ABC):

    #: True when held-out items are documents that the evaluation protocol
    #: must split into an inference half and a scoring half.
    needs_split = False

    @abstractmethod
    def init_state(self, rng, from_prior_exactly=False):
        """Fresh global state.  ``from_prior_exactly`` skips the seeded
        jitter/sampling and copies the prior blocks bitwise (used by the
        accumulate-only algorithm)."""

    @abstractmethod
    def prior_blocks(self):
        """Named prior parameter blocks (the zeta of the natural gradient)."""

    @abstractmethod
    def state_blocks(self, state):
        """Named current parameter blocks (the lambda)."""

    @abstractmethod
    def rebuild_state(self, blocks):
        """New global state from updated blocks, caches refreshed."""

    @abstractmethod
    def positive_blocks(self):
        """Names of blocks whose coordinates must stay strictly positive."""

    @abstractmethod
    def batch_stats(self, batch, state, workers=1):
        """Run local steps for a minibatch against one snapshot and reduce.

        Returns (stats, n_nonconverged) where stats maps block names to
        SuffStats whose weights equal the batch size.
        """

    @abstractmethod
    def predictive_score(self, state, datum):
        """Held-out log-likelihood contribution of one item.

        Returns (log_lik_sum, n_units): per-token log probabilities summed
        over the scoring half for document models (n_units = tokens scored),
        or a single log density (n_units = 1) for vector observations.
        """

    @abstractmethod
    def global_divergence(self, state, mc_draws=0, rng=None):
        """KL(q(global) || prior).  Closed form; ``mc_draws > 0`` estimates
        E_q[log q - log p] by Monte Carlo instead (cross-checking only)."""

    @abstractmethod
    def datum_elbo(self, datum, state):
        """Optimized per-item objective term: run the local step fresh and
        return E_q[log p(item, locals | globals)] - E_q[log q(locals)]."""
