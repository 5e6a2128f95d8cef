"""Latent Dirichlet allocation adapter.

Topics are Dirichlet rows over the vocabulary; each document carries a
Dirichlet posterior gamma over topic proportions and per-word assignment
probabilities phi.  The local step is the usual coordinate ascent: phi from
the current gamma, gamma from the phi-weighted counts, iterated until the
mean absolute change in gamma drops below a tolerance.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from popvb.backend import gammaln, lda_doc_fixed_point
from popvb.expfam import (FamilyKind, SuffStats, dirichlet_expectation,
                          dirichlet_kl)
from popvb.models.base import Model


@dataclass(frozen=True)
class LdaSpec:
    """Model sizes and hyperparameters.

    eta is the symmetric prior pseudo-count on topic-word probabilities;
    gamma_doc the symmetric prior on per-document topic proportions.
    """

    K: int
    V: int
    eta: float = 0.01
    gamma_doc: float = 0.1
    local_tol: float = 1e-4
    local_max_iters: int = 100

    def __post_init__(self):
        if self.K < 1 or self.V < 1:
            raise ValueError("K and V must be positive")
        if self.eta <= 0 or self.gamma_doc <= 0:
            raise ValueError("eta and gamma_doc must be positive")
        if self.local_tol <= 0 or self.local_max_iters < 1:
            raise ValueError("bad local step controls")


@dataclass(frozen=True, eq=False)
class Document:
    """Bag of words: strictly increasing word ids with positive counts."""

    ids: np.ndarray
    counts: np.ndarray
    token_total: int

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        counts = np.asarray(self.counts, dtype=np.int64)
        if ids.ndim != 1 or ids.shape != counts.shape:
            raise ValueError("ids and counts must be matching 1-d arrays")
        if ids.size and (np.diff(ids) <= 0).any():
            raise ValueError("word ids must be strictly increasing")
        if ids.size and ids[0] < 0:
            raise ValueError("word ids must be nonnegative")
        if (counts <= 0).any():
            raise ValueError("counts must be positive")
        if int(counts.sum()) != self.token_total:
            raise ValueError("token_total does not match counts")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_pairs(cls, pairs):
        """Build from an iterable of (word_id, count); duplicates add up."""
        merged = {}
        for wid, cnt in pairs:
            merged[int(wid)] = merged.get(int(wid), 0) + int(cnt)
        merged = {w: c for w, c in merged.items() if c != 0}
        ids = np.array(sorted(merged), dtype=np.int64)
        counts = np.array([merged[w] for w in ids], dtype=np.int64)
        return cls(ids, counts, int(counts.sum()))

    @classmethod
    def from_tokens(cls, tokens):
        """Build from a flat token list (word ids, repeats allowed)."""
        return cls.from_pairs((int(t), 1) for t in tokens)

    @property
    def n_distinct(self):
        return self.ids.size


@dataclass(frozen=True, eq=False)
class LdaGlobalState:
    """Topic pseudo-counts (K, V) plus the cached E[log beta] table."""

    params: np.ndarray
    elog_beta: np.ndarray

    @classmethod
    def from_params(cls, params):
        params = np.asarray(params, dtype=np.float64)
        return cls(params, dirichlet_expectation(params))


@dataclass(frozen=True, eq=False)
class LdaLocalState:
    gamma: np.ndarray
    phi: np.ndarray
    n_iters: int
    converged: bool


def lda_local_step(doc, state, spec):
    """Optimize one document's local variables against a global snapshot."""
    sub = np.ascontiguousarray(state.elog_beta[:, doc.ids].T)
    counts = doc.counts.astype(np.float64)
    gamma, phi, n_iters, converged = lda_doc_fixed_point(
        counts, sub, spec.gamma_doc, float(doc.token_total),
        spec.local_tol, spec.local_max_iters)
    return LdaLocalState(gamma, phi, int(n_iters), bool(converged))


def lda_suff_stats(doc, local, spec):
    """Expected topic-word counts for one document, in the (K, V) layout."""
    values = np.zeros((spec.K, spec.V))
    if doc.n_distinct:
        values[:, doc.ids] = (local.phi * doc.counts[:, None]).T
    return SuffStats(FamilyKind.dirichlet(spec.V), values, 1.0)


def lda_doc_elbo(doc, local, state, spec):
    """Per-document objective term under converged (or given) locals:
    E[log p(theta, z, words | beta)] - E[log q(theta, z)]."""
    gamma = local.gamma
    elog_theta = dirichlet_expectation(gamma)
    prior = (gammaln(spec.K * spec.gamma_doc)
             - spec.K * gammaln(spec.gamma_doc)
             + ((spec.gamma_doc - 1.0) * elog_theta).sum())
    entropy = -(gammaln(gamma.sum()) - gammaln(gamma).sum()
                + ((gamma - 1.0) * elog_theta).sum())
    tokens = 0.0
    if doc.n_distinct:
        phi = local.phi
        scores = elog_theta[None, :] + state.elog_beta[:, doc.ids].T
        plogp = np.where(phi > 0, phi * np.log(phi), 0.0)
        tokens = float((doc.counts[:, None] * (phi * scores - plogp)).sum())
    return float(prior + entropy + tokens)


def lda_predictive_score(state, half_infer, half_score, spec):
    """Sum of per-token predictive log probabilities over the scoring half.

    Topic proportions are the posterior mean from a local step on the
    inference half; word probabilities are posterior-mean topics.
    Returns (log_lik_sum, n_tokens_scored).
    """
    if half_score.token_total == 0:
        return 0.0, 0
    local = lda_local_step(half_infer, state, spec)
    theta_bar = local.gamma / local.gamma.sum()
    beta_bar = state.params / state.params.sum(axis=1, keepdims=True)
    probs = theta_bar @ beta_bar[:, half_score.ids]
    total = float((half_score.counts * np.log(probs)).sum())
    return total, int(half_score.token_total)


class LdaModel(Model):
    """Adapter wiring the LDA operations into the optimizer contract."""

    needs_split = True

    def __init__(self, spec):
        self.spec = spec
        self._family = FamilyKind.dirichlet(spec.V)

    def init_state(self, rng, from_prior_exactly=False):
        spec = self.spec
        if from_prior_exactly:
            params = np.full((spec.K, spec.V), spec.eta)
        else:
            params = spec.eta + rng.uniform(0.0, 0.1, size=(spec.K, spec.V))
        return LdaGlobalState.from_params(params)

    def prior_blocks(self):
        spec = self.spec
        return {"topics": np.full((spec.K, spec.V), spec.eta)}

    def state_blocks(self, state):
        return {"topics": state.params}

    def rebuild_state(self, blocks):
        return LdaGlobalState.from_params(blocks["topics"])

    def positive_blocks(self):
        return frozenset(["topics"])

    def batch_stats(self, batch, state, workers=1):
        spec = self.spec

        def chunk_stats(docs):
            acc = np.zeros((spec.K, spec.V))
            bad = 0
            for doc in docs:
                local = lda_local_step(doc, state, spec)
                if not local.converged:
                    bad += 1
                if doc.n_distinct:
                    acc[:, doc.ids] += (local.phi * doc.counts[:, None]).T
            return acc, bad

        if workers <= 1 or len(batch) < 2:
            values, n_bad = chunk_stats(batch)
        else:
            n_chunks = min(workers, len(batch))
            bounds = np.linspace(0, len(batch), n_chunks + 1).astype(int)
            chunks = [batch[a:b] for a, b in zip(bounds[:-1], bounds[1:])]
            with ThreadPoolExecutor(max_workers=n_chunks) as pool:
                parts = list(pool.map(chunk_stats, chunks))
            values = np.zeros((spec.K, spec.V))
            n_bad = 0
            for part_values, part_bad in parts:
                values += part_values
                n_bad += part_bad
        stats = {"topics": SuffStats(self._family, values, float(len(batch)))}
        return stats, n_bad

    def predictive_score(self, state, datum):
        half_infer, half_score = datum
        return lda_predictive_score(state, half_infer, half_score, self.spec)

    def global_divergence(self, state, mc_draws=0, rng=None):
        spec = self.spec
        prior = np.full((spec.K, spec.V), spec.eta)
        if mc_draws <= 0:
            return float(dirichlet_kl(state.params, prior).sum())
        if rng is None:
            rng = np.random.default_rng(0)
        total = 0.0
        for k in range(spec.K):
            draws = rng.dirichlet(state.params[k], size=mc_draws)
            draws = np.clip(draws, 1e-300, None)
            logq = (((state.params[k] - 1.0) * np.log(draws)).sum(axis=1)
                    - _dir_log_norm(state.params[k]))
            logp = (((prior[k] - 1.0) * np.log(draws)).sum(axis=1)
                    - _dir_log_norm(prior[k]))
            total += float((logq - logp).mean())
        return total

    def datum_elbo(self, datum, state):
        local = lda_local_step(datum, state, self.spec)
        return lda_doc_elbo(datum, local, state, self.spec)


def _dir_log_norm(row):
    return float(gammaln(row).sum() - gammaln(row.sum()))
