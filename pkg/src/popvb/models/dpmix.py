"""Truncated stick-breaking mixture adapter.

Mixing weights come from stick fractions v_k ~ Beta(1, stick_eta) with the
final stick pinned to one; component parameters are either Gaussians with
known per-dimension precision (vector data) or Dirichlet rows over a
vocabulary (document data).  Local state for one observation is a
responsibility vector over the truncation.

Gaussian components keep two global blocks: the tau-scaled moment sums
("components", shape K x D) and the matching pseudo-counts
("component_counts", shape K).  Together they are the conjugate natural
parameters of the component means: mean_k = u_k / (n_k * tau) with variance
1 / (n_k * tau).  Dirichlet components need no count block because the
per-token categorical log-normalizer vanishes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from popvb.backend import digamma
from popvb.expfam import (DIRICHLET, GAUSSIAN, FamilyKind, SuffStats,
                          dirichlet_expectation, dirichlet_kl,
                          gaussian_mean_kl)
from popvb.models.base import Model
from popvb.models.lda import _dir_log_norm

_LOG_2PI = 1.8378770664093454835606594728112


@dataclass(frozen=True)
class DpMixSpec:
    """Truncation size, stick concentration, and the component family.

    component_prior holds one instance of the component family's natural
    parameters: tau * prior_mean for Gaussians (per dimension), prior
    pseudo-counts for Dirichlet components.  prior_count is the Gaussian
    conjugate pseudo-count (ignored for Dirichlet components).
    conditioned_dims names observation dimensions the predictive
    conditions on instead of scoring (Gaussian components only).
    """

    n_components: int
    stick_eta: float
    component_family: FamilyKind
    component_prior: np.ndarray
    prior_count: float = 1.0
    conditioned_dims: tuple[int, ...] = ()

    def __post_init__(self):
        if self.n_components < 1:
            raise ValueError("need at least one component")
        if self.stick_eta <= 0:
            raise ValueError("stick_eta must be positive")
        if self.component_family.tag not in (GAUSSIAN, DIRICHLET):
            raise ValueError("components must be Gaussian or Dirichlet")
        prior = np.asarray(self.component_prior, dtype=np.float64)
        if prior.shape != (self.component_family.n_coords,):
            raise ValueError("component_prior must have shape (%d,)"
                             % self.component_family.n_coords)
        if self.component_family.tag == DIRICHLET and not (prior > 0).all():
            raise ValueError("Dirichlet prior pseudo-counts must be positive")
        if self.component_family.tag == GAUSSIAN and self.prior_count <= 0:
            raise ValueError("prior_count must be positive")
        dims = tuple(int(d) for d in self.conditioned_dims)
        if dims:
            if self.component_family.tag != GAUSSIAN:
                raise ValueError("conditioning applies to Gaussian data only")
            if len(set(dims)) != len(dims):
                raise ValueError("conditioned_dims repeats a dimension")
            if min(dims) < 0 or max(dims) >= self.component_family.dim:
                raise ValueError("conditioned_dims out of range")
            if len(dims) >= self.component_family.dim:
                raise ValueError("conditioning must leave a target dimension")
        object.__setattr__(self, "component_prior", prior)
        object.__setattr__(self, "conditioned_dims", dims)

    @property
    def is_gaussian(self):
        return self.component_family.tag == GAUSSIAN

    @property
    def obs_dim(self):
        return self.component_family.dim


@dataclass(frozen=True, eq=False)
class DpGlobalState:
    """Stick Beta parameters, component blocks, and derived caches."""

    stick: np.ndarray                 # (K-1, 2) pseudo-counts
    comp: np.ndarray                  # (K, D) moments or (K, V) pseudo-counts
    comp_count: np.ndarray | None     # (K,) Gaussian pseudo-counts
    elog_pi: np.ndarray               # (K,)
    comp_mean: np.ndarray | None      # (K, D) Gaussian posterior means
    comp_var: np.ndarray | None       # (K, D) Gaussian posterior variances
    elog_comp: np.ndarray | None      # (K, V) Dirichlet E[log beta]
    comp_prob: np.ndarray | None      # (K, V) Dirichlet posterior means

    @classmethod
    def build(cls, stick, comp, comp_count, spec):
        stick = np.asarray(stick, dtype=np.float64)
        comp = np.asarray(comp, dtype=np.float64)
        elog_pi = dp_expected_log_pi(stick, spec.n_components)
        if spec.is_gaussian:
            comp_count = np.asarray(comp_count, dtype=np.float64)
            tau = spec.component_family.precision()
            denom = comp_count[:, None] * tau[None, :]
            return cls(stick, comp, comp_count, elog_pi,
                       comp / denom, 1.0 / denom, None, None)
        return cls(stick, comp, None, elog_pi, None, None,
                   dirichlet_expectation(comp),
                   comp / comp.sum(axis=1, keepdims=True))


def dp_expected_log_pi(stick, n_components):
    """E[log pi_k] under the stick posteriors, final stick pinned to one."""
    out = np.zeros(n_components)
    if n_components == 1:
        return out
    a = stick[:, 0]
    b = stick[:, 1]
    both = digamma(a + b)
    elog_v = digamma(a) - both
    elog_rest = digamma(b) - both
    carried = np.concatenate(([0.0], np.cumsum(elog_rest)))
    out[:-1] = elog_v + carried[:-1]
    out[-1] = carried[-1]
    return out


def stick_mean_weights(stick, n_components):
    """Plug-in mixture weights from posterior stick means E[v_k]."""
    if n_components == 1:
        return np.ones(1)
    mean_v = stick[:, 0] / stick.sum(axis=1)
    survive = np.concatenate(([1.0], np.cumprod(1.0 - mean_v)))
    out = np.empty(n_components)
    out[:-1] = mean_v * survive[:-1]
    out[-1] = survive[-1]
    return out


def _gaussian_expected_loglik(points, state, spec):
    """(B, K) rows of E_q[log p(x | component k)] for vector data."""
    tau = spec.component_family.precision()
    const = 0.5 * float((np.log(tau) - _LOG_2PI).sum())
    diff = points[:, None, :] - state.comp_mean[None, :, :]
    quad = (diff * diff * tau[None, None, :]).sum(axis=2)
    smear = (tau[None, :] * state.comp_var).sum(axis=1)
    return const - 0.5 * (quad + smear[None, :])


def _doc_expected_loglik(docs, state, spec):
    """(B, K) rows of per-token E_q[log p(doc | component k)]."""
    out = np.empty((len(docs), spec.n_components))
    for i, doc in enumerate(docs):
        if doc.n_distinct:
            out[i] = state.elog_comp[:, doc.ids] @ doc.counts.astype(float)
        else:
            out[i] = 0.0
    return out


def _batch_expected_loglik(batch, state, spec):
    if spec.is_gaussian:
        points = np.asarray(batch, dtype=np.float64).reshape(len(batch), -1)
        if points.shape[1] != spec.obs_dim:
            raise ValueError("observations must have %d dimensions"
                             % spec.obs_dim)
        return _gaussian_expected_loglik(points, state, spec)
    return _doc_expected_loglik(batch, state, spec)


def _responsibilities(scores):
    shifted = scores - scores.max(axis=1, keepdims=True)
    r = np.exp(shifted)
    r /= r.sum(axis=1, keepdims=True)
    return r


def dp_batch_local_step(batch, state, spec):
    """Responsibility matrix (B, K) for a minibatch."""
    scores = state.elog_pi[None, :] + _batch_expected_loglik(batch, state,
                                                             spec)
    return _responsibilities(scores)


def dp_local_step(obs, state, spec):
    """Responsibilities (K,) for a single observation."""
    return dp_batch_local_step([obs], state, spec)[0]


def _stick_stats_from_totals(r_total, n_components):
    """Stick rows (sum of r_k, sum of r past k) from summed responsibilities."""
    if n_components == 1:
        return np.zeros((0, 2))
    tail = np.cumsum(r_total[::-1])[::-1]
    return np.column_stack((r_total[:-1], tail[1:]))


def dp_suff_stats(obs, r, spec):
    """Sufficient statistics for one observation given its responsibilities.

    Returns named blocks: "sticks" (K-1, 2), "components" (K x coords), and
    for Gaussian components the pseudo-count block "component_counts" (K,).
    """
    r = np.asarray(r, dtype=np.float64)
    blocks = {"sticks": SuffStats(FamilyKind.beta(),
                                  _stick_stats_from_totals(r,
                                                           spec.n_components),
                                  1.0)}
    if spec.is_gaussian:
        point = np.asarray(obs, dtype=np.float64)
        tau = spec.component_family.precision()
        blocks["components"] = SuffStats(
            spec.component_family, r[:, None] * (tau * point)[None, :], 1.0)
        blocks["component_counts"] = SuffStats(None, r.copy(), 1.0)
    else:
        values = np.zeros((spec.n_components, spec.obs_dim))
        if obs.n_distinct:
            values[:, obs.ids] = np.outer(r, obs.counts.astype(float))
        blocks["components"] = SuffStats(spec.component_family, values, 1.0)
    return blocks


def _plugin_log_density(points, state, spec, dims):
    """(B, K) plug-in Gaussian log densities over a subset of dimensions."""
    tau = spec.component_family.precision()[list(dims)]
    mean = state.comp_mean[:, list(dims)]
    x = points[:, list(dims)]
    const = 0.5 * float((np.log(tau) - _LOG_2PI).sum())
    diff = x[:, None, :] - mean[None, :, :]
    return const - 0.5 * (diff * diff * tau[None, None, :]).sum(axis=2)


def _logsumexp_rows(m):
    top = m.max(axis=1, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    return (top + np.log(np.exp(m - top).sum(axis=1, keepdims=True)))[:, 0]


def dp_predictive_score(state, datum, spec):
    """Held-out log density of one item under plug-in posterior means.

    Gaussian data: weights are posterior-mean mixture weights, reweighted by
    the component densities on the conditioned dimensions when configured;
    the remaining dimensions are scored.  Document data: responsibilities
    inferred from the first half weight per-token probabilities on the
    second half.  Returns (log_lik_sum, n_units).
    """
    if spec.is_gaussian:
        point = np.asarray(datum, dtype=np.float64).reshape(1, -1)
        with np.errstate(divide="ignore"):
            log_w = np.log(stick_mean_weights(state.stick,
                                              spec.n_components))
        cond = spec.conditioned_dims
        target = tuple(d for d in range(spec.obs_dim) if d not in cond)
        if cond:
            log_w = log_w + _plugin_log_density(point, state, spec, cond)[0]
            log_w = log_w - _logsumexp_rows(log_w[None, :])[0]
        score = _logsumexp_rows(
            (log_w[None, :] + _plugin_log_density(point, state, spec,
                                                  target)))[0]
        return float(score), 1
    half_infer, half_score = datum
    if half_score.token_total == 0:
        return 0.0, 0
    r = dp_local_step(half_infer, state, spec)
    probs = r @ state.comp_prob[:, half_score.ids]
    with np.errstate(divide="ignore"):
        total = float((half_score.counts * np.log(probs)).sum())
    return total, int(half_score.token_total)


class DpMixModel(Model):
    """Adapter wiring the mixture operations into the optimizer contract."""

    def __init__(self, spec):
        self.spec = spec
        self.needs_split = not spec.is_gaussian

    # -- state plumbing ----------------------------------------------------

    def init_state(self, rng, from_prior_exactly=False):
        spec = self.spec
        K = spec.n_components
        stick = np.tile([1.0, spec.stick_eta], (K - 1, 1))
        if spec.is_gaussian:
            tau = spec.component_family.precision()
            counts = np.full(K, spec.prior_count)
            if from_prior_exactly:
                comp = np.tile(spec.prior_count * spec.component_prior,
                               (K, 1))
            else:
                prior_mean = spec.component_prior / tau
                sd = np.sqrt(1.0 / (spec.prior_count * tau))
                means = prior_mean + sd * rng.standard_normal((K, tau.size))
                comp = counts[:, None] * tau[None, :] * means
            return DpGlobalState.build(stick, comp, counts, spec)
        if from_prior_exactly:
            comp = np.tile(spec.component_prior, (K, 1))
        else:
            comp = spec.component_prior + rng.uniform(
                0.0, 0.1, size=(K, spec.obs_dim))
        return DpGlobalState.build(stick, comp, None, spec)

    def prior_blocks(self):
        spec = self.spec
        K = spec.n_components
        blocks = {"sticks": np.tile([1.0, spec.stick_eta], (K - 1, 1))}
        if spec.is_gaussian:
            blocks["components"] = np.tile(
                spec.prior_count * spec.component_prior, (K, 1))
            blocks["component_counts"] = np.full(K, spec.prior_count)
        else:
            blocks["components"] = np.tile(spec.component_prior, (K, 1))
        return blocks

    def state_blocks(self, state):
        blocks = {"sticks": state.stick, "components": state.comp}
        if self.spec.is_gaussian:
            blocks["component_counts"] = state.comp_count
        return blocks

    def rebuild_state(self, blocks):
        return DpGlobalState.build(blocks["sticks"], blocks["components"],
                                   blocks.get("component_counts"), self.spec)

    def positive_blocks(self):
        if self.spec.is_gaussian:
            return frozenset(["sticks", "component_counts"])
        return frozenset(["sticks", "components"])

    # -- optimization ------------------------------------------------------

    def batch_stats(self, batch, state, workers=1):
        spec = self.spec
        R = dp_batch_local_step(batch, state, spec)
        totals = R.sum(axis=0)
        B = float(len(batch))
        blocks = {"sticks": SuffStats(
            FamilyKind.beta(),
            _stick_stats_from_totals(totals, spec.n_components), B)}
        if spec.is_gaussian:
            points = np.asarray(batch, dtype=np.float64).reshape(len(batch),
                                                                 -1)
            tau = spec.component_family.precision()
            blocks["components"] = SuffStats(
                spec.component_family, R.T @ (points * tau[None, :]), B)
            blocks["component_counts"] = SuffStats(None, totals.copy(), B)
        else:
            values = np.zeros((spec.n_components, spec.obs_dim))
            for i, doc in enumerate(batch):
                if doc.n_distinct:
                    values[:, doc.ids] += np.outer(R[i],
                                                   doc.counts.astype(float))
            blocks["components"] = SuffStats(spec.component_family, values, B)
        return blocks, 0

    def predictive_score(self, state, datum):
        return dp_predictive_score(state, datum, self.spec)

    def global_divergence(self, state, mc_draws=0, rng=None):
        spec = self.spec
        if mc_draws <= 0:
            total = 0.0
            if spec.n_components > 1:
                prior = np.tile([1.0, spec.stick_eta],
                                (spec.n_components - 1, 1))
                total += float(dirichlet_kl(state.stick, prior).sum())
            if spec.is_gaussian:
                tau = spec.component_family.precision()
                prior_mean = spec.component_prior / tau
                prior_var = 1.0 / (spec.prior_count * tau)
                total += float(gaussian_mean_kl(
                    state.comp_mean, state.comp_var,
                    prior_mean[None, :], prior_var[None, :]).sum())
            else:
                total += float(dirichlet_kl(
                    state.comp, spec.component_prior[None, :]).sum())
            return total
        return self._divergence_mc(state, mc_draws, rng)

    def _divergence_mc(self, state, mc_draws, rng):
        spec = self.spec
        if rng is None:
            rng = np.random.default_rng(0)
        total = 0.0
        for k in range(spec.n_components - 1):
            a, b = state.stick[k]
            draws = rng.beta(a, b, size=mc_draws)
            draws = np.clip(draws, 1e-12, 1.0 - 1e-12)
            logq = ((a - 1.0) * np.log(draws) + (b - 1.0) * np.log1p(-draws)
                    - _dir_log_norm(np.array([a, b])))
            logp = ((spec.stick_eta - 1.0) * np.log1p(-draws)
                    - _dir_log_norm(np.array([1.0, spec.stick_eta])))
            total += float((logq - logp).mean())
        if spec.is_gaussian:
            tau = spec.component_family.precision()
            prior_mean = spec.component_prior / tau
            prior_var = 1.0 / (spec.prior_count * tau)
            for k in range(spec.n_components):
                draws = (state.comp_mean[k]
                         + np.sqrt(state.comp_var[k])
                         * rng.standard_normal((mc_draws, tau.size)))
                logq = (-0.5 * ((draws - state.comp_mean[k]) ** 2
                                / state.comp_var[k])
                        - 0.5 * np.log(2.0 * np.pi * state.comp_var[k])
                        ).sum(axis=1)
                logp = (-0.5 * ((draws - prior_mean) ** 2 / prior_var)
                        - 0.5 * np.log(2.0 * np.pi * prior_var)).sum(axis=1)
                total += float((logq - logp).mean())
        else:
            for k in range(spec.n_components):
                draws = rng.dirichlet(state.comp[k], size=mc_draws)
                draws = np.clip(draws, 1e-300, None)
                logq = (((state.comp[k] - 1.0) * np.log(draws)).sum(axis=1)
                        - _dir_log_norm(state.comp[k]))
                logp = (((spec.component_prior - 1.0)
                         * np.log(draws)).sum(axis=1)
                        - _dir_log_norm(spec.component_prior))
                total += float((logq - logp).mean())
        return total

    def datum_elbo(self, datum, state):
        spec = self.spec
        loglik = _batch_expected_loglik([datum], state, spec)[0]
        scores = state.elog_pi + loglik
        r = _responsibilities(scores[None, :])[0]
        entropy = -float(np.where(r > 0, r * np.log(r), 0.0).sum())
        return float((r * scores).sum()) + entropy
