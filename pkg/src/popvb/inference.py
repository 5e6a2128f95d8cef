"""Stochastic natural-gradient optimization over data streams.

The optimizer maximizes the population objective

    L(lambda) = E_q[log p(beta)] - E_q[log q(beta)]
                + alpha * E_X[ E_q[log p(X, Z | beta)] - E_q[log q(Z)] ]

where alpha is the assumed population size.  For conditionally conjugate
models the natural gradient at a minibatch of size B is

    g = zeta - lambda + (alpha / B) * sum_i E[t(x_i, Z_i)]

computed coordinate-wise across all global parameter blocks, and one step is
lambda <- lambda + rho * g.  Setting alpha to the dataset size N while
resampling minibatches from the empirical distribution recovers classic
stochastic variational inference; ``svi_run`` is exactly that code path.
``svb_step`` is the streaming-Bayes baseline: it folds the prior in once at
initialization and then only accumulates sufficient statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from popvb.expfam import SuffStats, combine_stats

PARAM_FLOOR = 1e-8

ALGORITHMS = ("popvb", "svi", "svb")


@dataclass(frozen=True)
class OptimizerConfig:
    alpha: float
    batch_size: int
    learning_rate: float = 0.05
    seed: int = 0
    algorithm: str = "popvb"
    workers: int = 1

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError("algorithm must be one of %s" % (ALGORITHMS,))
        if self.algorithm != "svb" and self.alpha < 1:
            raise ValueError("alpha must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.algorithm != "svb" and not 0 <= self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in [0, 1]")
        if self.workers < 1:
            raise ValueError("workers must be positive")


@dataclass
class RunDiagnostics:
    last_grad_norm: float = 0.0
    local_nonconverged: int = 0
    clamped_coords: int = 0


@dataclass
class EngineState:
    model_state: object
    step_count: int = 0
    data_seen: int = 0
    diagnostics: RunDiagnostics = field(default_factory=RunDiagnostics)


def initialize_engine(model, config):
    """Seeded starting state; svb copies the prior exactly, everything else
    gets the seeded jitter/sampling the model defines."""
    rng = np.random.default_rng([config.seed, 0])
    exact = config.algorithm == "svb"
    return EngineState(model.init_state(rng, from_prior_exactly=exact))


def natural_gradient(prior_blocks, current_blocks, batch_stats, alpha,
                     batch_size):
    """Noisy natural gradient: zeta - lambda + (alpha/B) * batch statistics.

    ``batch_stats`` maps block names to SuffStats whose weights must equal
    the batch size; the final short batch of a finite stream simply passes
    its own smaller B.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if set(prior_blocks) != set(current_blocks) or \
            set(current_blocks) != set(batch_stats):
        raise ValueError("parameter blocks and statistics do not line up")
    scale = alpha / batch_size
    grad = {}
    for name, stats in batch_stats.items():
        if not isinstance(stats, SuffStats):
            raise ValueError("block %r is not a statistics block" % name)
        if stats.values.shape != current_blocks[name].shape:
            raise ValueError("block %r layout mismatch: %r vs %r"
                             % (name, stats.values.shape,
                                current_blocks[name].shape))
        if abs(stats.weight - batch_size) > 1e-9:
            raise ValueError("block %r represents %.1f points, expected %d"
                             % (name, stats.weight, batch_size))
        grad[name] = (prior_blocks[name] - current_blocks[name]
                      + scale * stats.values)
    return grad


def reduce_stats(per_item_stats):
    """Left-to-right combination of per-item statistics dictionaries."""
    if not per_item_stats:
        raise ValueError("nothing to reduce")
    acc = dict(per_item_stats[0])
    for stats in per_item_stats[1:]:
        if set(stats) != set(acc):
            raise ValueError("statistics blocks do not line up")
        for name in acc:
            acc[name] = combine_stats(acc[name], stats[name])
    return acc


def popvb_step(state, minibatch, config, model):
    """One stochastic natural-gradient step against a state snapshot."""
    if not len(minibatch):
        raise ValueError("minibatch is empty")
    blocks = model.state_blocks(state.model_state)
    stats, n_bad = model.batch_stats(minibatch, state.model_state,
                                     workers=config.workers)
    grad = natural_gradient(model.prior_blocks(), blocks, stats,
                            config.alpha, len(minibatch))
    sq_norm = 0.0
    clamped = 0
    new_blocks = {}
    positive = model.positive_blocks()
    for name, g in grad.items():
        sq_norm += float((g * g).sum())
        updated = blocks[name] + config.learning_rate * g
        if name in positive:
            low = updated < PARAM_FLOOR
            clamped += int(low.sum())
            if low.any():
                updated = np.where(low, PARAM_FLOOR, updated)
        new_blocks[name] = updated
    diag = RunDiagnostics(
        last_grad_norm=math.sqrt(sq_norm),
        local_nonconverged=state.diagnostics.local_nonconverged + n_bad,
        clamped_coords=state.diagnostics.clamped_coords + clamped)
    return EngineState(model.rebuild_state(new_blocks),
                       state.step_count + 1,
                       state.data_seen + len(minibatch), diag)


def svb_step(state, minibatch, config, model):
    """Streaming accumulation: lambda grows by the batch statistics, no
    learning rate, no population rescaling.  The prior enters once, at
    initialization."""
    if not len(minibatch):
        raise ValueError("minibatch is empty")
    blocks = model.state_blocks(state.model_state)
    stats, n_bad = model.batch_stats(minibatch, state.model_state,
                                     workers=config.workers)
    new_blocks = {name: blocks[name] + stats[name].values
                  for name in blocks}
    diag = RunDiagnostics(
        last_grad_norm=0.0,
        local_nonconverged=state.diagnostics.local_nonconverged + n_bad,
        clamped_coords=state.diagnostics.clamped_coords)
    return EngineState(model.rebuild_state(new_blocks),
                       state.step_count + 1,
                       state.data_seen + len(minibatch), diag)


def svi_run(dataset, config, model, n_steps):
    """Classic SVI: alpha pinned to the dataset size, minibatches resampled
    with replacement from the empirical distribution, then the ordinary
    population update.  Returns the trajectory of engine states, initial
    state first."""
    from popvb.streaming import StreamSource

    if config.algorithm != "svi":
        raise ValueError("config.algorithm must be 'svi'")
    if config.alpha != len(dataset):
        raise ValueError("svi requires alpha == dataset size (%d), got %r"
                         % (len(dataset), config.alpha))
    step_config = replace(config, algorithm="popvb")
    source = StreamSource.resample(list(dataset), seed=[config.seed, 1])
    state = initialize_engine(model, config)
    trajectory = [state]
    for _ in range(n_steps):
        batch = source.next_minibatch(config.batch_size)
        state = popvb_step(state, batch, step_config, model)
        trajectory.append(state)
    return trajectory


def estimate_felbo(model, state, sample, alpha, mc_draws=0, rng=None):
    """Estimate the population objective from a sample of data points.

    The global term is -KL(q(globals) || prior); each sample point
    contributes its optimized local term scaled by alpha / len(sample).
    All supported families evaluate in closed form; mc_draws > 0 swaps the
    global term for a Monte-Carlo estimate (cross-checking only).
    Duplicating every sample point leaves the estimate unchanged.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    total = -model.global_divergence(state, mc_draws=mc_draws, rng=rng)
    if alpha == 0:
        return float(total)
    if not len(sample):
        raise ValueError("need at least one sample point")
    local = 0.0
    for datum in sample:
        local += model.datum_elbo(datum, state)
    return float(total + alpha * local / len(sample))


def state_is_finite(model, state):
    """True when every global parameter block is finite."""
    return all(np.isfinite(block).all()
               for block in model.state_blocks(state).values())
