"""Exponential-family primitives: natural parameters, sufficient statistics,
log-normalizers, and mean-parameter maps.

Supported families and their frozen natural-parameter layouts:

    family                  coords  layout
    ---------------------   ------  -----------------------------------------
    Dirichlet               K       pseudo-counts alpha_k, all positive
    Beta                    2       pseudo-count pair (a, b), both positive
    Categorical             V       unnormalized log-masses
    GaussianKnownPrecision  D       tau_d * mean_d, tau fixed per dimension

Log-normalizers:

    Dirichlet      a(p) = sum_k lnGamma(p_k) - lnGamma(sum_k p_k)
    Beta           a(a, b) = lnGamma(a) + lnGamma(b) - lnGamma(a + b)
    Categorical    a(p) = log sum_k exp(p_k)
    Gaussian       a(p) = sum_d p_d^2 / (2 tau_d)

``mean_params`` returns the gradient of the log-normalizer: E[log beta] for
Dirichlet, (E[log v], E[log(1 - v)]) for Beta, the softmax for Categorical,
and E[beta] for the Gaussian.  All operations are pure functions;
parameter and statistics arrays are treated as immutable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from popvb.backend import digamma, gammaln

DIRICHLET = "dirichlet"
BETA = "beta"
CATEGORICAL = "categorical"
GAUSSIAN = "gaussian_known_precision"

_TAGS = (DIRICHLET, BETA, CATEGORICAL, GAUSSIAN)


@dataclass(frozen=True)
class FamilyKind:
    """Identifies one exponential family: a tag, a dimension, and (for the
    Gaussian) the fixed per-dimension precision."""

    tag: str
    dim: int
    fixed_precision: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.tag not in _TAGS:
            raise ValueError("unknown family tag %r" % self.tag)
        if self.dim < 1:
            raise ValueError("family dim must be positive, got %d" % self.dim)
        if self.tag == BETA and self.dim != 1:
            raise ValueError("Beta is one-dimensional")
        if self.tag == GAUSSIAN:
            if self.fixed_precision is None:
                raise ValueError("GaussianKnownPrecision needs a precision")
            if len(self.fixed_precision) != self.dim:
                raise ValueError("precision length %d does not match dim %d"
                                 % (len(self.fixed_precision), self.dim))
            if any(t <= 0 for t in self.fixed_precision):
                raise ValueError("precisions must be positive")
        elif self.fixed_precision is not None:
            raise ValueError("fixed_precision only applies to the Gaussian")

    @classmethod
    def dirichlet(cls, dim):
        return cls(DIRICHLET, dim)

    @classmethod
    def beta(cls):
        return cls(BETA, 1)

    @classmethod
    def categorical(cls, dim):
        return cls(CATEGORICAL, dim)

    @classmethod
    def gaussian(cls, dim, precision):
        prec = np.broadcast_to(np.asarray(precision, dtype=np.float64),
                               (dim,))
        return cls(GAUSSIAN, dim, tuple(float(t) for t in prec))

    @property
    def n_coords(self):
        """Length of one natural-parameter vector for this family."""
        return 2 if self.tag == BETA else self.dim

    def precision(self):
        """Fixed precisions as a (dim,) array (Gaussian only)."""
        if self.tag != GAUSSIAN:
            raise ValueError("only the Gaussian has a fixed precision")
        return np.asarray(self.fixed_precision, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class NatParam:
    """One member of an exponential family, in natural coordinates."""

    family: FamilyKind
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (self.family.n_coords,):
            raise ValueError("natural parameter for %s must have shape (%d,),"
                             " got %r" % (self.family.tag,
                                          self.family.n_coords, vals.shape))
        if self.family.tag in (DIRICHLET, BETA) and not (vals > 0).all():
            raise ValueError("%s pseudo-counts must be positive"
                             % self.family.tag)
        object.__setattr__(self, "values", vals)


@dataclass(eq=False)
class SuffStats:
    """Expected sufficient statistics in the layout of the matching natural
    parameters.  ``values`` may carry leading axes (a stack of family
    instances, e.g. K x V for K Dirichlets); the trailing axis always has
    the family's coordinate count.  A ``family`` of None marks a bare
    coordinate block (e.g. conjugate pseudo-counts) with no layout rule
    beyond shape equality.  ``weight`` counts the data points the
    statistics represent."""

    family: FamilyKind | None
    values: np.ndarray
    weight: float

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if self.family is not None and (
                vals.ndim < 1 or vals.shape[-1] != self.family.n_coords):
            raise ValueError("statistics for %s must end in a %d-coordinate"
                             " axis, got shape %r" % (self.family.tag,
                                                      self.family.n_coords,
                                                      vals.shape))
        if self.weight < 0:
            raise ValueError("weight must be nonnegative")
        self.values = vals
        self.weight = float(self.weight)


def zero_stats(family, leading_shape=()):
    """An empty statistics block (all zeros, weight zero)."""
    shape = tuple(leading_shape) + (family.n_coords,)
    return SuffStats(family, np.zeros(shape), 0.0)


def combine_stats(a, b):
    """Add two statistics blocks; values add coordinate-wise, weights add."""
    if a.family != b.family:
        raise ValueError("cannot combine statistics across families: %r vs %r"
                         % (a.family, b.family))
    if a.values.shape != b.values.shape:
        raise ValueError("statistics layouts differ: %r vs %r"
                         % (a.values.shape, b.values.shape))
    return SuffStats(a.family, a.values + b.values, a.weight + b.weight)


def scale_stats(stats, c):
    """Scale a statistics block by a nonnegative constant."""
    if c < 0:
        raise ValueError("scale factor must be nonnegative, got %r" % c)
    return SuffStats(stats.family, c * stats.values, c * stats.weight)


def log_normalizer(p):
    """The log-partition function a(p) for one family member."""
    v = p.values
    tag = p.family.tag
    if tag in (DIRICHLET, BETA):
        return float(gammaln(v).sum() - gammaln(v.sum()))
    if tag == CATEGORICAL:
        top = v.max()
        return float(top + np.log(np.exp(v - top).sum()))
    tau = p.family.precision()
    return float((v * v / (2.0 * tau)).sum())


def mean_params(p):
    """Gradient of the log-normalizer at p (the mean parameters)."""
    v = p.values
    tag = p.family.tag
    if tag in (DIRICHLET, BETA):
        return digamma(v) - digamma(v.sum())
    if tag == CATEGORICAL:
        shifted = np.exp(v - v.max())
        return shifted / shifted.sum()
    return v / p.family.precision()


def log_density(p, x):
    """Log density (or mass) of one observation under the member p.

    Observation types: Categorical takes an integer token id; Beta a scalar
    in (0, 1); Dirichlet a point in the open simplex; the Gaussian a vector
    of length dim.  The categorical mass uses base measure h == 1.
    """
    v = p.values
    tag = p.family.tag
    if tag == CATEGORICAL:
        token = int(x)
        if not 0 <= token < p.family.dim:
            raise ValueError("token %d outside support [0, %d)"
                             % (token, p.family.dim))
        return float(v[token]) - log_normalizer(p)
    if tag == BETA:
        val = float(x)
        if not 0.0 < val < 1.0:
            raise ValueError("Beta observations live in (0, 1), got %r" % x)
        return float((v[0] - 1.0) * np.log(val)
                     + (v[1] - 1.0) * np.log1p(-val)) - log_normalizer(p)
    if tag == DIRICHLET:
        point = np.asarray(x, dtype=np.float64)
        if point.shape != (p.family.dim,):
            raise ValueError("Dirichlet observation must have shape (%d,)"
                             % p.family.dim)
        if not (point > 0).all() or abs(point.sum() - 1.0) > 1e-8:
            raise ValueError("Dirichlet observations live in the open simplex")
        return float(((v - 1.0) * np.log(point)).sum()) - log_normalizer(p)
    point = np.asarray(x, dtype=np.float64)
    if point.shape != (p.family.dim,):
        raise ValueError("Gaussian observation must have shape (%d,)"
                         % p.family.dim)
    tau = p.family.precision()
    quad = 0.5 * np.log(tau / (2.0 * np.pi)) - 0.5 * tau * point * point
    return float((quad + v * point).sum()) - log_normalizer(p)


# ---------------------------------------------------------------------------
# Stacked-array helpers shared by the model adapters.  Each row of the input
# is one family instance.
# ---------------------------------------------------------------------------

def dirichlet_expectation(alpha):
    """E[log beta] for Dirichlet rows: digamma(a) - digamma(row sum)."""
    alpha = np.asarray(alpha, dtype=np.float64)
    return digamma(alpha) - digamma(alpha.sum(axis=-1, keepdims=True))


def dirichlet_kl(post, prior):
    """Row-wise KL(Dir(post) || Dir(prior)) for matching stacks of rows."""
    post = np.asarray(post, dtype=np.float64)
    prior = np.broadcast_to(np.asarray(prior, dtype=np.float64), post.shape)
    post_sum = post.sum(axis=-1)
    prior_sum = prior.sum(axis=-1)
    elog = digamma(post) - digamma(post_sum)[..., None]
    return (gammaln(post_sum) - gammaln(post).sum(axis=-1)
            - gammaln(prior_sum) + gammaln(prior).sum(axis=-1)
            + ((post - prior) * elog).sum(axis=-1))


def gaussian_mean_kl(mean, var, prior_mean, prior_var):
    """Elementwise KL(N(mean, var) || N(prior_mean, prior_var))."""
    ratio = var / prior_var
    return 0.5 * (ratio + (mean - prior_mean) ** 2 / prior_var
                  - 1.0 - np.log(ratio))
