"""Numba-jitted implementations of the hot kernels.

Same series and thresholds as ``_kernels_numpy``; see that module for the
math. Importing this module requires numba.
"""

import math

import numba as nb
import numpy as np

_SHIFT = 10.0
_HALF_LOG_2PI = 0.918938533204672741780329736406

# digamma tail, highest order first (Bernoulli series, z = 1/x^2)
_P0 = 8.33333333333333333333e-2
_P1 = -2.10927960927960927961e-2
_P2 = 7.57575757575757575758e-3
_P3 = -4.16666666666666666667e-3
_P4 = 3.96825396825396825397e-3
_P5 = -8.33333333333333333333e-3
_P6 = 8.33333333333333333333e-2

# log-gamma Stirling tail, highest order first (u = 1/x, powers of u^2)
_G0 = 8.41750841750841750842e-4
_G1 = -5.95238095238095238095e-4
_G2 = 7.93650793650793650794e-4
_G3 = -2.77777777777777777778e-3
_G4 = 8.33333333333333333333e-2


@nb.njit(cache=True)
def _digamma_one(x):
    if not x > 0.0:
        return np.nan
    acc = 0.0
    while x < _SHIFT:
        acc -= 1.0 / x
        x += 1.0
    z = 1.0 / (x * x)
    poly = _P0
    poly = poly * z + _P1
    poly = poly * z + _P2
    poly = poly * z + _P3
    poly = poly * z + _P4
    poly = poly * z + _P5
    poly = poly * z + _P6
    return acc + math.log(x) - 0.5 / x - z * poly


@nb.njit(cache=True)
def _gammaln_one(x):
    if not x > 0.0:
        return np.nan
    acc = 0.0
    while x < _SHIFT:
        acc -= math.log(x)
        x += 1.0
    u = 1.0 / x
    z = u * u
    poly = _G0
    poly = poly * z + _G1
    poly = poly * z + _G2
    poly = poly * z + _G3
    poly = poly * z + _G4
    return acc + (x - 0.5) * math.log(x) - x + _HALF_LOG_2PI + u * poly


@nb.vectorize(["float64(float64)"], nopython=True, cache=True)
def digamma(x):
    return _digamma_one(x)


@nb.vectorize(["float64(float64)"], nopython=True, cache=True)
def gammaln(x):
    return _gammaln_one(x)


@nb.njit(cache=True, nogil=True)
def lda_doc_fixed_point(counts, elog_beta_doc, gamma_prior, token_total,
                        tol, max_iters):
    """Jitted twin of ``_kernels_numpy.lda_doc_fixed_point``."""
    W, K = elog_beta_doc.shape
    gamma = np.full(K, gamma_prior + token_total / K)
    phi = np.zeros((W, K))
    if W == 0:
        return gamma, phi, 0, True
    elog_theta = np.empty(K)
    gamma_new = np.empty(K)
    scores = np.empty(K)
    n_iters = 0
    converged = False
    while n_iters < max_iters:
        gsum = 0.0
        for k in range(K):
            gsum += gamma[k]
        psi_total = _digamma_one(gsum)
        for k in range(K):
            elog_theta[k] = _digamma_one(gamma[k]) - psi_total
            gamma_new[k] = gamma_prior
        for w in range(W):
            top = -np.inf
            for k in range(K):
                scores[k] = elog_theta[k] + elog_beta_doc[w, k]
                if scores[k] > top:
                    top = scores[k]
            norm = 0.0
            for k in range(K):
                val = math.exp(scores[k] - top)
                phi[w, k] = val
                norm += val
            for k in range(K):
                phi[w, k] /= norm
                gamma_new[k] += counts[w] * phi[w, k]
        change = 0.0
        for k in range(K):
            change += abs(gamma_new[k] - gamma[k])
            gamma[k] = gamma_new[k]
        n_iters += 1
        if change / K < tol:
            converged = True
            break
    return gamma, phi, n_iters, converged
