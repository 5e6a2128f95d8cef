"""Pure-numpy implementations of the hot kernels.

These are the fallback twins of the jitted kernels in ``_kernels_numba``;
``popvb.backend`` picks one module at import time.  Both backends share the
same series: digamma and log-gamma push the argument above 10 with the
recurrences psi(x) = psi(x+1) - 1/x and lnGamma(x) = lnGamma(x+1) - ln(x),
then evaluate the de Moivre asymptotic expansion.
"""

import numpy as np

# Bernoulli-number coefficients of the digamma asymptotic tail, highest
# order first: psi(x) ~ ln x - 1/(2x) - z*poly(z) with z = 1/x^2.
_PSI_TAIL = (
    8.33333333333333333333e-2,   # B14 / 14
    -2.10927960927960927961e-2,  # B12 / 12
    7.57575757575757575758e-3,   # B10 / 10
    -4.16666666666666666667e-3,  # B8 / 8
    3.96825396825396825397e-3,   # B6 / 6
    -8.33333333333333333333e-3,  # B4 / 4
    8.33333333333333333333e-2,   # B2 / 2
)

# Stirling-series coefficients for log-gamma, highest order first:
# lnGamma(x) ~ (x - 1/2) ln x - x + ln(2 pi)/2 + u*poly(u^2) with u = 1/x.
_LNG_TAIL = (
    8.41750841750841750842e-4,   # 1/1188
    -5.95238095238095238095e-4,  # -1/1680
    7.93650793650793650794e-4,   # 1/1260
    -2.77777777777777777778e-3,  # -1/360
    8.33333333333333333333e-2,   # 1/12
)

_HALF_LOG_2PI = 0.918938533204672741780329736406

_SHIFT = 10.0


def digamma(x):
    """Elementwise digamma for positive arguments; nan outside the domain."""
    arr = np.array(x, dtype=np.float64, copy=True)
    scalar = arr.ndim == 0
    work = np.atleast_1d(arr)
    out = np.zeros_like(work)
    bad = ~(work > 0.0)
    if bad.any():
        out[bad] = np.nan
        work[bad] = _SHIFT
    # At most ten recurrence steps lift any positive argument above 10.
    for _ in range(10):
        small = work < _SHIFT
        if not small.any():
            break
        out[small] -= 1.0 / work[small]
        work[small] += 1.0
    z = 1.0 / (work * work)
    poly = np.full_like(work, _PSI_TAIL[0])
    for c in _PSI_TAIL[1:]:
        poly = poly * z + c
    out += np.log(work) - 0.5 / work - z * poly
    return float(out[0]) if scalar else out.reshape(arr.shape)


def gammaln(x):
    """Elementwise log-gamma for positive arguments; nan outside the domain."""
    arr = np.array(x, dtype=np.float64, copy=True)
    scalar = arr.ndim == 0
    work = np.atleast_1d(arr)
    out = np.zeros_like(work)
    bad = ~(work > 0.0)
    if bad.any():
        out[bad] = np.nan
        work[bad] = _SHIFT
    for _ in range(10):
        small = work < _SHIFT
        if not small.any():
            break
        out[small] -= np.log(work[small])
        work[small] += 1.0
    u = 1.0 / work
    z = u * u
    poly = np.full_like(work, _LNG_TAIL[0])
    for c in _LNG_TAIL[1:]:
        poly = poly * z + c
    out += (work - 0.5) * np.log(work) - work + _HALF_LOG_2PI + u * poly
    return float(out[0]) if scalar else out.reshape(arr.shape)


def lda_doc_fixed_point(counts, elog_beta_doc, gamma_prior, token_total,
                        tol, max_iters):
    """Per-document coordinate ascent for the LDA local variables.

    counts: (W,) float64 token counts over the document's distinct words.
    elog_beta_doc: (W, K) expected log word probabilities for those words.
    Returns (gamma, phi, n_iters, converged) where gamma is (K,) and phi is
    (W, K) with rows summing to one.
    """
    W, K = elog_beta_doc.shape
    gamma = np.full(K, gamma_prior + token_total / K)
    phi = np.zeros((W, K))
    if W == 0:
        return gamma, phi, 0, True
    c = counts[:, None]
    n_iters = 0
    converged = False
    while n_iters < max_iters:
        elog_theta = digamma(gamma) - digamma(gamma.sum())
        scores = elog_theta[None, :] + elog_beta_doc
        scores -= scores.max(axis=1, keepdims=True)
        phi = np.exp(scores)
        phi /= phi.sum(axis=1, keepdims=True)
        gamma_new = gamma_prior + (c * phi).sum(axis=0)
        change = np.abs(gamma_new - gamma).mean()
        gamma = gamma_new
        n_iters += 1
        if change < tol:
            converged = True
            break
    return gamma, phi, n_iters, converged
