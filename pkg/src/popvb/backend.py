"""Kernel backend selection.

The hot kernels (digamma, log-gamma, the per-document LDA fixed point) ship
in two implementations: numba-jitted loops and pure-numpy vectorized code.
The ``POPVB_BACKEND`` environment variable picks one when the package is
imported:

    POPVB_BACKEND=numba    require numba; raise if it is not importable
    POPVB_BACKEND=numpy    force the pure-numpy fallback
    unset or "auto"        numba when importable, numpy otherwise

``benchmarks/bench_kernels.py`` times the two paths against each other.
"""

import os

_choice = os.environ.get("POPVB_BACKEND", "auto").strip().lower()
if _choice not in ("auto", "numba", "numpy"):
    raise RuntimeError(
        "POPVB_BACKEND must be 'numba', 'numpy', or unset; got %r" % _choice)

if _choice == "numpy":
    _name = "numpy"
else:
    try:
        import numba  # noqa: F401
        _name = "numba"
    except ImportError:
        if _choice == "numba":
            raise
        _name = "numpy"

if _name == "numba":
    from popvb import _kernels_numba as _kernels
else:
    from popvb import _kernels_numpy as _kernels

digamma = _kernels.digamma
gammaln = _kernels.gammaln
lda_doc_fixed_point = _kernels.lda_doc_fixed_point


def backend_name():
    """Name of the active kernel backend, 'numba' or 'numpy'."""
    return _name
