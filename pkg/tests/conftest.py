"""Shared fixtures.

The backend may be the jitted one; warming its kernels once per session keeps
compilation time out of the timed tests.
"""

import numpy as np
import pytest

from popvb.backend import digamma, lda_doc_fixed_point


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    digamma(np.array([1.0, 2.5]))
    counts = np.array([2.0, 1.0])
    sub = np.ascontiguousarray(np.log(np.array([[0.6, 0.4], [0.3, 0.7]])))
    lda_doc_fixed_point(counts, sub, 0.1, 3.0, 1e-4, 50)
