from popvb.models.base import Model
from popvb.models.lda import (Document, LdaGlobalState, LdaLocalState,
                              LdaModel, LdaSpec, lda_local_step,
                              lda_suff_stats)
from popvb.models.dpmix import (DpGlobalState, DpMixModel, DpMixSpec,
                                dp_expected_log_pi, dp_local_step,
                                dp_suff_stats)

__all__ = [
    "Model",
    "Document", "LdaSpec", "LdaGlobalState", "LdaLocalState", "LdaModel",
    "lda_local_step", "lda_suff_stats",
    "DpMixSpec", "DpGlobalState", "DpMixModel",
    "dp_expected_log_pi", "dp_local_step", "dp_suff_stats",
]
