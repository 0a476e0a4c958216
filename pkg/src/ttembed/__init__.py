"""Training-free token-embedding compression via tensor-train decomposition.

Each vocabulary row is folded into a small tensor, decomposed into a chain
of order-3 cores with a truncated-SVD sweep, stored in the TTEV1 container,
and reconstructed on demand.  Analytics rank candidate shapes, metrics do
the perplexity bookkeeping, and the CLI ties it together.
"""

from .tensor import DenseTensor, contract, matricize, tensorize, vectorize
from .linalg import RANK_FLOOR, TruncatedSvdResult, frobenius_norm, trunc_svd
from .tt import (
    MpsCores,
    TtConfig,
    compression_ratio_ttd,
    param_count,
    reconstruct,
    tt_svd,
)
from .vocab import (
    CompressedVocabulary,
    LayerAccounting,
    TtevFormatError,
    accounting_from_counts,
    add_token,
    compress_vocabulary,
    get_embedding,
    layer_accounting,
    load,
    save,
)
from .matio import (
    MatrixFormatError,
    read_emb1,
    read_matrix,
    write_emb1,
)
from .analytics import (
    CentreReport,
    ErrorMap,
    EvaluatedPlan,
    SearchConstraints,
    SearchResult,
    ShapeRankPlan,
    ZeroMassError,
    centre_report,
    enumerate_shapes,
    error_map,
    geometric_centre,
    mass_centre,
    search_hyperparams,
    uniform_storage_h,
)
from .metrics import (
    ScoredSequence,
    delta_log_perplexity,
    log_perplexity,
    parse_logp_text,
    perplexity,
    read_logp_file,
)
from .synthetic import gaussian_matrix, make_matrix, separable_matrix, striped_matrix

__version__ = "0.1.0"

__all__ = [
    "DenseTensor",
    "contract",
    "matricize",
    "tensorize",
    "vectorize",
    "RANK_FLOOR",
    "TruncatedSvdResult",
    "frobenius_norm",
    "trunc_svd",
    "MpsCores",
    "TtConfig",
    "compression_ratio_ttd",
    "param_count",
    "reconstruct",
    "tt_svd",
    "CompressedVocabulary",
    "LayerAccounting",
    "TtevFormatError",
    "accounting_from_counts",
    "add_token",
    "compress_vocabulary",
    "get_embedding",
    "layer_accounting",
    "load",
    "save",
    "MatrixFormatError",
    "read_emb1",
    "read_matrix",
    "write_emb1",
    "CentreReport",
    "ErrorMap",
    "EvaluatedPlan",
    "SearchConstraints",
    "SearchResult",
    "ShapeRankPlan",
    "ZeroMassError",
    "centre_report",
    "enumerate_shapes",
    "error_map",
    "geometric_centre",
    "mass_centre",
    "search_hyperparams",
    "uniform_storage_h",
    "ScoredSequence",
    "delta_log_perplexity",
    "log_perplexity",
    "parse_logp_text",
    "perplexity",
    "read_logp_file",
    "gaussian_matrix",
    "make_matrix",
    "separable_matrix",
    "striped_matrix",
    "__version__",
]
