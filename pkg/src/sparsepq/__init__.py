"""Sparse product quantization for approximate nearest neighbor search.

Vectors are split into subspaces and each subvector is approximated by a
small weighted combination of learned unit-norm atoms instead of a single
centroid. Search stays table-driven: a query builds per-subspace lookup
tables once and scoring a code costs m * L multiply-adds. A classic
hard-assignment product quantizer and an inverted-file variant over
residuals ship alongside for comparison.
"""

from .codebook import (
    Codebook,
    ProductCodebook,
    kmeans_train,
    load_product_codebook,
    lloyd_kmeans,
    odl_train,
    save_product_codebook,
    train_product_codebook,
)
from .data import FormatError, GroundTruth, exact_knn, gen_gaussian, read_vecs, write_vecs
from .ivf import IVFIndex, build_ivf, ivf_search, load_ivf, save_ivf
from .kernels import ScoredId, dot, sq_l2, top_k
from .metrics import (
    RunResult,
    mean_average_precision,
    read_metrics_csv,
    recall_at_r,
    write_metrics_csv,
)
from .omp import SparseCode, distortion, omp_encode, omp_encode_batch, reconstruct
from .pq import (
    PQCodebook,
    load_pq_codebook,
    load_pq_codes,
    pq_adc_search,
    pq_encode,
    pq_mean_distortion,
    pq_reconstruct,
    pq_sdc_search,
    save_pq_codebook,
    save_pq_codes,
    train_pq_codebook,
)
from .spq import (
    SPQIndex,
    adc_search,
    adc_tables,
    build,
    load_index,
    mean_distortion,
    save_index,
    scan,
    sdc_search,
    sdc_tables,
)

__version__ = "0.1.0"
