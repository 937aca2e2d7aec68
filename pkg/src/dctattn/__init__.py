"""DCT-initialized and DCT-compressed window attention, with cost and spectral analyses."""

from .attention import AttentionConfig, AttentionWeights, msa_backward, msa_forward, partition, reverse
from .compressed import (
    CompressedWeights,
    InitTarget,
    Variant,
    compressed_backward,
    compressed_forward,
    conjugate_tau1,
    dct_init,
    fuse_output,
    truncate_no_dct_forward,
)
from .cost import block_mults, block_params, fusion_break_even, model_totals
from .dense import MulCounter, jacobi_eigh, matmul, softmax_rows, trunc_normal_init, unitary_dft
from .transform import (
    dct_matrix,
    energy_compaction,
    klt_compare,
    spectral_coverage,
    toeplitz_cov,
    truncate,
)

__version__ = "0.1.0"
