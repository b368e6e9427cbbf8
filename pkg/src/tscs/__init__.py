"""Tensor-summation compressive sensing.

Build, apply and analyze measurement operators that sum separable Kronecker
branches, study their coherence and sparse-recovery behavior, and jointly
learn the sensing weights with a proxy (learnable adjoint) operator.
"""

from .backend import backend_name, compiled_available
from .learning import (EpochMetrics, GradientBundle, LossConfig, TrainConfig,
                       TrainingDiverged, backward_input, backward_params,
                       gradient_prior, gradient_prior_grad, l1_loss,
                       load_checkpoint, save_checkpoint, train)
from .metrics import (CoherenceReport, DegenerateColumnError,
                      coherence_max_entry, mutual_coherence,
                      mutual_coherence_pair, psnr, ssim)
from .operators import (AdjointFactor, AdjointOperator, FactorMatrix,
                        ParamCount, TensorSumOperator, build_adjoint,
                        build_operator, load_operator, save_operator)
from .recovery import (GaussianSource, OmpResult, SparseVector,
                       TensorSumSource, exact_recovery_rate, omp)
from .tensor import (DEFAULT_CAP, MaterializationError, ShapeError,
                     dematricize, kron, matricize, mode_product, vec)
from .tensorfile import read_tensor, write_tensor
from .transforms import (BasisFactor, block_dct_factor, dct_matrix,
                         identity_factor)

__version__ = "0.1.0"
