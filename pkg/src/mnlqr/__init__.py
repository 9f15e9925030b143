"""Moment-based identification and distributionally robust LQR for
linear systems with multiplicative noise.

Submodules: `symm` (svec algebra), `tensor` (third-order tensors),
`cpop` (operators on symmetric matrices), `model` (mode tensors and
moment dynamics), `concentration`, `identify`, `synthesis`, `simulate`,
`experiments` and `cli`.
"""
from .errors import *  # noqa: F401,F403
from .symm import qd_matrix, sd, skron, svec, unsvec
from .tensor import (fold, matricize, mode_product, mode_vec_product, tensor_kron,
                     tensor_skron, tucker)
from .cpop import (CpOperator, adjoint, apply, adjoint_apply, compose, cp_from_modes,
                   cp_from_tensor, is_mss, lyapunov_solve, op_norm, op_norm_bound,
                   outer_spectral_radius, spectral_radius)
from .model import (GroundTruth, ModeTensor, check_model_equivalence, closed_loop,
                    model_free_basis, moment_dynamics, translate_second_moment,
                    translation_matrix)
from .concentration import (direct_moment_bound, matrix_hoeffding_radius,
                            vector_hoeffding_radius)
from .identify import (AmbiguitySet, Dataset, Generation, direct_ambiguity, ls_mean,
                       ls_second_moment, mean_ambiguity, predicted_zeta_w,
                       second_moment_ambiguity, structured_ambiguity, trivial_ambiguity,
                       zeta_w)
from .synthesis import (LqrSpec, SynthesisResult, closed_loop_cost, dr_synthesize,
                        relative_suboptimality, riccati_fixed_point,
                        structured_ce_synthesize)
from .simulate import UniformBall, gen_repeated_init, gen_rollout, gen_single_trajectory

__version__ = "0.1.0"
