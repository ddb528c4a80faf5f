"""Learning Kronecker-structured subsampling patterns by maximizing Fisher
information, with automatic per-axis budget allocation."""

from .model import (ArrayGeometry, Dataset, FrequencyGrid, ModelContext,
                    PulseSpec, Scatterer, add_noise, forward, generate_dataset,
                    jacobian)
from .sampling import (AxisLayout, HardSelection, StructuredSelector,
                       allocation, build_mask, extract_blocks, gram,
                       gumbel_noise, harden, regularizer, soft_aux, topk_order)
from .fim import (CrbMatrix, CrbSummary, crb, crb_summary, fim, fim_trace,
                  fim_trace_hard, kron_apply, weight_tensor)
from .train import TrainConfig, TrainReport, anneal, loss, loss_gradient, train
from .baselines import (dps_topk_train, greedy_selection, jdps_train,
                        uniform_selection)
from .recovery import (Dictionary, RecoveryResult, RoiGrid, build_dictionary,
                       fista, metrics, soft_threshold)
from .config import ExperimentConfig, load_config

__version__ = "0.1.0"
