"""Learning reduced flow maps of PDE dynamics from trajectory data.

The package couples a learned (or data-derived) low-dimensional linear
basis with a memory-augmented neural flow map, trained by recurrent
rollouts through the projection. Heavy inner loops live in
flowrom.kernels with interchangeable compiled/plain backends.
"""

from .config import ExperimentConfig, load_config, resolve_config
from .datagen import (Grid, TrainingDataset, TrajectorySet, Wave2dSolverConfig,
                      add_noise, gen_heat1d, gen_wave1d, gen_wave2d,
                      halton_points, heat1d_grid, heat1d_solution,
                      sample_chunks, wave1d_grid, wave1d_v, wave1d_w,
                      wave2d_obs_grid, wave2d_solve)
from .dataio import (load_model, read_csv_columns, read_dataset, save_model,
                     write_csv, write_dataset)
from .errors import (ConfigError, DivergenceError, FlowromError, FormatError,
                     ShapeError)
from .kernels import BACKEND
from .linalg import thin_qr, thin_svd
from .models import (NodalModel, PcfmlModel, count_params, nodal_new,
                     nodal_step, pcfml_new, pcfml_step)
from .nn import Mlp, mlp_forward, mlp_init, mlp_param_count
from .reduction import (MemoryReport, ReducedBasis, SpectrumReport,
                        analyze_spectrum, assemble_data_matrix, fixed_basis,
                        memory_qr_diagnostic)
from .rng import gaussian, make_rng
from .training import (Ensemble, ErrorCurve, ModelSpec, RolloutResult,
                       TrainConfig, avg_l2_error, build_model, model_step,
                       recurrent_loss, rollout, rollout_batch, train,
                       train_ensemble)

__version__ = "0.1.0"
