"""Joint precoder, combiner and reflector design for RIS-assisted MIMO links."""

from .channel import (ArrayGeometry, ArrayKind, ChannelDrawConfig, ChannelSet, draw_channels,
                      near_square_upa, ula_response, upa_response)
from .harness import (ExperimentSpec, ResultRow, SpecError, SweepAxis, parse_spec, render_plot,
                      run_sweep, write_csv)
from .optimizer import (AlgorithmOptions, AlgorithmVariant, OptimizationResult,
                        OuterIterationError, compute_metrics, kkt_residual, quantize_phases,
                        run_joint_optimization)
from .oracle import phase_grid_search, waterfilling_rate
from .reflector import (RealLift, ReflectorQuadratic, build_reflector_quadratic,
                        eval_reflector_objective, lift_to_real)
from .scf import ScfState, lambda_bound, scf_solve
from .sdr import SdrSolution, build_rr, gaussian_randomize, sdr_solve, solve_unit_diag_sdp
from .wmmse import (SingularMatrixError, SystemConfig, TransceiverState, achievable_rate,
                    effective_channel, mmse_combiner, mse_matrix, precoder_update,
                    weight_update)

__version__ = "0.1.0"
