"""Two-timescale movable-antenna MU-MIMO design.

Large timescale: antenna positions are optimized from statistical CSI for
either matched-filter or zero-forcing beamforming.  Small timescale: the
beamformers themselves are computed from instantaneous channel draws.  The
``experiments`` module orchestrates scenario sweeps and Monte-Carlo
validation of every closed-form rate expression.
"""

from .ao import OptimizerTrace, TraceStep, optimize_positions
from .beamforming import (
    RateReport,
    mrt_beamformer,
    mrt_optimized_power,
    rate_report,
    water_fill,
    wmmse_baseline,
    zf_beamformer,
    zf_directions,
    zf_waterfilling_power,
)
from .channel import (
    AntennaLayout,
    Region,
    SystemConfig,
    UserStats,
    check_layout,
    direction_vector,
    fpa_grid_layout,
    grid_shape,
    large_scale_fading,
    los_matrix,
    los_steering,
    min_spacing,
    random_feasible_layout,
    region_half_widths,
    sample_channel,
    sample_channels,
    user_directions,
)
from .ergodic import (
    ErgodicReport,
    ZfStatsCache,
    mc_ergodic_rate,
    mrt_ergodic_approx,
    zf_ergodic_lower_bound,
    zf_sigma,
)
from .mrt_optimizer import MrtSurrogateTerms, mrt_subproblem, mrt_terms, optimize_mrt
from .subsolver import (
    Subproblem2D,
    SubsolveResult,
    linearize_distance_constraints,
    maximize,
    project_to_constraints,
)
from .zf_optimizer import (
    ZfPerAntennaCache,
    ZfSurrogateTerms,
    optimize_zf,
    per_antenna_cache,
    rate_bound_from_cache,
    zf_subproblem,
    zf_surrogate_terms,
)

__version__ = "0.1.0"
