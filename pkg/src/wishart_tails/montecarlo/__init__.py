from .linalg import (
    NumericError,
    gram,
    hermitian_eig,
    jacobi_eig,
    sinr_all_streams,
    sinr_mmse,
    sinr_zf,
    weights_from_eig,
    wishart_eig,
)
from .rng import DRAWS_PER_STREAM, channel_block, sample_channel, stream_plan
from .simulate import (
    ConditionalWeightStats,
    EmptyBinWarning,
    Histogram,
    MomentSummary,
    SinrSample,
    default_window,
    draw_sample,
    histogram,
    run_conditional_weights,
    run_histogram,
    simulate_z,
    summarize,
)
from .stats import chi_square, histogram_tv, ks_critical, ks_statistic, tv_distance
