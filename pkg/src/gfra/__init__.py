"""Success probability of grant-free random access with massive MIMO.

Closed-form success probabilities for conjugate and zero-forcing
receive beamforming, upper bounds and baselines, and a Monte Carlo
link-level simulator of the random-access slot that cross-validates
every formula.  See the `gfra` CLI for sweeps, figure/table
reproduction, and diagnostics.
"""

from .analytic import (
    BeamformerKind,
    CbPdfParams,
    SystemParams,
    cb_asymptotic_sinr,
    cb_conditional_success,
    cb_interference_cdf,
    cb_success,
    eta_at_target,
    eta_at_target_from_samples,
    eud_limit,
    eud_success,
    gap_to_eud,
    infinite_preamble_success,
    mimo_gain,
    single_antenna_success,
    zf_conditional_success,
    zf_success,
)
from .mcsim import (
    ChannelModel,
    CorrelatedRayleigh,
    DiagnosticSample,
    IidRayleigh,
    McEstimate,
    PreambleAssignment,
    TrialOutcome,
    UserMode,
    assign_preambles,
    cb_sinr,
    collect_diagnostics,
    draw_cochannel_count,
    estimate_basis,
    gen_channels,
    run_single_antenna_trials,
    run_trial,
    run_trials,
    zf_sinr,
)
from .specfun import (
    OccupancyTable,
    binomial_pmf,
    log_factorial,
    occupancy_no_tag_collision,
    regularized_upper_gamma_int,
    stirling2_exact,
)

__version__ = "0.1.0"
