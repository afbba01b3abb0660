"""Expected end yard lines, end yard-line densities and play value."""

from .density import (
    BANDWIDTH_FLOOR,
    GRID,
    DensityForest,
    YardlineDensity,
    density_modes,
    fit_yardline_density,
    kernel_mass,
    silverman_bandwidth,
)
from .framework import (
    N_CATCHERS,
    N_DEFENDERS,
    N_RECEIVERS,
    SOFTMAX_EPS,
    CatchModelOutputs,
    ConstantQbDecision,
    ContractViolation,
    DistanceTargetModel,
    DropbackContext,
    DropbackValuation,
    Leaf,
    PositionCarrierModel,
    QbDecisionDistribution,
    SeparationCatchModel,
    TargetDistribution,
    combine_dropback,
    combine_run,
    expected_end_yardline,
    softmax_normalize,
)
from .timeline import TimelineRecord, ValuationTimeline, timelines_csv, valuation_timeline, valuation_timelines
from .value_functions import (
    ExpectedPoints,
    GameState,
    LookupTable,
    Outcome,
    TableValue,
    WinProbability,
    bundled_ep_table,
    expected_play_value,
    load_value_function,
    next_state,
    value_grid,
)
