"""Descriptive statistics of reply behaviour, load and coordination."""
from .coordination import (
    CoordinationResult,
    content_similarity_curve,
    marker_coordination,
    segment_of,
    synchronization_curve,
    user_medians,
)
from .load import (
    DAILY_LOAD_COLUMNS,
    activity_tertiles,
    compute_daily_loads,
    overload_curves,
)
from .replies import GROUP_BY, MEASURES, circadian_stats, group_stats, step_stats, time_length_correlation
from .summary import (
    Distribution,
    SummaryCurve,
    curves_frame,
    distribution,
    distribution_of,
    events_frame,
    mean_curve,
    median_curve,
)
