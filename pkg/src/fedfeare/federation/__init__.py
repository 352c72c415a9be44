"""Vertical and horizontal federated training parties."""
from .horizontal import (
    FeatureHistogram,
    HorizontalReport,
    build_local_histogram,
    run_horizontal_coordinator,
    run_horizontal_guest,
)
from .session import (
    HorizontalResult,
    VerticalResult,
    horizontal_oracle,
    run_parties,
    simulate_horizontal,
    simulate_vertical,
    split_columns,
    split_rows,
    vertical_oracle,
)
from .vertical import (
    PassiveSplitTable,
    VerticalReport,
    joint_predict_vertical,
    run_vertical_active,
    run_vertical_passive,
    serve_vertical_predict,
    substitute_thresholds,
)
