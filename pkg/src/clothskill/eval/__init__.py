from .metrics import (
    MIOU_THRESHOLD,
    SUCCESS_THRESHOLD,
    WR_THRESHOLD,
    WRINKLE_TAU,
    miou,
    particle_error,
    success,
    wrinkle_recall,
)
from .benchmark import (
    BenchmarkReport,
    PolicyConfig,
    TaskRow,
    TrialResult,
    make_oracle_state,
    run_benchmark,
    run_trial,
)
