"""U-statistics and an independence test for left-truncated, right-censored
competing-risks data."""

from .core import (
    LtrcObservation,
    LtrcSample,
    StepFunction,
    censor_count,
    failure_count,
    risk_set_size,
    validate_sample,
)
from .crtest import (
    PSI,
    TestResult,
    delta_hat_fast,
    delta_hat_naive,
    psi1_hat,
    psi_kernel,
    run_test,
    test_variance,
)
from .errors import InputError, LtrcError, NumericError
from .estimators import (
    censor_cum_hazard,
    censor_survival,
    cumulative_incidence,
    failure_survival,
    ipcw_weights,
    sub_distribution,
)
from .ingest import ingest_transformer, load_transformer, read_ltrc_csv, write_ltrc_csv
from .ustat import Kernel, VarianceEstimate, h1_hat, u_statistic, variance_estimate, w_hat

__version__ = "0.1.0"
