"""Risk-set matching of a longitudinal cohort."""

from crossmatch.matching.balance import BalanceTable, standardized_difference, standardized_differences
from crossmatch.matching.cohort import (
    COVARIATES,
    FIXED_COVARIATES,
    VARYING_COVARIATES,
    WomanRecord,
    load_cohort,
    synthetic_cohort,
    write_cohort,
)
from crossmatch.matching.cox import CoxModel, fit_time_dependent_cox
from crossmatch.matching.distance import RobustMahalanobis, caliper_penalty, caliper_width, robust_mahalanobis
from crossmatch.matching.riskset import (
    MatchedPair,
    MatchResult,
    build_risk_sets,
    find_earliest_unintended_year,
    match_year,
    optimal_assignment,
    read_pairs,
    risk_set_match,
    write_pairs,
)
