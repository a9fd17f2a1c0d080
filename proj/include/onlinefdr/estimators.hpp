#ifndef ONLINEFDR_ESTIMATORS_HPP
#define ONLINEFDR_ESTIMATORS_HPP

#include <span>

#include "onlinefdr/core.hpp"

namespace onlinefdr {

/// Per-stream metrics at a fixed stage t. fdp, true_discoveries and power
/// require ground truth on every record of the prefix.
struct StreamMetrics {
    std::uint64_t t = 0;
    double fdp_hat_0 = 0.0;
    double fdp_hat_lambda = 0.0;
    double fdp = 0.0;
    std::uint64_t rejections = 0;
    std::uint64_t true_discoveries = 0;
    double power = 0.0;
};

/// sum_{i<=t} alpha_i / (1 v |R_t|)
double fdp_hat_0(const ProcedureState& state, std::uint64_t t);

/// sum_{i<=t} alpha_i 1(P_i > lambda_i)/(1 - lambda_i) / (1 v |R_t|)
double fdp_hat_lambda(const ProcedureState& state, std::uint64_t t);

/// |H0 ∩ R_t| / (1 v |R_t|), using recorded ground truth.
double realized_fdp(const ProcedureState& state, std::uint64_t t);

/// Metrics snapshot at stage t; ground truth required.
StreamMetrics compute_metrics(const ProcedureState& state, std::uint64_t t);

struct FdrAggregate {
    double fdr = 0.0;
    double mcse = 0.0;
    double mfdr = 0.0;
};

/// Aggregates replications taken at the same stage: FDR as the mean FDP with
/// its Monte Carlo standard error, and mFDR as the ratio of means.
FdrAggregate aggregate_fdr(std::span<const StreamMetrics> runs);

} // namespace onlinefdr

#endif
