#include "onlinefdr/estimators.hpp"

#include <algorithm>
#include <cmath>

namespace onlinefdr {

namespace {

void check_prefix(const ProcedureState& state, std::uint64_t t) {
    if (t > state.size()) {
        throw std::out_of_range("prefix length exceeds the recorded history");
    }
}

std::uint64_t rejections_up_to(const ProcedureState& state, std::uint64_t t) {
    std::uint64_t r = 0;
    for (std::uint64_t i = 0; i < t; ++i) {
        if (state.records[i].rejected) ++r;
    }
    return r;
}

} // namespace

double fdp_hat_0(const ProcedureState& state, std::uint64_t t) {
    check_prefix(state, t);
    double spent = 0.0;
    for (std::uint64_t i = 0; i < t; ++i) {
        spent += state.records[i].alpha;
    }
    return spent / static_cast<double>(std::max<std::uint64_t>(1, rejections_up_to(state, t)));
}

double fdp_hat_lambda(const ProcedureState& state, std::uint64_t t) {
    check_prefix(state, t);
    double numerator = 0.0;
    for (std::uint64_t i = 0; i < t; ++i) {
        const auto& rec = state.records[i];
        if (!rec.lambda) {
            throw std::runtime_error("fdp_hat_lambda requires lambda on every record");
        }
        if (rec.p > *rec.lambda) {
            numerator += rec.alpha / (1.0 - *rec.lambda);
        }
    }
    return numerator / static_cast<double>(std::max<std::uint64_t>(1, rejections_up_to(state, t)));
}

double realized_fdp(const ProcedureState& state, std::uint64_t t) {
    check_prefix(state, t);
    std::uint64_t rejections = 0;
    std::uint64_t false_discoveries = 0;
    for (std::uint64_t i = 0; i < t; ++i) {
        const auto& rec = state.records[i];
        if (!rec.is_null) {
            throw std::runtime_error("realized_fdp requires ground truth on every record");
        }
        if (rec.rejected) {
            ++rejections;
            if (*rec.is_null) ++false_discoveries;
        }
    }
    return static_cast<double>(false_discoveries) /
           static_cast<double>(std::max<std::uint64_t>(1, rejections));
}

StreamMetrics compute_metrics(const ProcedureState& state, std::uint64_t t) {
    check_prefix(state, t);
    StreamMetrics m;
    m.t = t;
    m.fdp_hat_0 = fdp_hat_0(state, t);

    bool have_lambda = true;
    std::uint64_t false_nulls = 0;
    for (std::uint64_t i = 0; i < t; ++i) {
        const auto& rec = state.records[i];
        if (!rec.lambda) have_lambda = false;
        if (!rec.is_null) {
            throw std::runtime_error("compute_metrics requires ground truth on every record");
        }
        if (!*rec.is_null) ++false_nulls;
        if (rec.rejected) {
            ++m.rejections;
            if (!*rec.is_null) ++m.true_discoveries;
        }
    }
    m.fdp_hat_lambda = have_lambda ? fdp_hat_lambda(state, t) : 0.0;
    m.fdp = realized_fdp(state, t);
    m.power = false_nulls == 0
                  ? 0.0
                  : static_cast<double>(m.true_discoveries) / static_cast<double>(false_nulls);
    return m;
}

FdrAggregate aggregate_fdr(std::span<const StreamMetrics> runs) {
    if (runs.size() < 2) {
        throw std::invalid_argument("aggregate_fdr needs at least two replications");
    }
    const std::uint64_t t = runs.front().t;
    const double n = static_cast<double>(runs.size());

    double fdp_sum = 0.0;
    double false_sum = 0.0;
    double denom_sum = 0.0;
    for (const auto& run : runs) {
        if (run.t != t) {
            throw std::invalid_argument("all replications must be taken at the same stage");
        }
        fdp_sum += run.fdp;
        false_sum += static_cast<double>(run.rejections - run.true_discoveries);
        denom_sum += static_cast<double>(std::max<std::uint64_t>(1, run.rejections));
    }
    const double mean = fdp_sum / n;

    double ss = 0.0;
    for (const auto& run : runs) {
        ss += (run.fdp - mean) * (run.fdp - mean);
    }
    const double variance = ss / (n - 1.0);

    FdrAggregate out;
    out.fdr = mean;
    out.mcse = std::sqrt(variance / n);
    out.mfdr = false_sum / denom_sum;
    return out;
}

} // namespace onlinefdr
