#include "onlinefdr/core.hpp"

#include <algorithm>
#include <cmath>

namespace onlinefdr {

void ProcedureState::advance(PValue p, double alpha, std::optional<double> lambda,
                             std::optional<double> alpha_bar,
                             std::uint64_t specified_at, std::uint64_t batch,
                             std::optional<bool> is_null) {
    if (!(alpha >= 0.0)) {
        throw std::invalid_argument("threshold alpha must be nonnegative");
    }
    if (lambda && !(*lambda > 0.0 && *lambda < 1.0)) {
        throw std::invalid_argument("lambda must lie in (0, 1)");
    }
    if (stopped && alpha != 0.0) {
        throw std::logic_error("nonzero threshold appended after testing has stopped");
    }

    HypothesisRecord rec;
    rec.index = records.size() + 1;
    rec.p = p.value();
    rec.alpha = alpha;
    rec.alpha_bar = alpha_bar;
    rec.lambda = lambda;
    rec.specified_at = specified_at;
    rec.batch = batch;
    rec.is_null = is_null;
    rec.rejected = (rec.p <= alpha);

    if (rec.rejected) {
        ++rejection_count;
    }
    spent_sum += alpha;
    if (alpha_bar && lambda && rec.p > *lambda) {
        penalty_sum += *alpha_bar / (1.0 - *lambda);
    }
    records.push_back(rec);
}

std::uint64_t effective_denominator(const ProcedureState& state) {
    return std::max<std::uint64_t>(1, state.rejection_count);
}

double audit_running_sums(const ProcedureState& state) {
    std::uint64_t rejections = 0;
    double spent = 0.0;
    double penalty = 0.0;
    for (const auto& rec : state.records) {
        if (rec.rejected) ++rejections;
        spent += rec.alpha;
        if (rec.alpha_bar && rec.lambda && rec.p > *rec.lambda) {
            penalty += *rec.alpha_bar / (1.0 - *rec.lambda);
        }
    }
    double worst = std::abs(spent - state.spent_sum);
    worst = std::max(worst, std::abs(penalty - state.penalty_sum));
    worst = std::max(worst, static_cast<double>(rejections > state.rejection_count
                                                    ? rejections - state.rejection_count
                                                    : state.rejection_count - rejections));
    return worst;
}

ScheduleSpec ScheduleSpec::from_spec_times(std::vector<std::uint64_t> times) {
    ScheduleSpec schedule;
    schedule.spec_time = std::move(times);
    for (std::uint64_t i = 0; i < schedule.spec_time.size(); ++i) {
        ++schedule.group_size[schedule.spec_time[i]];
    }
    schedule.validate();
    return schedule;
}

void ScheduleSpec::validate() const {
    std::map<std::uint64_t, std::uint64_t> counts;
    for (std::uint64_t i = 0; i < spec_time.size(); ++i) {
        if (spec_time[i] >= i + 1) {
            throw std::runtime_error("specification time s_i must satisfy s_i < i");
        }
        ++counts[spec_time[i]];
    }
    if (counts != group_size) {
        throw std::runtime_error("group_size does not match the specification times");
    }
}

} // namespace onlinefdr
