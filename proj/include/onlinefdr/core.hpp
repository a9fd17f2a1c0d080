#ifndef ONLINEFDR_CORE_HPP
#define ONLINEFDR_CORE_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

namespace onlinefdr {

/// A p-value, validated to lie in [0, 1] on construction.
class PValue {
  public:
    explicit PValue(double value) : value_(value) {
        if (!(value >= 0.0 && value <= 1.0)) {
            throw std::invalid_argument("p-value must lie in [0, 1]");
        }
    }
    double value() const { return value_; }

  private:
    double value_;
};

/// One completed test: the p-value, the threshold it was compared against,
/// and the bookkeeping fields the threshold rules need later.
struct HypothesisRecord {
    std::uint64_t index = 0;                 // stage t, 1-based
    double p = 0.0;
    double alpha = 0.0;                      // threshold alpha_t
    std::optional<double> alpha_bar;         // candidate before the min with lambda
    std::optional<double> lambda;            // lambda_t, when the rule uses one
    std::uint64_t specified_at = 0;          // s_t
    std::uint64_t batch = 1;                 // b_t
    bool rejected = false;
    std::optional<bool> is_null;             // simulation ground truth
};

/// Sequential wealth-accounting state. Append-only: decisions are never
/// revisited once made.
struct ProcedureState {
    double level = 0.05;
    std::vector<HypothesisRecord> records;
    std::uint64_t rejection_count = 0;
    double spent_sum = 0.0;                  // sum of alpha_i
    double penalty_sum = 0.0;                // sum of alpha_bar_i * 1(P_i > lambda_i) / (1 - lambda_i)
    bool stopped = false;

    std::uint64_t size() const { return records.size(); }

    /// Appends one decision. Rejection is inclusive: p equal to alpha rejects.
    void advance(PValue p, double alpha, std::optional<double> lambda = std::nullopt,
                 std::optional<double> alpha_bar = std::nullopt,
                 std::uint64_t specified_at = 0, std::uint64_t batch = 1,
                 std::optional<bool> is_null = std::nullopt);
};

std::uint64_t effective_denominator(const ProcedureState& state);

/// Recomputes rejection_count, spent_sum and penalty_sum from the record
/// history and compares against the incrementally maintained fields.
/// Returns the largest absolute discrepancy found.
double audit_running_sums(const ProcedureState& state);

/// Specification times: s_i is the stage by which the parameters for test i
/// must be fixed; group_size(s) counts the thresholds determined at time s.
/// s_i need not be monotone in i.
struct ScheduleSpec {
    std::vector<std::uint64_t> spec_time;            // spec_time[i-1] = s_i
    std::map<std::uint64_t, std::uint64_t> group_size;

    static ScheduleSpec from_spec_times(std::vector<std::uint64_t> times);

    std::uint64_t size() const { return spec_time.size(); }
    std::uint64_t s(std::uint64_t i) const { return spec_time.at(i - 1); }
    void validate() const;
};

} // namespace onlinefdr

#endif
