#ifndef ONLINEFDR_PROCEDURES_HPP
#define ONLINEFDR_PROCEDURES_HPP

#include <functional>
#include <limits>
#include <span>
#include <string>

#include "onlinefdr/core.hpp"

namespace onlinefdr {

/// Monotone stopping caps. Fixed caps halt testing once the rejection count
/// or the stage index reaches them; the adaptive forms recompute the cap from
/// the history at every stage and must be nonincreasing in the observed
/// p-values (the verifier checks this, it is not assumed).
struct StoppingRule {
    static constexpr std::uint64_t no_limit = std::numeric_limits<std::uint64_t>::max();

    std::uint64_t max_rejections = no_limit;
    std::uint64_t max_stage = no_limit;
    std::function<std::uint64_t(const ProcedureState&)> adaptive_max_rejections;
    std::function<std::uint64_t(const ProcedureState&)> adaptive_max_stage;
};

struct ProcedureConfig {
    double level = 0.05;                                // target alpha
    double spend_fraction = 0.1;                        // pi
    std::map<std::uint64_t, double> spend_by_time;      // optional per-time pi_s
    double lambda = 0.5;
    std::vector<double> lambda_sequence;                // per-index lambda_i, 1-based
    bool penalize_with_alpha = false;                   // use alpha_i instead of alpha_bar_i in the penalty sum
    std::optional<StoppingRule> stopping;

    double pi_at(std::uint64_t s) const {
        auto it = spend_by_time.find(s);
        return it == spend_by_time.end() ? spend_fraction : it->second;
    }
    double lambda_at(std::uint64_t i) const {
        if (lambda_sequence.empty()) return lambda;
        if (i < 1 || i > lambda_sequence.size()) {
            throw std::runtime_error("no lambda specified for scheduled index " + std::to_string(i));
        }
        return lambda_sequence[i - 1];
    }
    void validate() const;
};

struct CandidatePair {
    double alpha_bar = 0.0;
    double alpha = 0.0;
};

/// alpha_t = { alpha * (1 v |R_{t-1}|) - sum_{i<=t-1} alpha_i } * pi
double lord_threshold(const ProcedureState& state, const ProcedureConfig& config);

/// alpha_bar_t = { alpha * (1 v |R_{t-1}|) - penalty sum } * (1 - lambda) * pi,
/// alpha_t = min(lambda, alpha_bar_t)
CandidatePair saffron_threshold(const ProcedureState& state, const ProcedureConfig& config);

/// The SAFFRON update with lambda_t tied to the step's own candidate
/// (lambda_t = alpha_bar_t), solved in closed form.
CandidatePair alpha_investing_threshold(const ProcedureState& state, const ProcedureConfig& config);

/// Single-threshold evaluation of the planning-ahead rules. `state_at_s`
/// holds exactly the first s_t observations; `assigned_alpha[i-1]` carries
/// the thresholds already fixed for indices with s_i < s_t (and may contain
/// entries for future indices i > s_t).
double planned_lord_threshold(const ProcedureState& state_at_s, const ScheduleSpec& schedule,
                              const ProcedureConfig& config, std::uint64_t t,
                              const std::vector<std::optional<double>>& assigned_alpha);

CandidatePair planned_saffron_threshold(const ProcedureState& state_at_s, const ScheduleSpec& schedule,
                                        const ProcedureConfig& config, std::uint64_t t,
                                        const std::vector<std::optional<double>>& assigned_alpha);

/// Applies the stopping indicators to a monotone base threshold. Returns 0
/// and latches state.stopped once either indicator fails; later stages then
/// return 0 regardless of the caps.
double apply_stopping(const StoppingRule& rule, ProcedureState& state,
                      double base_threshold, std::uint64_t t);

enum class ProcedureKind {
    lord,
    saffron,
    alpha_investing,
    planned_lord,
    planned_saffron,
    nonmono_strawman,   // negative control: halts on a raw p-value trigger
};

enum class Family { lord_family, saffron_family };

Family family_of(ProcedureKind kind);
std::string to_string(ProcedureKind kind);
ProcedureKind procedure_from_name(const std::string& name);

struct ProcedureDefinition {
    ProcedureKind kind = ProcedureKind::lord;
    ProcedureConfig config;
    std::optional<ScheduleSpec> schedule;   // required for planned variants
};

/// Runs a full p-value stream through the composed procedure (threshold rule
/// plus any stopping wrapper) and returns the final state. Planned variants
/// assign thresholds group by group in increasing specification time, using
/// O(1) amortized incremental wealth bookkeeping.
ProcedureState run_stream(const ProcedureDefinition& definition, std::span<const double> p_values,
                          const std::vector<bool>* is_null = nullptr);

} // namespace onlinefdr

#endif
