#include "onlinefdr/procedures.hpp"

#include <algorithm>
#include <cmath>

namespace onlinefdr {

namespace {

// A negative bracketed wealth term cannot arise from Eqs of this family;
// anything beyond roundoff indicates corrupted bookkeeping.
double clamp_wealth(double w) {
    if (w < -1e-9) {
        throw std::logic_error("negative alpha wealth: internal invariant breach");
    }
    return w > 0.0 ? w : 0.0;
}

} // namespace

void ProcedureConfig::validate() const {
    if (!(level > 0.0 && level <= 1.0)) {
        throw std::invalid_argument("level must lie in (0, 1]");
    }
    if (!(spend_fraction >= 0.0 && spend_fraction <= 1.0)) {
        throw std::invalid_argument("spend fraction must lie in [0, 1]");
    }
    for (const auto& [s, pi_s] : spend_by_time) {
        if (!(pi_s >= 0.0 && pi_s <= 1.0)) {
            throw std::invalid_argument("per-time spend fraction must lie in [0, 1]");
        }
    }
    if (!(lambda > 0.0 && lambda < 1.0)) {
        throw std::invalid_argument("lambda must lie in (0, 1)");
    }
    for (double l : lambda_sequence) {
        if (!(l > 0.0 && l < 1.0)) {
            throw std::invalid_argument("every lambda_i must lie in (0, 1)");
        }
    }
}

double lord_threshold(const ProcedureState& state, const ProcedureConfig& config) {
    const double wealth =
        config.level * static_cast<double>(effective_denominator(state)) - state.spent_sum;
    return clamp_wealth(wealth) * config.pi_at(state.size());
}

CandidatePair saffron_threshold(const ProcedureState& state, const ProcedureConfig& config) {
    const double wealth =
        config.level * static_cast<double>(effective_denominator(state)) - state.penalty_sum;
    const double pi = config.pi_at(state.size());
    const double alpha_bar = clamp_wealth(wealth) * (1.0 - config.lambda) * pi;
    return {alpha_bar, std::min(config.lambda, alpha_bar)};
}

CandidatePair alpha_investing_threshold(const ProcedureState& state, const ProcedureConfig& config) {
    // Tie lambda_t to the candidate itself: alpha_bar = W * (1 - alpha_bar) * pi,
    // which is affine in alpha_bar, so alpha_bar = W*pi / (1 + W*pi).
    const double wealth = clamp_wealth(
        config.level * static_cast<double>(effective_denominator(state)) - state.penalty_sum);
    const double wpi = wealth * config.pi_at(state.size());
    const double alpha_bar = wpi / (1.0 + wpi);
    return {alpha_bar, alpha_bar};
}

double apply_stopping(const StoppingRule& rule, ProcedureState& state,
                      double base_threshold, std::uint64_t t) {
    if (state.stopped) return 0.0;
    std::uint64_t cap_r = rule.max_rejections;
    if (rule.adaptive_max_rejections) {
        cap_r = std::min(cap_r, rule.adaptive_max_rejections(state));
    }
    std::uint64_t cap_stage = rule.max_stage;
    if (rule.adaptive_max_stage) {
        cap_stage = std::min(cap_stage, rule.adaptive_max_stage(state));
    }
    if (state.rejection_count >= cap_r || t > cap_stage) {
        state.stopped = true;
        return 0.0;
    }
    return base_threshold;
}

namespace {

void check_planned_preconditions(const ProcedureState& state_at_s, const ScheduleSpec& schedule,
                                 std::uint64_t t) {
    if (t < 1 || t > schedule.size()) {
        throw std::runtime_error("index t is not covered by the schedule");
    }
    if (state_at_s.size() != schedule.s(t)) {
        throw std::runtime_error("state must hold exactly s_t observations");
    }
}

} // namespace

double planned_lord_threshold(const ProcedureState& state_at_s, const ScheduleSpec& schedule,
                              const ProcedureConfig& config, std::uint64_t t,
                              const std::vector<std::optional<double>>& assigned_alpha) {
    check_planned_preconditions(state_at_s, schedule, t);
    const std::uint64_t s_t = schedule.s(t);
    double assigned_sum = 0.0;
    for (std::uint64_t i = 1; i <= schedule.size(); ++i) {
        if (schedule.s(i) < s_t) {
            if (i > assigned_alpha.size() || !assigned_alpha[i - 1]) {
                throw std::runtime_error("threshold for an earlier-specified index is missing");
            }
            assigned_sum += *assigned_alpha[i - 1];
        }
    }
    const double wealth = clamp_wealth(
        config.level * static_cast<double>(effective_denominator(state_at_s)) - assigned_sum);
    return wealth * config.pi_at(s_t) / static_cast<double>(schedule.group_size.at(s_t));
}

CandidatePair planned_saffron_threshold(const ProcedureState& state_at_s, const ScheduleSpec& schedule,
                                        const ProcedureConfig& config, std::uint64_t t,
                                        const std::vector<std::optional<double>>& assigned_alpha) {
    check_planned_preconditions(state_at_s, schedule, t);
    const std::uint64_t s_t = schedule.s(t);
    double penalty = 0.0;
    for (std::uint64_t i = 1; i <= schedule.size(); ++i) {
        if (schedule.s(i) >= s_t) continue;
        if (i > assigned_alpha.size() || !assigned_alpha[i - 1]) {
            throw std::runtime_error("threshold for an earlier-specified index is missing");
        }
        const double lambda_i = config.lambda_at(i);
        // Unobserved p-values (s_t < i) take the conservative indicator 1.
        const bool counted = (i > s_t) || (lambda_i < state_at_s.records[i - 1].p);
        if (counted) {
            penalty += *assigned_alpha[i - 1] / (1.0 - lambda_i);
        }
    }
    const double wealth = clamp_wealth(
        config.level * static_cast<double>(effective_denominator(state_at_s)) - penalty);
    const double lambda_t = config.lambda_at(t);
    const double alpha_bar = wealth * (1.0 - lambda_t) * config.pi_at(s_t) /
                             static_cast<double>(schedule.group_size.at(s_t));
    return {alpha_bar, std::min(lambda_t, alpha_bar)};
}

Family family_of(ProcedureKind kind) {
    switch (kind) {
        case ProcedureKind::lord:
        case ProcedureKind::planned_lord:
        case ProcedureKind::nonmono_strawman:
            return Family::lord_family;
        default:
            return Family::saffron_family;
    }
}

std::string to_string(ProcedureKind kind) {
    switch (kind) {
        case ProcedureKind::lord: return "lord";
        case ProcedureKind::saffron: return "saffron";
        case ProcedureKind::alpha_investing: return "alpha-investing";
        case ProcedureKind::planned_lord: return "planned-lord";
        case ProcedureKind::planned_saffron: return "planned-saffron";
        case ProcedureKind::nonmono_strawman: return "nonmono-strawman";
    }
    throw std::logic_error("unreachable");
}

ProcedureKind procedure_from_name(const std::string& name) {
    if (name == "lord") return ProcedureKind::lord;
    if (name == "saffron") return ProcedureKind::saffron;
    if (name == "alpha-investing") return ProcedureKind::alpha_investing;
    if (name == "planned-lord") return ProcedureKind::planned_lord;
    if (name == "planned-saffron") return ProcedureKind::planned_saffron;
    if (name == "nonmono-strawman") return ProcedureKind::nonmono_strawman;
    throw std::invalid_argument("unknown procedure: " + name);
}

namespace {

std::optional<bool> truth_at(const std::vector<bool>* is_null, std::uint64_t t) {
    if (!is_null) return std::nullopt;
    return (*is_null)[t - 1];
}

ProcedureState run_base(const ProcedureDefinition& definition, std::span<const double> p_values,
                        const std::vector<bool>* is_null) {
    const ProcedureConfig& config = definition.config;
    ProcedureState state;
    state.level = config.level;
    bool strawman_halted = false;

    for (std::uint64_t t = 1; t <= p_values.size(); ++t) {
        const double p = p_values[t - 1];
        double alpha = 0.0;
        std::optional<double> lambda;
        std::optional<double> alpha_bar;
        std::optional<double> penalty_base;

        switch (definition.kind) {
            case ProcedureKind::lord:
                alpha = lord_threshold(state, config);
                break;
            case ProcedureKind::nonmono_strawman:
                // Shuts testing down once any raw p-value crosses the target
                // level, regardless of the procedure's own thresholds. The
                // trigger is not monotone in the p-values, so this rule is
                // expected to fail the rejection-monotonicity audit.
                alpha = strawman_halted ? 0.0 : lord_threshold(state, config);
                break;
            case ProcedureKind::saffron: {
                const auto pair = saffron_threshold(state, config);
                alpha = pair.alpha;
                lambda = config.lambda;
                alpha_bar = pair.alpha_bar;
                penalty_base = config.penalize_with_alpha ? alpha : pair.alpha_bar;
                break;
            }
            case ProcedureKind::alpha_investing: {
                const auto pair = alpha_investing_threshold(state, config);
                alpha = pair.alpha;
                // With zero wealth the candidate is 0 and lambda_t = alpha_bar_t
                // leaves (0,1); any value works since the step contributes
                // nothing to the penalty sum. Fall back to 1/2.
                lambda = pair.alpha_bar > 0.0 ? pair.alpha_bar : 0.5;
                alpha_bar = pair.alpha_bar;
                penalty_base = pair.alpha_bar;
                break;
            }
            default:
                throw std::logic_error("planned procedure routed to the base runner");
        }

        if (config.stopping) {
            alpha = apply_stopping(*config.stopping, state, alpha, t);
            if (state.stopped) {
                alpha_bar = alpha_bar ? std::optional<double>(0.0) : alpha_bar;
                penalty_base = penalty_base ? std::optional<double>(0.0) : penalty_base;
            }
        }

        // In alpha-substitution mode the recorded candidate is the post-clamp
        // threshold, so the penalty sum accumulates alpha_i as Eq-intended.
        state.advance(PValue(p), alpha, lambda, penalty_base ? penalty_base : alpha_bar,
                      t - 1, 1, truth_at(is_null, t));

        if (definition.kind == ProcedureKind::nonmono_strawman && p <= config.level) {
            strawman_halted = true;
        }
    }
    return state;
}

ProcedureState run_planned(const ProcedureDefinition& definition, std::span<const double> p_values,
                           const std::vector<bool>* is_null) {
    if (!definition.schedule) {
        throw std::runtime_error("planned procedures require a schedule");
    }
    const ScheduleSpec& schedule = *definition.schedule;
    const ProcedureConfig& config = definition.config;
    if (schedule.size() < p_values.size()) {
        throw std::runtime_error("schedule does not cover the full stream");
    }
    const bool saffron = definition.kind == ProcedureKind::planned_saffron;

    // Members of each specification-time group, in increasing s then index.
    std::map<std::uint64_t, std::vector<std::uint64_t>> groups;
    for (std::uint64_t i = 1; i <= schedule.size(); ++i) {
        groups[schedule.s(i)].push_back(i);
    }

    ProcedureState state;
    state.level = config.level;
    std::vector<double> alpha_of(schedule.size(), 0.0);
    std::vector<bool> assigned(schedule.size(), false);

    // Incremental wealth bookkeeping over groups already assigned:
    //   LORD:    assigned_sum = sum of their thresholds.
    //   SAFFRON: penalty = sum of alpha_i / (1 - lambda_i), counted
    //            conservatively at assignment and corrected downward when the
    //            observation lands at or below lambda_i.
    double assigned_sum = 0.0;
    double penalty = 0.0;

    // The stop latch lives outside the state: thresholds specified before the
    // stop are still consumed at their stages, so state.stopped stays false.
    bool stop_latched = false;

    auto group_it = groups.begin();
    auto assign_pending_groups = [&](std::uint64_t observed) {
        while (group_it != groups.end() && group_it->first <= observed) {
            const std::uint64_t s = group_it->first;
            const double wealth = clamp_wealth(
                config.level * static_cast<double>(effective_denominator(state)) -
                (saffron ? penalty : assigned_sum));
            const double share = config.pi_at(s) / static_cast<double>(group_it->second.size());
            for (std::uint64_t i : group_it->second) {
                double alpha;
                if (saffron) {
                    const double lambda_i = config.lambda_at(i);
                    alpha = std::min(lambda_i, wealth * (1.0 - lambda_i) * share);
                } else {
                    alpha = wealth * share;
                }
                if (config.stopping) {
                    state.stopped = stop_latched;
                    alpha = apply_stopping(*config.stopping, state, alpha, i);
                    stop_latched = state.stopped;
                    state.stopped = false;
                }
                alpha_of[i - 1] = alpha;
                assigned[i - 1] = true;
            }
            for (std::uint64_t i : group_it->second) {
                if (saffron) {
                    penalty += alpha_of[i - 1] / (1.0 - config.lambda_at(i));
                } else {
                    assigned_sum += alpha_of[i - 1];
                }
            }
            ++group_it;
        }
    };

    for (std::uint64_t t = 1; t <= p_values.size(); ++t) {
        assign_pending_groups(t - 1);
        if (!assigned[t - 1]) {
            throw std::logic_error("threshold was not specified before its stage");
        }
        const double p = p_values[t - 1];
        const std::optional<double> lambda =
            saffron ? std::optional<double>(config.lambda_at(t)) : std::nullopt;
        state.advance(PValue(p), alpha_of[t - 1], lambda, std::nullopt,
                      schedule.s(t), 1, truth_at(is_null, t));
        if (saffron && p <= config.lambda_at(t)) {
            penalty -= alpha_of[t - 1] / (1.0 - config.lambda_at(t));
        }
    }
    return state;
}

} // namespace

ProcedureState run_stream(const ProcedureDefinition& definition, std::span<const double> p_values,
                          const std::vector<bool>* is_null) {
    definition.config.validate();
    if (is_null && is_null->size() < p_values.size()) {
        throw std::invalid_argument("ground-truth vector shorter than the stream");
    }
    if (definition.kind == ProcedureKind::planned_lord ||
        definition.kind == ProcedureKind::planned_saffron) {
        return run_planned(definition, p_values, is_null);
    }
    return run_base(definition, p_values, is_null);
}

} // namespace onlinefdr
