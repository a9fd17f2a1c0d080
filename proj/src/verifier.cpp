#include "onlinefdr/verifier.hpp"

#include <algorithm>
#include <cmath>

#include "onlinefdr/rng.hpp"

namespace onlinefdr {

namespace {

std::uint64_t total_rejections(const ProcedureDefinition& definition,
                               std::span<const double> stream) {
    return run_stream(definition, stream).rejection_count;
}

} // namespace

Condition1Report check_condition_1(const ProcedureDefinition& definition, std::uint64_t trials,
                                   std::uint64_t length, std::uint64_t seed) {
    if (trials < 1 || length < 1) {
        throw std::invalid_argument("trials and length must be positive");
    }
    Condition1Report report;
    report.trials = trials;

    for (std::uint64_t trial = 0; trial < trials; ++trial) {
        Rng rng(derive_seed(seed, trial));

        std::vector<double> base(length);
        for (auto& p : base) p = rng.uniform_pos();

        std::vector<std::uint64_t> selected;
        for (std::uint64_t i = 0; i < length; ++i) {
            if (rng.uniform() < 0.5) selected.push_back(i);
        }
        if (selected.empty()) {
            selected.push_back(rng.next_u64() % length);
        }

        std::vector<double> perturbed = base;
        for (std::uint64_t i : selected) {
            perturbed[i] = base[i] * rng.uniform();
        }

        const std::uint64_t r_base = total_rejections(definition, base);
        std::uint64_t r_pert = total_rejections(definition, perturbed);
        if (r_pert >= r_base) continue;

        ++report.violations;

        // Greedy minimization: undo perturbed coordinates one at a time while
        // the violation persists.
        for (std::uint64_t i : selected) {
            const double kept = perturbed[i];
            perturbed[i] = base[i];
            const std::uint64_t r_try = total_rejections(definition, perturbed);
            if (r_try < r_base) {
                r_pert = r_try;
            } else {
                perturbed[i] = kept;
            }
        }

        PerturbationTrial counterexample;
        counterexample.trial_index = trial;
        counterexample.base_stream = base;
        counterexample.perturbed_stream = std::move(perturbed);
        counterexample.rejections_base = r_base;
        counterexample.rejections_perturbed = r_pert;
        counterexample.violated = true;
        report.counterexamples.push_back(std::move(counterexample));
    }
    return report;
}

bool audit_constraints(const ProcedureState& state, Family family, double tolerance) {
    double spent = 0.0;
    double screened = 0.0;
    std::uint64_t rejections = 0;
    for (const auto& rec : state.records) {
        spent += rec.alpha;
        if (family == Family::saffron_family) {
            if (!rec.lambda) {
                throw std::runtime_error("SAFFRON-family audit requires lambda on every record");
            }
            if (rec.p > *rec.lambda) {
                screened += rec.alpha / (1.0 - *rec.lambda);
            }
        }
        if (rec.rejected) ++rejections;
        const double numerator = family == Family::lord_family ? spent : screened;
        const double estimate =
            numerator / static_cast<double>(std::max<std::uint64_t>(1, rejections));
        if (estimate > state.level + tolerance) {
            return false;
        }
    }
    return true;
}

namespace {

double clamp_nonneg(double w) {
    if (w < -1e-9) {
        throw std::logic_error("negative alpha wealth in direct evaluation");
    }
    return w > 0.0 ? w : 0.0;
}

struct StoppingTracker {
    const std::optional<StoppingRule>& rule;
    bool stopped = false;

    double apply(ProcedureState& prefix, double base, std::uint64_t t) {
        if (!rule) return base;
        prefix.stopped = stopped;
        const double out = apply_stopping(*rule, prefix, base, t);
        stopped = prefix.stopped;
        return out;
    }
};

std::vector<double> direct_base(const ProcedureDefinition& definition,
                                std::span<const double> p_values) {
    const ProcedureConfig& config = definition.config;
    const std::uint64_t n = p_values.size();
    std::vector<double> alpha(n, 0.0);
    std::vector<double> candidate(n, 0.0);
    std::vector<double> lambda_used(n, 0.0);

    ProcedureState tracked;   // record history only; sums below are recomputed
    tracked.level = config.level;
    StoppingTracker stopping{config.stopping};
    bool strawman_halted = false;

    for (std::uint64_t t = 1; t <= n; ++t) {
        std::uint64_t rejections = 0;
        for (std::uint64_t i = 0; i + 1 < t; ++i) {
            if (p_values[i] <= alpha[i]) ++rejections;
        }
        const double budget = config.level * static_cast<double>(std::max<std::uint64_t>(1, rejections));
        const double pi = config.pi_at(t - 1);

        double a = 0.0;
        double lam = 0.0;
        double cand = 0.0;
        switch (definition.kind) {
            case ProcedureKind::lord:
            case ProcedureKind::nonmono_strawman: {
                double spent = 0.0;
                for (std::uint64_t i = 0; i + 1 < t; ++i) spent += alpha[i];
                a = clamp_nonneg(budget - spent) * pi;
                if (definition.kind == ProcedureKind::nonmono_strawman && strawman_halted) a = 0.0;
                break;
            }
            case ProcedureKind::saffron: {
                lam = config.lambda;
                double penalty = 0.0;
                for (std::uint64_t i = 0; i + 1 < t; ++i) {
                    const double base_i = config.penalize_with_alpha ? alpha[i] : candidate[i];
                    if (p_values[i] > lam) penalty += base_i / (1.0 - lam);
                }
                cand = clamp_nonneg(budget - penalty) * (1.0 - lam) * pi;
                a = std::min(lam, cand);
                break;
            }
            case ProcedureKind::alpha_investing: {
                double penalty = 0.0;
                for (std::uint64_t i = 0; i + 1 < t; ++i) {
                    if (p_values[i] > lambda_used[i]) penalty += candidate[i] / (1.0 - lambda_used[i]);
                }
                const double wpi = clamp_nonneg(budget - penalty) * pi;
                cand = wpi / (1.0 + wpi);
                a = cand;
                lam = cand;
                break;
            }
            default:
                throw std::logic_error("planned procedure routed to the base direct evaluator");
        }

        a = stopping.apply(tracked, a, t);
        if (stopping.stopped) cand = 0.0;
        alpha[t - 1] = a;
        candidate[t - 1] = cand;
        lambda_used[t - 1] = lam;
        tracked.advance(PValue(p_values[t - 1]), a);

        if (definition.kind == ProcedureKind::nonmono_strawman && p_values[t - 1] <= config.level) {
            strawman_halted = true;
        }
    }
    return alpha;
}

std::vector<double> direct_planned(const ProcedureDefinition& definition,
                                   std::span<const double> p_values) {
    const ScheduleSpec& schedule = *definition.schedule;
    const ProcedureConfig& config = definition.config;
    const bool saffron = definition.kind == ProcedureKind::planned_saffron;

    std::map<std::uint64_t, std::vector<std::uint64_t>> groups;
    for (std::uint64_t i = 1; i <= schedule.size(); ++i) {
        groups[schedule.s(i)].push_back(i);
    }

    std::vector<std::optional<double>> assigned(schedule.size());
    StoppingTracker stopping{config.stopping};

    for (const auto& [s, members] : groups) {
        // Rebuild the prefix state of the first s observations from scratch.
        ProcedureState prefix;
        prefix.level = config.level;
        for (std::uint64_t i = 1; i <= s; ++i) {
            prefix.advance(PValue(p_values[i - 1]), assigned[i - 1].value_or(0.0));
        }
        std::vector<double> group_alphas;
        for (std::uint64_t t : members) {
            double a;
            if (saffron) {
                a = planned_saffron_threshold(prefix, schedule, config, t, assigned).alpha;
            } else {
                a = planned_lord_threshold(prefix, schedule, config, t, assigned);
            }
            group_alphas.push_back(stopping.apply(prefix, a, t));
        }
        for (std::uint64_t k = 0; k < members.size(); ++k) {
            assigned[members[k] - 1] = group_alphas[k];
        }
    }

    std::vector<double> alpha(p_values.size());
    for (std::uint64_t t = 1; t <= p_values.size(); ++t) {
        alpha[t - 1] = *assigned[t - 1];
    }
    return alpha;
}

} // namespace

std::vector<double> direct_thresholds(const ProcedureDefinition& definition,
                                      std::span<const double> p_values) {
    definition.config.validate();
    if (definition.kind == ProcedureKind::planned_lord ||
        definition.kind == ProcedureKind::planned_saffron) {
        if (!definition.schedule) {
            throw std::runtime_error("planned procedures require a schedule");
        }
        return direct_planned(definition, p_values);
    }
    return direct_base(definition, p_values);
}

double oracle_crosscheck(const ProcedureDefinition& definition, std::uint64_t streams,
                         std::uint64_t length, std::uint64_t seed) {
    double worst = 0.0;
    for (std::uint64_t k = 0; k < streams; ++k) {
        Rng rng(derive_seed(seed, k, 0x6f7261636c65ull));
        std::vector<double> p(length);
        for (auto& v : p) v = rng.uniform_pos();

        const ProcedureState state = run_stream(definition, p);
        const std::vector<double> direct = direct_thresholds(definition, p);
        for (std::uint64_t t = 0; t < length; ++t) {
            worst = std::max(worst, std::abs(state.records[t].alpha - direct[t]));
        }
    }
    return worst;
}

} // namespace onlinefdr
