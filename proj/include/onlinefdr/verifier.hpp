#ifndef ONLINEFDR_VERIFIER_HPP
#define ONLINEFDR_VERIFIER_HPP

#include "onlinefdr/procedures.hpp"

namespace onlinefdr {

/// One monotonicity trial: a base stream and a coordinatewise-decreased copy,
/// with the rejection totals the composed procedure produced on each.
struct PerturbationTrial {
    std::uint64_t trial_index = 0;
    std::vector<double> base_stream;
    std::vector<double> perturbed_stream;
    std::uint64_t rejections_base = 0;
    std::uint64_t rejections_perturbed = 0;
    bool violated = false;
};

struct Condition1Report {
    std::uint64_t trials = 0;
    std::uint64_t violations = 0;
    std::vector<PerturbationTrial> counterexamples;   // greedily minimized
};

/// Rejection-monotonicity audit: decreasing p-values must never decrease the
/// total number of rejections. Deterministic given the seed.
Condition1Report check_condition_1(const ProcedureDefinition& definition, std::uint64_t trials,
                                   std::uint64_t length, std::uint64_t seed);

/// True iff the family's empirical FDP estimate stays at or below the target
/// level at every prefix, within tolerance.
bool audit_constraints(const ProcedureState& state, Family family, double tolerance = 1e-12);

/// Recomputes every threshold of a completed run by direct evaluation of the
/// displayed wealth formulas (quadratic time). Independent of the incremental
/// bookkeeping used by run_stream.
std::vector<double> direct_thresholds(const ProcedureDefinition& definition,
                                      std::span<const double> p_values);

/// Max |alpha_t(incremental) - alpha_t(direct)| over random streams.
double oracle_crosscheck(const ProcedureDefinition& definition, std::uint64_t streams,
                         std::uint64_t length, std::uint64_t seed);

} // namespace onlinefdr

#endif
