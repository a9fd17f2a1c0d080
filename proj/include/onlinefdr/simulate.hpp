#ifndef ONLINEFDR_SIMULATE_HPP
#define ONLINEFDR_SIMULATE_HPP

#include <string>

#include "onlinefdr/estimators.hpp"
#include "onlinefdr/procedures.hpp"

namespace onlinefdr {

/// One Monte Carlo scenario: block-correlated z-statistics, one-sided
/// p-values, a Bernoulli(pi1) mixture of signal means.
struct ScenarioConfig {
    std::uint64_t t_max = 500;
    double pi1 = 0.1;               // proportion of false nulls
    double rho = 0.0;               // within-block covariance, [0, 1)
    std::uint64_t n_batch = 1;      // block size
    double mu_alt = 3.0;
    std::uint64_t iterations = 200;
    std::uint64_t master_seed = 20260823;
    double level = 0.05;
    bool exact_count_nulls = false; // draw exactly round(pi1 * t_max) false nulls
    std::optional<double> spend_override;   // pi; default min(1, n_batch * 0.01)

    double spend_fraction() const {
        if (spend_override) return *spend_override;
        return std::min(1.0, static_cast<double>(n_batch) * 0.01);
    }
    void validate() const;
};

/// Standard normal CDF.
double normal_cdf(double z);

/// Previous-batch schedule: s_i is the last stage of the block before b_i,
/// so every threshold depends only on earlier blocks.
ScheduleSpec batch_schedule(std::uint64_t t_max, std::uint64_t n_batch);

struct SimulatedStream {
    std::vector<double> p;
    std::vector<bool> is_null;
};

/// Z_i = mu_i + sqrt(rho) G_b + sqrt(1 - rho) eps_i with a shared per-block
/// factor reproduces the block-equicorrelated covariance exactly; p = Phi(-Z).
SimulatedStream generate_stream(const ScenarioConfig& scenario, std::uint64_t iteration_seed);

struct GridCell {
    std::string procedure;
    std::uint64_t n_batch = 0;
    double rho = 0.0;
    double pi1 = 0.0;
    std::uint64_t iterations = 0;
    double fdr = 0.0;
    double mcse = 0.0;
    double mfdr = 0.0;
    double power = 0.0;
};

struct NamedProcedure {
    std::string name;
    ProcedureKind kind = ProcedureKind::planned_lord;
    std::optional<StoppingRule> stopping;
};

/// Runs every (scenario, procedure) cell with common random numbers across
/// procedures and deterministic per-iteration seeds.
std::vector<GridCell> run_grid(std::span<const ScenarioConfig> scenarios,
                               std::span<const NamedProcedure> procedures);

} // namespace onlinefdr

#endif
