#include "onlinefdr/simulate.hpp"

#include <algorithm>
#include <cmath>

#include "onlinefdr/rng.hpp"

namespace onlinefdr {

void ScenarioConfig::validate() const {
    if (t_max < 1 || n_batch < 1 || iterations < 1) {
        throw std::invalid_argument("t_max, n_batch and iterations must be positive");
    }
    if (!(pi1 >= 0.0 && pi1 <= 1.0)) {
        throw std::invalid_argument("pi1 must lie in [0, 1]");
    }
    if (!(rho >= 0.0 && rho < 1.0)) {
        throw std::invalid_argument("rho must lie in [0, 1)");
    }
    if (!(level > 0.0 && level <= 1.0)) {
        throw std::invalid_argument("level must lie in (0, 1]");
    }
}

double normal_cdf(double z) {
    return 0.5 * std::erfc(-z * 0.7071067811865475244008443621048);
}

ScheduleSpec batch_schedule(std::uint64_t t_max, std::uint64_t n_batch) {
    std::vector<std::uint64_t> times(t_max);
    for (std::uint64_t i = 1; i <= t_max; ++i) {
        const std::uint64_t block = (i - 1) / n_batch + 1;
        times[i - 1] = (block - 1) * n_batch;
    }
    return ScheduleSpec::from_spec_times(std::move(times));
}

SimulatedStream generate_stream(const ScenarioConfig& scenario, std::uint64_t iteration_seed) {
    scenario.validate();
    Rng rng(iteration_seed);
    const std::uint64_t n = scenario.t_max;

    std::vector<bool> is_null(n, true);
    if (scenario.exact_count_nulls) {
        const std::uint64_t k = static_cast<std::uint64_t>(
            std::llround(scenario.pi1 * static_cast<double>(n)));
        std::vector<std::uint64_t> order(n);
        for (std::uint64_t i = 0; i < n; ++i) order[i] = i;
        // Fisher-Yates on the index vector, then take the first k as signals.
        for (std::uint64_t i = n; i > 1; --i) {
            const std::uint64_t j = rng.next_u64() % i;
            std::swap(order[i - 1], order[j]);
        }
        for (std::uint64_t i = 0; i < k; ++i) is_null[order[i]] = false;
    } else {
        for (std::uint64_t i = 0; i < n; ++i) {
            is_null[i] = !(rng.uniform() < scenario.pi1);
        }
    }

    const double sr = std::sqrt(scenario.rho);
    const double se = std::sqrt(1.0 - scenario.rho);
    SimulatedStream stream;
    stream.p.resize(n);
    stream.is_null = is_null;
    for (std::uint64_t start = 0; start < n; start += scenario.n_batch) {
        const double shared = rng.normal();
        const std::uint64_t end = std::min(n, start + scenario.n_batch);
        for (std::uint64_t i = start; i < end; ++i) {
            const double mu = is_null[i] ? 0.0 : scenario.mu_alt;
            const double z = mu + sr * shared + se * rng.normal();
            stream.p[i] = normal_cdf(-z);
        }
    }
    return stream;
}

std::vector<GridCell> run_grid(std::span<const ScenarioConfig> scenarios,
                               std::span<const NamedProcedure> procedures) {
    std::vector<GridCell> cells;
    for (std::uint64_t s_idx = 0; s_idx < scenarios.size(); ++s_idx) {
        const ScenarioConfig& scenario = scenarios[s_idx];
        scenario.validate();

        std::vector<ProcedureDefinition> definitions;
        for (const auto& proc : procedures) {
            ProcedureDefinition def;
            def.kind = proc.kind;
            def.config.level = scenario.level;
            def.config.spend_fraction = scenario.spend_fraction();
            def.config.stopping = proc.stopping;
            if (proc.kind == ProcedureKind::planned_lord ||
                proc.kind == ProcedureKind::planned_saffron) {
                def.schedule = batch_schedule(scenario.t_max, scenario.n_batch);
            }
            definitions.push_back(std::move(def));
        }

        std::vector<std::vector<StreamMetrics>> metrics(procedures.size());
        for (std::uint64_t iter = 0; iter < scenario.iterations; ++iter) {
            // Common random numbers: one stream per iteration, shared by all
            // procedures in the cell.
            const std::uint64_t iter_seed = derive_seed(scenario.master_seed, s_idx, iter);
            const SimulatedStream stream = generate_stream(scenario, iter_seed);
            for (std::uint64_t p_idx = 0; p_idx < definitions.size(); ++p_idx) {
                const ProcedureState state =
                    run_stream(definitions[p_idx], stream.p, &stream.is_null);
                metrics[p_idx].push_back(compute_metrics(state, scenario.t_max));
            }
        }

        for (std::uint64_t p_idx = 0; p_idx < procedures.size(); ++p_idx) {
            const FdrAggregate agg = aggregate_fdr(metrics[p_idx]);
            double power_sum = 0.0;
            for (const auto& m : metrics[p_idx]) power_sum += m.power;

            GridCell cell;
            cell.procedure = procedures[p_idx].name;
            cell.n_batch = scenario.n_batch;
            cell.rho = scenario.rho;
            cell.pi1 = scenario.pi1;
            cell.iterations = scenario.iterations;
            cell.fdr = agg.fdr;
            cell.mcse = agg.mcse;
            cell.mfdr = agg.mfdr;
            cell.power = power_sum / static_cast<double>(metrics[p_idx].size());
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

} // namespace onlinefdr
