#include <doctest.h>

#include <cmath>

#include "onlinefdr/estimators.hpp"
#include "onlinefdr/procedures.hpp"
#include "onlinefdr/rng.hpp"
#include "onlinefdr/verifier.hpp"

using namespace onlinefdr;

namespace {

ProcedureConfig base_config(double level = 0.05, double pi = 0.1, double lambda = 0.5) {
    ProcedureConfig config;
    config.level = level;
    config.spend_fraction = pi;
    config.lambda = lambda;
    return config;
}

std::vector<double> random_stream(std::uint64_t seed, std::uint64_t length, bool with_signal) {
    Rng rng(seed);
    std::vector<double> p(length);
    for (auto& v : p) {
        if (with_signal && rng.uniform() < 0.2) {
            // signal-mixture: occasionally very small p-values
            v = rng.uniform_pos() * 0.01;
        } else {
            v = rng.uniform_pos();
        }
    }
    return p;
}

} // namespace

TEST_CASE("lord threshold hand values") {
    const auto config = base_config();
    ProcedureState state;
    CHECK(lord_threshold(state, config) == doctest::Approx(0.005).epsilon(1e-15));

    SUBCASE("after a rejection at t=1") {
        state.advance(PValue(0.001), 0.005);
        CHECK(lord_threshold(state, config) == doctest::Approx(0.0045).epsilon(1e-12));
    }
    SUBCASE("after no rejection, 1 v 0 keeps the budget") {
        state.advance(PValue(0.9), 0.005);
        CHECK(lord_threshold(state, config) == doctest::Approx(0.0045).epsilon(1e-12));
    }
}

TEST_CASE("saffron threshold hand values") {
    const auto config = base_config();
    ProcedureState state;
    const auto first = saffron_threshold(state, config);
    CHECK(first.alpha_bar == doctest::Approx(0.0025).epsilon(1e-15));
    CHECK(first.alpha == doctest::Approx(0.0025).epsilon(1e-15));

    state.advance(PValue(0.6), first.alpha, 0.5, first.alpha_bar);
    const auto second = saffron_threshold(state, config);
    // wealth 0.05 - 0.0025/0.5 = 0.045
    CHECK(second.alpha_bar == doctest::Approx(0.00225).epsilon(1e-12));
}

TEST_CASE("saffron clamps the threshold at lambda") {
    auto config = base_config(1.0, 1.0, 0.01);
    ProcedureState state;
    const auto pair = saffron_threshold(state, config);
    CHECK(pair.alpha_bar > config.lambda);
    CHECK(pair.alpha == config.lambda);
}

TEST_CASE("alpha investing fixed point") {
    const auto config = base_config();
    ProcedureState state;
    const auto pair = alpha_investing_threshold(state, config);
    CHECK(pair.alpha_bar == doctest::Approx(0.005 / 1.005).epsilon(1e-14));
    CHECK(pair.alpha == pair.alpha_bar);
}

TEST_CASE("alpha investing with zero spending never spends") {
    auto config = base_config();
    config.spend_fraction = 0.0;
    const auto state = run_stream({ProcedureKind::alpha_investing, config, {}},
                                  random_stream(11, 50, true));
    for (const auto& rec : state.records) CHECK(rec.alpha == 0.0);
}

TEST_CASE("alpha investing threshold grows after a rejection") {
    const auto config = base_config();
    ProcedureState rejected, missed;
    const auto first = alpha_investing_threshold(rejected, config);
    rejected.advance(PValue(1e-5), first.alpha, first.alpha_bar, first.alpha_bar);
    missed.advance(PValue(0.9), first.alpha, first.alpha_bar, first.alpha_bar);
    CHECK(alpha_investing_threshold(rejected, config).alpha >
          alpha_investing_threshold(missed, config).alpha);
}

TEST_CASE("pi = 1 spends the full budget at t=1") {
    auto config = base_config(0.05, 1.0);
    ProcedureState state;
    CHECK(lord_threshold(state, config) == 0.05);
    SUBCASE("one rejection does not replenish past the spend") {
        state.advance(PValue(0.001), 0.05);
        CHECK(lord_threshold(state, config) == 0.0);
    }
    SUBCASE("no rejection leaves zero wealth") {
        state.advance(PValue(0.9), 0.05);
        CHECK(lord_threshold(state, config) == 0.0);
    }
}

TEST_CASE("planned lord with s_i = i-1 matches base lord") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto p = random_stream(seed, 100, seed % 2 == 0);
        const auto base = run_stream({ProcedureKind::lord, base_config(), {}}, p);
        std::vector<std::uint64_t> times(p.size());
        for (std::uint64_t i = 0; i < p.size(); ++i) times[i] = i;
        const auto planned = run_stream(
            {ProcedureKind::planned_lord, base_config(), ScheduleSpec::from_spec_times(times)}, p);
        for (std::uint64_t t = 0; t < p.size(); ++t) {
            CHECK(std::abs(base.records[t].alpha - planned.records[t].alpha) <= 1e-12);
        }
    }
}

TEST_CASE("planned saffron with s_i = i-1 matches base saffron using alpha in the penalty") {
    auto config = base_config();
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto p = random_stream(seed + 1000, 100, seed % 2 == 0);
        auto subst = config;
        subst.penalize_with_alpha = true;
        const auto base = run_stream({ProcedureKind::saffron, subst, {}}, p);
        std::vector<std::uint64_t> times(p.size());
        for (std::uint64_t i = 0; i < p.size(); ++i) times[i] = i;
        const auto planned = run_stream(
            {ProcedureKind::planned_saffron, config, ScheduleSpec::from_spec_times(times)}, p);
        for (std::uint64_t t = 0; t < p.size(); ++t) {
            CHECK(std::abs(base.records[t].alpha - planned.records[t].alpha) <= 1e-12);
        }
    }
}

TEST_CASE("fully prespecified schedule is uniform alpha spending") {
    const std::uint64_t t_max = 40;
    auto config = base_config(0.05, 0.8);
    std::vector<std::uint64_t> times(t_max, 0);
    const auto schedule = ScheduleSpec::from_spec_times(times);
    const auto p = random_stream(5, t_max, false);
    const auto state = run_stream({ProcedureKind::planned_lord, config, schedule}, p);
    double total = 0.0;
    for (const auto& rec : state.records) {
        CHECK(rec.alpha == doctest::Approx(0.05 * 0.8 / t_max).epsilon(1e-15));
        total += rec.alpha;
    }
    CHECK(total <= 0.05 + 1e-12);
}

TEST_CASE("planned saffron splits prespecified wealth conservatively") {
    // two thresholds planned at s=0, lambda 0.5, alpha 0.05, pi 1
    auto config = base_config(0.05, 1.0, 0.5);
    const auto schedule = ScheduleSpec::from_spec_times({0, 0});
    const std::vector<double> p{0.9, 0.9};
    const auto state = run_stream({ProcedureKind::planned_saffron, config, schedule}, p);
    CHECK(state.records[0].alpha == doctest::Approx(0.0125).epsilon(1e-15));
    CHECK(state.records[1].alpha == doctest::Approx(0.0125).epsilon(1e-15));
}

TEST_CASE("batch rejections replenish wealth for the next batch") {
    // schedule (0,0,2,2): two batches of two
    auto config = base_config(0.05, 0.5);
    const auto schedule = ScheduleSpec::from_spec_times({0, 0, 2, 2});
    SUBCASE("lord") {
        // batch 1: alpha = 0.05 * 0.5 / 2 = 0.0125 each; one rejection
        const std::vector<double> p{0.001, 0.9, 0.5, 0.5};
        const auto state = run_stream({ProcedureKind::planned_lord, config, schedule}, p);
        CHECK(state.records[0].alpha == doctest::Approx(0.0125).epsilon(1e-15));
        // batch 2: wealth 0.05 * max(1,1) - 0.025 = 0.025, each gets 0.025*0.5/2
        CHECK(state.records[2].alpha == doctest::Approx(0.00625).epsilon(1e-13));
        CHECK(state.records[3].alpha == doctest::Approx(0.00625).epsilon(1e-13));
    }
    SUBCASE("saffron drops the penalty for batch-1 p-values at or below lambda") {
        const std::vector<double> p{0.001, 0.4, 0.5, 0.5};
        const auto state = run_stream({ProcedureKind::planned_saffron, config, schedule}, p);
        // batch 1: alpha_bar' = 0.05 * 0.5 * 0.5 / 2 = 0.00625 each
        CHECK(state.records[0].alpha == doctest::Approx(0.00625).epsilon(1e-15));
        // batch 2: both batch-1 p's <= lambda so no penalty; |R_2| = 1
        // alpha_bar' = 0.05 * 0.5 * 0.5 / 2 = 0.00625
        CHECK(state.records[2].alpha == doctest::Approx(0.00625).epsilon(1e-13));
    }
}

TEST_CASE("stopping wrapper caps rejections and stages") {
    ProcedureState state;
    StoppingRule rule;
    rule.max_rejections = 2;
    rule.max_stage = 5;

    CHECK(apply_stopping(rule, state, 0.01, 1) == 0.01);
    state.advance(PValue(0.001), 0.01);
    state.advance(PValue(0.001), 0.01);
    // cap reached
    CHECK(apply_stopping(rule, state, 0.01, 3) == 0.0);
    CHECK(state.stopped);
    // latched even though the indicator would now pass again
    StoppingRule loose;
    CHECK(apply_stopping(loose, state, 0.01, 4) == 0.0);
}

TEST_CASE("stage cap halts testing") {
    ProcedureState state;
    StoppingRule rule;
    rule.max_stage = 3;
    CHECK(apply_stopping(rule, state, 0.02, 3) == 0.02);
    CHECK(apply_stopping(rule, state, 0.02, 4) == 0.0);
    CHECK(state.stopped);
}

TEST_CASE("adaptive caps extend with rejections") {
    StoppingRule rule;
    rule.adaptive_max_stage = [](const ProcedureState& s) { return 2 + 3 * s.rejection_count; };
    ProcedureState state;
    CHECK(apply_stopping(rule, state, 0.01, 2) == 0.01);
    CHECK(!state.stopped);
    state.advance(PValue(0.001), 0.01);
    CHECK(apply_stopping(rule, state, 0.01, 5) == 0.01);
    CHECK(apply_stopping(rule, state, 0.01, 6) == 0.0);
    CHECK(state.stopped);
}

TEST_CASE("constraint satisfaction at every prefix over random streams") {
    const std::vector<ProcedureKind> kinds{ProcedureKind::lord, ProcedureKind::saffron,
                                           ProcedureKind::alpha_investing};
    for (const auto kind : kinds) {
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            const auto p = random_stream(seed * 31 + 7, 150, seed % 2 == 0);
            const auto state = run_stream({kind, base_config(), {}}, p);
            CHECK(audit_constraints(state, family_of(kind)));
        }
    }
}

TEST_CASE("nonnegative wealth along every run") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto p = random_stream(seed * 13 + 1, 150, true);
        const auto config = base_config();
        const auto lord = run_stream({ProcedureKind::lord, config, {}}, p);
        CHECK(lord.level * static_cast<double>(effective_denominator(lord)) - lord.spent_sum >=
              -1e-12);
        const auto saffron = run_stream({ProcedureKind::saffron, config, {}}, p);
        CHECK(saffron.level * static_cast<double>(effective_denominator(saffron)) -
                  saffron.penalty_sum >= -1e-12);
    }
}

TEST_CASE("per-time spending fractions are honored") {
    auto config = base_config();
    config.spend_by_time[0] = 0.5;
    ProcedureState state;
    CHECK(lord_threshold(state, config) == doctest::Approx(0.025).epsilon(1e-15));
    state.advance(PValue(0.9), 0.025);
    // falls back to the constant pi at later times
    CHECK(lord_threshold(state, config) == doctest::Approx(0.0025).epsilon(1e-13));
}

TEST_CASE("planned saffron requires a lambda for every scheduled index") {
    auto config = base_config();
    config.lambda_sequence = {0.5, 0.5};   // too short for a length-3 schedule
    const auto schedule = ScheduleSpec::from_spec_times({0, 1, 0});
    const std::vector<double> p{0.5, 0.5, 0.5};
    CHECK_THROWS_AS(
        run_stream({ProcedureKind::planned_saffron, config, schedule}, p),
        std::runtime_error);
}

TEST_CASE("config validation rejects out-of-domain parameters") {
    auto config = base_config();
    config.level = 0.0;
    CHECK_THROWS_AS(config.validate(), std::invalid_argument);
    config = base_config();
    config.spend_fraction = 1.5;
    CHECK_THROWS_AS(config.validate(), std::invalid_argument);
    config = base_config();
    config.lambda = 1.0;
    CHECK_THROWS_AS(config.validate(), std::invalid_argument);
}
