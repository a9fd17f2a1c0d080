#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "onlinefdr/rng.hpp"
#include "onlinefdr/simulate.hpp"

using namespace onlinefdr;

namespace {

// Test-only quadrature oracle for the standard normal CDF: composite Simpson
// over [0, |z|], independent of erfc.
double normal_cdf_oracle(double z) {
    const double a = 0.0, b = std::abs(z);
    const int n = 8192;   // even
    const double h = (b - a) / n;
    auto density = [](double t) { return std::exp(-0.5 * t * t) * 0.3989422804014326779399461; };
    double sum = density(a) + density(b);
    for (int i = 1; i < n; ++i) {
        sum += density(a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
    }
    const double integral = sum * h / 3.0;
    return z >= 0.0 ? 0.5 + integral : 0.5 - integral;
}

// Test-only inverse normal CDF: Acklam's rational approximation polished with
// two Newton steps against normal_cdf_oracle-grade accuracy.
double inverse_normal_cdf(double p) {
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1 - plow;
    double x;
    if (p < plow) {
        const double q = std::sqrt(-2 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    } else if (p <= phigh) {
        const double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
    } else {
        const double q = std::sqrt(-2 * std::log(1 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    for (int i = 0; i < 2; ++i) {
        const double err = normal_cdf(x) - p;
        x -= err / (std::exp(-0.5 * x * x) * 0.3989422804014326779399461);
    }
    return x;
}

ScenarioConfig scenario(double pi1, double rho, std::uint64_t n_batch,
                        std::uint64_t t_max = 500) {
    ScenarioConfig sc;
    sc.t_max = t_max;
    sc.pi1 = pi1;
    sc.rho = rho;
    sc.n_batch = n_batch;
    return sc;
}

} // namespace

TEST_CASE("normal_cdf against the quadrature oracle") {
    CHECK(normal_cdf(0.0) == 0.5);
    CHECK(normal_cdf(-3.0) == doctest::Approx(0.001349898031630095).epsilon(1e-10));
    CHECK(normal_cdf(1.96) == doctest::Approx(0.9750021048517795).epsilon(1e-12));
    for (int i = 0; i <= 1000; ++i) {
        const double z = -8.0 + 16.0 * i / 1000.0;
        CHECK(std::abs(normal_cdf(z) - normal_cdf_oracle(z)) <= 1e-10);
    }
}

TEST_CASE("normal_cdf symmetry and monotonicity") {
    double prev = -1.0;
    for (int i = 0; i <= 2000; ++i) {
        const double z = -8.0 + 16.0 * i / 2000.0;
        const double v = normal_cdf(z);
        CHECK(v >= prev);
        CHECK(std::abs(v + normal_cdf(-z) - 1.0) <= 1e-14);
        prev = v;
    }
}

TEST_CASE("batch schedule shapes") {
    SUBCASE("n_batch = 1 is the canonical online setting") {
        const auto schedule = batch_schedule(5, 1);
        for (std::uint64_t i = 1; i <= 5; ++i) {
            CHECK(schedule.s(i) == i - 1);
            CHECK(schedule.group_size.at(i - 1) == 1);
        }
    }
    SUBCASE("n_batch = t_max is pure alpha spending") {
        const auto schedule = batch_schedule(6, 6);
        for (std::uint64_t i = 1; i <= 6; ++i) CHECK(schedule.s(i) == 0);
        CHECK(schedule.group_size.at(0) == 6);
    }
    SUBCASE("trailing partial block") {
        const auto schedule = batch_schedule(5, 2);
        CHECK(schedule.spec_time == std::vector<std::uint64_t>{0, 0, 2, 2, 4});
        CHECK(schedule.group_size.at(0) == 2);
        CHECK(schedule.group_size.at(2) == 2);
        CHECK(schedule.group_size.at(4) == 1);
    }
}

TEST_CASE("null p-values are marginally uniform") {
    // mu = 0 everywhere: KS statistic over 1e5 draws below the 1% critical value
    auto sc = scenario(0.0, 0.0, 1, 100);
    std::vector<double> draws;
    draws.reserve(100000);
    for (std::uint64_t iter = 0; iter < 1000; ++iter) {
        const auto stream = generate_stream(sc, derive_seed(99, 0, iter));
        draws.insert(draws.end(), stream.p.begin(), stream.p.end());
    }
    std::sort(draws.begin(), draws.end());
    const double n = static_cast<double>(draws.size());
    double ks = 0.0;
    for (std::size_t i = 0; i < draws.size(); ++i) {
        ks = std::max(ks, std::abs((i + 1) / n - draws[i]));
        ks = std::max(ks, std::abs(draws[i] - i / n));
    }
    CHECK(ks < 1.63 / std::sqrt(n));
}

TEST_CASE("block correlation matches the target covariance") {
    // recover z-scores and estimate within- and across-block correlation
    auto sc = scenario(0.0, 0.6, 10, 20);
    const std::uint64_t iters = 100000;
    double sw = 0, sw2 = 0, swx = 0;   // within-block pair stats
    double sa = 0;                     // across-block cross moment
    std::uint64_t nw = 0, na = 0;
    double mean = 0, var = 0;
    for (std::uint64_t iter = 0; iter < iters; ++iter) {
        const auto stream = generate_stream(sc, derive_seed(123, 1, iter));
        double z[20];
        for (int i = 0; i < 20; ++i) z[i] = -inverse_normal_cdf(stream.p[i]);
        // pairs (0,1) within block 1, (10,11) within block 2, (0,10) across
        swx += z[0] * z[1] + z[10] * z[11];
        nw += 2;
        sa += z[0] * z[10];
        ++na;
        mean += z[0];
        var += z[0] * z[0];
        sw += z[1];
        sw2 += z[1] * z[1];
    }
    mean /= iters;
    var = var / iters - mean * mean;
    const double mean2 = sw / iters;
    const double var2 = sw2 / iters - mean2 * mean2;
    const double within = (swx / nw - mean * mean2) / std::sqrt(var * var2);
    const double across = (sa / na - mean * mean) / var;
    CHECK(within == doctest::Approx(0.6).epsilon(0.04));
    CHECK(std::abs(across) < 0.02);
    CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("rho = 0 gives independent coordinates") {
    auto sc = scenario(0.0, 0.0, 10, 20);
    double cross = 0, m0 = 0, m1 = 0, v0 = 0, v1 = 0;
    const std::uint64_t iters = 100000;
    for (std::uint64_t iter = 0; iter < iters; ++iter) {
        const auto stream = generate_stream(sc, derive_seed(5, 2, iter));
        const double z0 = -inverse_normal_cdf(stream.p[0]);
        const double z1 = -inverse_normal_cdf(stream.p[1]);
        cross += z0 * z1;
        m0 += z0;
        m1 += z1;
        v0 += z0 * z0;
        v1 += z1 * z1;
    }
    m0 /= iters; m1 /= iters;
    const double corr = (cross / iters - m0 * m1) /
                        std::sqrt((v0 / iters - m0 * m0) * (v1 / iters - m1 * m1));
    CHECK(std::abs(corr) < 0.01);
}

TEST_CASE("invalid scenarios are rejected") {
    CHECK_THROWS_AS(scenario(0.1, -0.2, 5).validate(), std::invalid_argument);
    CHECK_THROWS_AS(scenario(0.1, 1.0, 5).validate(), std::invalid_argument);
    CHECK_THROWS_AS(scenario(1.2, 0.3, 5).validate(), std::invalid_argument);
}

TEST_CASE("signal assignment modes") {
    SUBCASE("bernoulli proportion is right in expectation") {
        auto sc = scenario(0.3, 0.0, 1, 1000);
        std::uint64_t signals = 0;
        for (std::uint64_t iter = 0; iter < 100; ++iter) {
            const auto stream = generate_stream(sc, derive_seed(2, 3, iter));
            for (const auto null : stream.is_null) {
                if (!null) ++signals;
            }
        }
        CHECK(static_cast<double>(signals) / 100000.0 == doctest::Approx(0.3).epsilon(0.03));
    }
    SUBCASE("exact-count mode draws a fixed-size subset") {
        auto sc = scenario(0.3, 0.0, 1, 1000);
        sc.exact_count_nulls = true;
        for (std::uint64_t iter = 0; iter < 10; ++iter) {
            const auto stream = generate_stream(sc, derive_seed(2, 4, iter));
            std::uint64_t signals = 0;
            for (const auto null : stream.is_null) {
                if (!null) ++signals;
            }
            CHECK(signals == 300);
        }
    }
}

TEST_CASE("super-uniformity under the batch schedule") {
    // Aggregated over nulls, the rejection frequency cannot exceed the mean
    // assigned threshold beyond binomial noise.
    auto sc = scenario(0.3, 0.5, 10, 100);
    ProcedureDefinition def;
    def.kind = ProcedureKind::planned_lord;
    def.config.level = 0.05;
    def.config.spend_fraction = sc.spend_fraction();
    def.schedule = batch_schedule(sc.t_max, sc.n_batch);

    double alpha_sum = 0.0, alpha_var = 0.0;
    std::uint64_t null_rejections = 0;
    for (std::uint64_t iter = 0; iter < 2000; ++iter) {
        const auto stream = generate_stream(sc, derive_seed(77, 5, iter));
        const auto state = run_stream(def, stream.p, &stream.is_null);
        for (const auto& rec : state.records) {
            if (*rec.is_null) {
                alpha_sum += rec.alpha;
                alpha_var += rec.alpha * (1.0 - rec.alpha);
                if (rec.rejected) ++null_rejections;
            }
        }
    }
    CHECK(static_cast<double>(null_rejections) <= alpha_sum + 3.0 * std::sqrt(alpha_var));
}

TEST_CASE("run_grid basics") {
    std::vector<ScenarioConfig> scenarios{scenario(0.0, 0.3, 5, 100), scenario(0.4, 0.3, 5, 100)};
    for (auto& sc : scenarios) sc.iterations = 100;
    const std::vector<NamedProcedure> procs{{"lord", ProcedureKind::planned_lord, {}},
                                            {"saffron", ProcedureKind::planned_saffron, {}}};
    const auto cells = run_grid(scenarios, procs);
    REQUIRE(cells.size() == 4);

    SUBCASE("no signals means zero power and all-false rejections") {
        CHECK(cells[0].power == 0.0);
        CHECK(cells[1].power == 0.0);
    }
    SUBCASE("fdr controlled in every cell") {
        for (const auto& cell : cells) {
            CHECK(cell.fdr <= 0.05 + 2.0 * cell.mcse + 1e-12);
        }
    }
    SUBCASE("deterministic under the master seed") {
        const auto again = run_grid(scenarios, procs);
        for (std::size_t i = 0; i < cells.size(); ++i) {
            CHECK(cells[i].fdr == again[i].fdr);
            CHECK(cells[i].mcse == again[i].mcse);
            CHECK(cells[i].power == again[i].power);
        }
    }
}

TEST_CASE("two-run aggregation does not crash") {
    std::vector<ScenarioConfig> scenarios{scenario(0.2, 0.3, 5, 50)};
    scenarios[0].iterations = 2;
    const std::vector<NamedProcedure> procs{{"lord", ProcedureKind::planned_lord, {}}};
    const auto cells = run_grid(scenarios, procs);
    CHECK(cells.size() == 1);
}

TEST_CASE("power is nondecreasing in the signal mean") {
    auto weak = scenario(0.3, 0.3, 10, 200);
    weak.iterations = 100;
    weak.mu_alt = 2.0;
    auto strong = weak;
    strong.mu_alt = 3.5;
    const std::vector<NamedProcedure> procs{{"lord", ProcedureKind::planned_lord, {}}};
    const double p_weak = run_grid(std::span(&weak, 1), procs)[0].power;
    const double p_strong = run_grid(std::span(&strong, 1), procs)[0].power;
    CHECK(p_strong >= p_weak);
}
