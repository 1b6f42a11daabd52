#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "mpsams/entropy.hpp"

using namespace mpsams;
using namespace mpsams::entropy;

namespace {

DiscreteJointModel make_model(std::vector<double> p, std::vector<double> q) {
    DiscreteJointModel m;
    m.p = std::move(p);
    m.q = std::move(q);
    return m;
}

// exact enumeration oracle, written independently of the implementation
double oracle_expected_log(const std::vector<double>& weights, const std::vector<double>& logged) {
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i)
        if (weights[i] > 0.0) acc += weights[i] * std::log(logged[i]);
    return acc;
}

}  // namespace

TEST_CASE("expected_log_true on a uniform 4-outcome model") {
    const auto m = make_model({0.25, 0.25, 0.25, 0.25}, {0.25, 0.25, 0.25, 0.25});
    REQUIRE(expected_log_true(m) == Catch::Approx(std::log(0.25)).margin(1e-14));
}

TEST_CASE("expected_log_true of a point mass is zero") {
    const auto m = make_model({1.0, 0.0}, {0.5, 0.5});
    REQUIRE(expected_log_true(m) == 0.0);
}

TEST_CASE("expected_log_true matches the enumeration oracle on a 3-outcome model") {
    const auto m = make_model({0.5, 0.25, 0.25}, {0.5, 0.25, 0.25});
    const double expected = -(0.5 * std::log(2.0) + 0.5 * std::log(4.0));
    REQUIRE(expected_log_true(m) == Catch::Approx(expected).margin(1e-14));
    REQUIRE(expected_log_true(m) == Catch::Approx(oracle_expected_log(m.p, m.p)).margin(1e-14));
}

TEST_CASE("expected_log_model equals expected_log_true when Q == P") {
    const auto m = make_model({0.7, 0.2, 0.1}, {0.7, 0.2, 0.1});
    REQUIRE(expected_log_model(m) == Catch::Approx(expected_log_true(m)).margin(1e-14));
    REQUIRE(kl_divergence(m) == Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("expected_log_model is strictly below for Q != P") {
    const auto m = make_model({0.5, 0.5}, {0.9, 0.1});
    const double expected = 0.5 * (std::log(0.9) + std::log(0.1));
    REQUIRE(expected_log_model(m) == Catch::Approx(expected).margin(1e-14));
    REQUIRE(expected_log_model(m) < expected_log_true(m));
}

TEST_CASE("kl on a deterministic P against uniform Q is ln 2") {
    const auto m = make_model({1.0, 0.0}, {0.5, 0.5});
    REQUIRE(kl_divergence(m) == Catch::Approx(std::log(2.0)).margin(1e-14));
}

TEST_CASE("kl equals the gap between the two expected logs on random models") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto m = random_model(8, seed);
        const double gap = expected_log_true(m) - expected_log_model(m);
        REQUIRE(kl_divergence(m) == Catch::Approx(gap).margin(1e-12));
        REQUIRE(kl_divergence(m) >= 0.0);
    }
}

TEST_CASE("expected_log_model requires Q > 0 on the support of P") {
    const auto m = make_model({0.5, 0.5}, {1.0, 0.0});
    REQUIRE_THROWS_AS(expected_log_model(m), InvalidInput);
}

TEST_CASE("sampler equal to P reduces the sampled diagnostic to the true one") {
    const auto m = make_model({0.5, 0.3, 0.2}, {0.4, 0.4, 0.2});
    const auto s = SamplerDistribution::from_probs(m.p, "copy-of-p");
    REQUIRE(sampled_expected_log_true(m, s) == Catch::Approx(expected_log_true(m)).margin(1e-14));
}

TEST_CASE("point-mass samplers bracket the true diagnostic") {
    const auto m = make_model({0.6, 0.3, 0.1}, {0.6, 0.3, 0.1});
    const double h1 = expected_log_true(m);
    const auto hi = SamplerDistribution::point_mass(0, 3, "argmax");
    REQUIRE(sampled_expected_log_true(m, hi) == Catch::Approx(std::log(0.6)).margin(1e-14));
    REQUIRE(sampled_expected_log_true(m, hi) >= h1);
    const auto lo = SamplerDistribution::point_mass(2, 3, "argmin-support");
    REQUIRE(sampled_expected_log_true(m, lo) == Catch::Approx(std::log(0.1)).margin(1e-14));
    REQUIRE(sampled_expected_log_true(m, lo) <= h1);
}

TEST_CASE("sampler support must stay inside the support of P") {
    const auto m = make_model({1.0, 0.0}, {0.5, 0.5});
    const auto s = SamplerDistribution::point_mass(1, 2);
    REQUIRE_THROWS_AS(sampled_expected_log_true(m, s), InvalidInput);
}

TEST_CASE("monte carlo of a constant is exact with zero stderr") {
    const auto est = monte_carlo_expectation([](std::size_t) { return 3.5; }, {0.5, 0.5}, 100, 1);
    REQUIRE(est.mean == 3.5);
    REQUIRE(est.stderr_ == 0.0);
}

TEST_CASE("monte carlo of the identity on a fair coin converges to one half") {
    const auto est = monte_carlo_expectation([](std::size_t i) { return double(i); }, {0.5, 0.5}, 10000, 21);
    REQUIRE(std::abs(est.mean - 0.5) <= 3.0 * est.stderr_);
}

TEST_CASE("monte carlo estimate of the log-likelihood matches the exact value") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto m = random_model(8, seed + 100);
        const double exact = expected_log_true(m);
        const auto est = monte_carlo_expectation([&](std::size_t i) { return std::log(m.p[i]); }, m.p, 10000,
                                                 derive_seed(seed, {5}));
        REQUIRE(std::abs(est.mean - exact) <= 3.0 * est.stderr_);
    }
}

TEST_CASE("monte carlo stderr follows the inverse-root-n rate") {
    int in_band = 0;
    const int trials = 50;
    for (std::uint64_t seed = 0; seed < trials; ++seed) {
        const auto m = random_model(8, seed + 400);
        auto f = [&](std::size_t i) { return std::log(m.p[i]); };
        const auto small = monte_carlo_expectation(f, m.p, 10000, derive_seed(seed, {1}));
        const auto large = monte_carlo_expectation(f, m.p, 40000, derive_seed(seed, {2}));
        const double ratio = large.stderr_ / small.stderr_;
        if (ratio >= 0.4 && ratio <= 0.6) ++in_band;
    }
    REQUIRE(in_band >= trials - 5);
}

TEST_CASE("ordering check reports the provable inequality on random models") {
    std::vector<DiscreteJointModel> models;
    for (std::uint64_t seed = 0; seed < 20; ++seed) models.push_back(random_model(6, seed + 900));
    const auto rows = ordering_check(
        models, [](const DiscreteJointModel& m, std::size_t) { return SamplerDistribution::uniform(m); });
    REQUIRE(rows.size() == 20);
    for (const auto& row : rows) {
        REQUIRE(row.h2_le_h1);
        REQUIRE(row.kl == Catch::Approx(row.h1 - row.h2).margin(1e-12));
    }
}

TEST_CASE("ordering check sees equality when Q equals P") {
    std::vector<DiscreteJointModel> models{make_model({0.5, 0.5}, {0.5, 0.5})};
    const auto rows = ordering_check(
        models, [](const DiscreteJointModel& m, std::size_t) { return SamplerDistribution::uniform(m); });
    REQUIRE(rows[0].h1 == rows[0].h2);
}

TEST_CASE("min-support point-mass sampler keeps h3 below h2 on skewed fixtures") {
    // constructed so that log(min supported P) <= E_P log Q
    const auto m = make_model({0.7, 0.2, 0.1}, {0.6, 0.3, 0.1});
    std::vector<DiscreteJointModel> models{m};
    const auto rows = ordering_check(models, [](const DiscreteJointModel& model, std::size_t) {
        std::size_t argmin = 0;
        double best = 2.0;
        for (std::size_t i = 0; i < model.p.size(); ++i)
            if (model.p[i] > 0.0 && model.p[i] < best) {
                best = model.p[i];
                argmin = i;
            }
        return SamplerDistribution::point_mass(argmin, model.p.size(), "min-support");
    });
    REQUIRE(rows[0].h3 == Catch::Approx(std::log(0.1)).margin(1e-14));
    REQUIRE(rows[0].h3_le_h2);
}

TEST_CASE("model validation rejects malformed distributions") {
    REQUIRE_THROWS_AS(make_model({0.5, 0.6}, {0.5, 0.5}).validate(), InvalidInput);
    REQUIRE_THROWS_AS(make_model({0.5, 0.5}, {0.5, 0.4}).validate(), InvalidInput);
    REQUIRE_THROWS_AS(make_model({-0.5, 1.5}, {0.5, 0.5}).validate(), InvalidInput);
    REQUIRE_THROWS_AS(make_model({}, {}).validate(), InvalidInput);
}
