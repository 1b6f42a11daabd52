#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mpsams/errors.hpp"
#include "mpsams/rng.hpp"

namespace mpsams::entropy {

/// Finite outcome space with a true distribution P and a model distribution Q.
/// Outcomes stand for (visible-part, masked-part) pairs; the diagnostics only
/// need the probabilities, so outcomes are plain indices.
struct DiscreteJointModel {
    std::vector<double> p;  // true probabilities, sum to 1
    std::vector<double> q;  // model probabilities, sum to 1

    std::size_t size() const { return p.size(); }

    void validate() const {
        if (p.empty() || p.size() != q.size())
            throw InvalidInput("model: P and Q must be non-empty and the same size");
        double sp = 0.0, sq = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (p[i] < 0.0 || q[i] < 0.0) throw InvalidInput("model: probabilities must be non-negative");
            sp += p[i];
            sq += q[i];
        }
        if (std::abs(sp - 1.0) > 1e-12 || std::abs(sq - 1.0) > 1e-12)
            throw InvalidInput("model: P and Q must each sum to 1 within 1e-12");
        for (std::size_t i = 0; i < p.size(); ++i)
            if (p[i] > 0.0 && q[i] <= 0.0)
                throw InvalidInput("model: Q must be positive on the support of P");
    }
};

/// A sampling strategy expressed as a distribution over the same outcomes.
struct SamplerDistribution {
    std::vector<double> probs;
    std::string strategy;
    std::uint64_t seed = 0;

    static SamplerDistribution uniform(const DiscreteJointModel& model) {
        SamplerDistribution s;
        s.strategy = "uniform";
        s.probs.assign(model.size(), 0.0);
        std::size_t support = 0;
        for (double v : model.p) support += (v > 0.0);
        for (std::size_t i = 0; i < model.size(); ++i)
            if (model.p[i] > 0.0) s.probs[i] = 1.0 / static_cast<double>(support);
        return s;
    }

    static SamplerDistribution point_mass(std::size_t outcome, std::size_t space_size,
                                          std::string name = "point-mass") {
        SamplerDistribution s;
        s.strategy = std::move(name);
        s.probs.assign(space_size, 0.0);
        s.probs.at(outcome) = 1.0;
        return s;
    }

    static SamplerDistribution from_probs(std::vector<double> probs, std::string name = "custom") {
        SamplerDistribution s;
        s.strategy = std::move(name);
        s.probs = std::move(probs);
        return s;
    }
};

/// E_P log P. The sign convention follows the diagnostic definitions used
/// throughout this module: values are expected log-probabilities (<= 0),
/// i.e. the negative of the conventional entropy.
inline double expected_log_true(const DiscreteJointModel& model) {
    model.validate();
    double acc = 0.0;
    for (double v : model.p)
        if (v > 0.0) acc += v * std::log(v);
    return acc;
}

/// E_P log Q. Always <= E_P log P, with equality iff Q == P on P's support.
inline double expected_log_model(const DiscreteJointModel& model) {
    model.validate();
    double acc = 0.0;
    for (std::size_t i = 0; i < model.size(); ++i)
        if (model.p[i] > 0.0) acc += model.p[i] * std::log(model.q[i]);
    return acc;
}

/// KL(P || Q) = sum P log(P/Q) >= 0; equals the gap between the two
/// expected-log quantities above.
inline double kl_divergence(const DiscreteJointModel& model) {
    model.validate();
    double acc = 0.0;
    for (std::size_t i = 0; i < model.size(); ++i)
        if (model.p[i] > 0.0) acc += model.p[i] * (std::log(model.p[i]) - std::log(model.q[i]));
    return acc;
}

/// E_phat log P for a sampler distribution phat whose support lies inside
/// the support of P.
inline double sampled_expected_log_true(const DiscreteJointModel& model, const SamplerDistribution& sampler) {
    model.validate();
    if (sampler.probs.size() != model.size())
        throw InvalidInput("sampler: outcome space size mismatch");
    double total = 0.0;
    for (double v : sampler.probs) {
        if (v < 0.0) throw InvalidInput("sampler: probabilities must be non-negative");
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) throw InvalidInput("sampler: probabilities must sum to 1");
    double acc = 0.0;
    for (std::size_t i = 0; i < model.size(); ++i) {
        if (sampler.probs[i] == 0.0) continue;
        if (model.p[i] <= 0.0)
            throw InvalidInput("sampler: support must lie within the support of P");
        acc += sampler.probs[i] * std::log(model.p[i]);
    }
    return acc;
}

struct MonteCarloEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;
    std::size_t samples = 0;
};

/// Seeded sample mean of f under p with its standard error.
inline MonteCarloEstimate monte_carlo_expectation(const std::function<double(std::size_t)>& f,
                                                  const std::vector<double>& p, std::size_t samples,
                                                  std::uint64_t seed) {
    if (samples < 1) throw InvalidInput("monte_carlo_expectation: need at least one sample");
    if (p.empty()) throw InvalidInput("monte_carlo_expectation: empty distribution");
    std::vector<double> cdf(p.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] < 0.0) throw InvalidInput("monte_carlo_expectation: negative probability");
        acc += p[i];
        cdf[i] = acc;
    }
    if (std::abs(acc - 1.0) > 1e-9) throw InvalidInput("monte_carlo_expectation: probabilities must sum to 1");

    Rng rng(seed);
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        const double u = rng.uniform() * acc;
        std::size_t idx = 0;
        while (idx + 1 < cdf.size() && cdf[idx] <= u) ++idx;
        const double v = f(idx);
        sum += v;
        sumsq += v * v;
    }
    MonteCarloEstimate est;
    est.samples = samples;
    est.mean = sum / static_cast<double>(samples);
    if (samples > 1) {
        const double var =
            std::max(0.0, (sumsq - sum * sum / static_cast<double>(samples)) / static_cast<double>(samples - 1));
        est.stderr_ = std::sqrt(var / static_cast<double>(samples));
    }
    return est;
}

struct OrderingRow {
    std::size_t model_id = 0;
    double h1 = 0.0;  // E_P log P
    double h2 = 0.0;  // E_P log Q
    double h3 = 0.0;  // E_phat log P
    double kl = 0.0;
    bool h2_le_h1 = false;
    bool h3_le_h2 = false;
};

/// Evaluates the three diagnostics per model. h2 <= h1 holds universally
/// (Gibbs); the h3 <= h2 flag is descriptive and depends on the sampler.
inline std::vector<OrderingRow> ordering_check(
    const std::vector<DiscreteJointModel>& models,
    const std::function<SamplerDistribution(const DiscreteJointModel&, std::size_t)>& make_sampler) {
    if (models.empty()) throw InvalidInput("ordering_check: need at least one model");
    std::vector<OrderingRow> rows;
    rows.reserve(models.size());
    for (std::size_t i = 0; i < models.size(); ++i) {
        const auto& m = models[i];
        OrderingRow row;
        row.model_id = i;
        row.h1 = expected_log_true(m);
        row.h2 = expected_log_model(m);
        row.h3 = sampled_expected_log_true(m, make_sampler(m, i));
        row.kl = kl_divergence(m);
        row.h2_le_h1 = row.h2 <= row.h1 + 1e-12;
        row.h3_le_h2 = row.h3 <= row.h2 + 1e-12;
        rows.push_back(row);
    }
    return rows;
}

/// Seeded random model over `outcomes` outcomes. Q is an independent draw,
/// so KL(P||Q) > 0 almost surely.
inline DiscreteJointModel random_model(std::size_t outcomes, std::uint64_t seed, double min_prob = 1e-3) {
    if (outcomes < 2) throw InvalidInput("random_model: need at least two outcomes");
    Rng rng(seed);
    DiscreteJointModel m;
    auto draw = [&](std::vector<double>& v) {
        v.resize(outcomes);
        double total = 0.0;
        for (auto& x : v) {
            x = min_prob + rng.uniform();
            total += x;
        }
        for (auto& x : v) x /= total;
        // renormalize exactly so validate()'s 1e-12 budget holds
        double s = 0.0;
        for (double x : v) s += x;
        v.back() += 1.0 - s;
    };
    draw(m.p);
    draw(m.q);
    return m;
}

}  // namespace mpsams::entropy
