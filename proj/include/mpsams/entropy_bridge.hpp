#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mpsams/entropy.hpp"
#include "mpsams/errors.hpp"
#include "mpsams/metrics.hpp"
#include "mpsams/patching.hpp"
#include "mpsams/selection.hpp"

namespace mpsams::entropy {

/// Joint model over mask choices for a tiny image: outcomes enumerate the
/// n-subsets of its N patches. P favors masks that cover lesion patches
/// (the informative choices); Q is a flattened misspecification of P. The
/// deterministic masked-patch selection picks exactly one outcome, which is
/// what the `mps-induced` sampler concentrates on.
struct MaskOutcomeModel {
    DiscreteJointModel model;
    std::vector<std::vector<int>> outcomes;  // masked patch-index sets, each sorted
    std::size_t mps_outcome = 0;
};

inline MaskOutcomeModel make_mask_outcome_model(const ImageD& image, const BinaryMask& lesion, int patch_size,
                                                int masked, std::uint64_t seed) {
    const auto patches = patchify(image, patch_size);
    const int total = patches.grid.count();
    if (masked < 1 || masked >= total)
        throw InvalidInput("mask outcome model: masked count must be in [1, N-1]");
    // keep the outcome space exactly enumerable
    double combos = 1.0;
    for (int i = 0; i < masked; ++i) combos = combos * (total - i) / (i + 1);
    if (combos > 250000.0)
        throw InvalidInput("mask outcome model: C(N, n) too large to enumerate");

    std::vector<char> patch_has_lesion(static_cast<std::size_t>(total), 0);
    for (int r = 0; r < patches.grid.rows; ++r)
        for (int c = 0; c < patches.grid.cols; ++c) {
            bool any = false;
            for (int py = 0; py < patch_size && !any; ++py)
                for (int px = 0; px < patch_size; ++px)
                    if (lesion.at(r * patch_size + py, c * patch_size + px)) {
                        any = true;
                        break;
                    }
            patch_has_lesion[static_cast<std::size_t>(r) * patches.grid.cols + c] = any;
        }

    MaskOutcomeModel out;
    std::vector<int> subset(static_cast<std::size_t>(masked));
    for (int i = 0; i < masked; ++i) subset[static_cast<std::size_t>(i)] = i;
    std::vector<double> weights;
    while (true) {
        int lesion_hits = 0;
        for (int idx : subset) lesion_hits += patch_has_lesion[static_cast<std::size_t>(idx)];
        out.outcomes.push_back(subset);
        weights.push_back(std::exp(static_cast<double>(lesion_hits)));
        // next n-combination in lexicographic order
        int i = masked - 1;
        while (i >= 0 && subset[static_cast<std::size_t>(i)] == total - masked + i) --i;
        if (i < 0) break;
        ++subset[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < masked; ++j) subset[static_cast<std::size_t>(j)] = subset[static_cast<std::size_t>(j - 1)] + 1;
    }

    double total_weight = 0.0;
    for (double w : weights) total_weight += w;
    out.model.p.resize(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) out.model.p[i] = weights[i] / total_weight;
    // Q: a flatter (power 0.7) version of P, i.e. an imperfectly learned model
    out.model.q.resize(weights.size());
    double qsum = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        out.model.q[i] = std::pow(out.model.p[i], 0.7);
        qsum += out.model.q[i];
    }
    for (auto& q : out.model.q) q /= qsum;
    // exact renormalization so validate()'s tolerance holds
    double ps = 0.0, qs = 0.0;
    for (double v : out.model.p) ps += v;
    for (double v : out.model.q) qs += v;
    out.model.p.back() += 1.0 - ps;
    out.model.q.back() += 1.0 - qs;

    // the subset the masked-patch selection strategy actually picks
    const MaskPlan plan = make_mask_plan(mps_order(patches, ClusterMethod::kmeans, seed), masked);
    std::vector<int> chosen = plan.masked_indices();
    std::sort(chosen.begin(), chosen.end());
    for (std::size_t i = 0; i < out.outcomes.size(); ++i)
        if (out.outcomes[i] == chosen) {
            out.mps_outcome = i;
            break;
        }
    return out;
}

/// Built-in sampler strategies for the diagnostics.
inline SamplerDistribution make_sampler(const std::string& strategy, const DiscreteJointModel& model,
                                        std::size_t mps_outcome = 0) {
    if (strategy == "uniform") return SamplerDistribution::uniform(model);
    if (strategy == "mps-induced") {
        auto s = SamplerDistribution::point_mass(mps_outcome, model.size(), "mps-induced");
        return s;
    }
    throw InvalidInput("make_sampler: unknown strategy '" + strategy + "'");
}

}  // namespace mpsams::entropy
