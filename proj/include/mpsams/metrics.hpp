#pragma once

#include <cstdint>
#include <vector>

#include "mpsams/errors.hpp"
#include "mpsams/patching.hpp"

namespace mpsams {

/// Binary pixel mask with image geometry.
struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;  // 0 or 1, row-major

    BinaryMask() = default;
    BinaryMask(int h, int w, std::uint8_t fill = 0)
        : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

    std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
    std::size_t positives() const {
        std::size_t n = 0;
        for (auto v : data) n += (v != 0);
        return n;
    }
};

/// Confusion counts plus the three ratios.
///
/// Empty-denominator conventions (fixed so scores stay comparable):
///   both masks empty           -> ppv = sen = dsc = 1
///   pred empty, gt non-empty   -> ppv = 0
///   gt empty, pred non-empty   -> sen = 0
struct SegMetrics {
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
    double ppv = 0.0, sen = 0.0, dsc = 0.0;
};

/// pixel >= threshold counts as positive (inclusive).
template <class T>
BinaryMask binarize(const Image<T>& prob_map, double threshold = 0.5) {
    if (prob_map.channels != 1) throw InvalidInput("binarize: probability map must be single-channel");
    BinaryMask out(prob_map.height, prob_map.width);
    for (std::size_t i = 0; i < prob_map.data.size(); ++i)
        out.data[i] = static_cast<double>(prob_map.data[i]) >= threshold ? 1 : 0;
    return out;
}

inline SegMetrics compute_metrics(const BinaryMask& pred, const BinaryMask& gt) {
    if (pred.height != gt.height || pred.width != gt.width)
        throw InvalidInput("compute_metrics: mask shapes differ");
    SegMetrics m;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const bool p = pred.data[i] != 0;
        const bool g = gt.data[i] != 0;
        if (p && g)
            ++m.tp;
        else if (p && !g)
            ++m.fp;
        else if (!p && g)
            ++m.fn;
        else
            ++m.tn;
    }
    if (m.tp == 0 && m.fp == 0 && m.fn == 0) {
        m.ppv = m.sen = m.dsc = 1.0;
        return m;
    }
    m.ppv = (m.tp + m.fp) > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
    m.sen = (m.tp + m.fn) > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
    m.dsc = static_cast<double>(2 * m.tp) / static_cast<double>(2 * m.tp + m.fp + m.fn);
    return m;
}

/// Dataset-level aggregation. Per-case averaging is the default; pooled
/// accumulates the confusion counts over all pairs first.
enum class MetricAggregation { per_image, pooled };

inline SegMetrics aggregate_metrics(const std::vector<SegMetrics>& per_image,
                                    MetricAggregation mode = MetricAggregation::per_image) {
    SegMetrics out;
    if (per_image.empty()) throw InvalidInput("aggregate_metrics: no per-image metrics");
    if (mode == MetricAggregation::pooled) {
        for (const auto& m : per_image) {
            out.tp += m.tp;
            out.fp += m.fp;
            out.fn += m.fn;
            out.tn += m.tn;
        }
        if (out.tp == 0 && out.fp == 0 && out.fn == 0) {
            out.ppv = out.sen = out.dsc = 1.0;
        } else {
            out.ppv = (out.tp + out.fp) > 0 ? static_cast<double>(out.tp) / (out.tp + out.fp) : 0.0;
            out.sen = (out.tp + out.fn) > 0 ? static_cast<double>(out.tp) / (out.tp + out.fn) : 0.0;
            out.dsc = static_cast<double>(2 * out.tp) / static_cast<double>(2 * out.tp + out.fp + out.fn);
        }
        return out;
    }
    for (const auto& m : per_image) {
        out.tp += m.tp;
        out.fp += m.fp;
        out.fn += m.fn;
        out.tn += m.tn;
        out.ppv += m.ppv;
        out.sen += m.sen;
        out.dsc += m.dsc;
    }
    const double k = static_cast<double>(per_image.size());
    out.ppv /= k;
    out.sen /= k;
    out.dsc /= k;
    return out;
}

}  // namespace mpsams
