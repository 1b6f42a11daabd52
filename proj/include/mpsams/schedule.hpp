#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "mpsams/errors.hpp"

namespace mpsams {

/// Adaptive masking-ratio schedule: sigma(e) = sigma0 + ln(e)/tau, clamped at
/// sigma_max. Fixed mode returns fixed_ratio regardless of epoch.
struct ScheduleParams {
    enum class Mode { adaptive, fixed };

    double sigma0 = 0.25;
    double tau = 12.0;
    double sigma_max = 0.95;
    Mode mode = Mode::adaptive;
    double fixed_ratio = 0.75;

    void validate() const {
        if (mode == Mode::adaptive) {
            if (!(sigma0 > 0.0 && sigma0 < 1.0)) throw InvalidInput("schedule: sigma0 must be in (0,1)");
            if (!(tau > 0.0)) throw InvalidInput("schedule: tau must be positive");
            if (!(sigma_max > sigma0 && sigma_max <= 1.0))
                throw InvalidInput("schedule: sigma_max must be in (sigma0, 1]");
        } else {
            if (!(fixed_ratio >= 0.0 && fixed_ratio <= 1.0))
                throw InvalidInput("schedule: fixed_ratio must be in [0,1]");
        }
    }

    static ScheduleParams adaptive(double sigma0, double tau, double sigma_max = 0.95) {
        ScheduleParams p;
        p.sigma0 = sigma0;
        p.tau = tau;
        p.sigma_max = sigma_max;
        p.mode = Mode::adaptive;
        return p;
    }

    static ScheduleParams fixed(double ratio) {
        ScheduleParams p;
        p.mode = Mode::fixed;
        p.fixed_ratio = ratio;
        return p;
    }
};

/// Masking ratio for a 1-based epoch. Monotone non-decreasing in epoch.
inline double masking_ratio(int epoch, const ScheduleParams& params) {
    if (epoch < 1) throw InvalidInput("masking_ratio: epoch must be >= 1, got " + std::to_string(epoch));
    params.validate();
    if (params.mode == ScheduleParams::Mode::fixed) return params.fixed_ratio;
    return std::min(params.sigma0 + std::log(static_cast<double>(epoch)) / params.tau, params.sigma_max);
}

/// n = floor(N * ratio), clamped to [1, N-1] whenever 0 < ratio < 1 so that
/// pretraining always sees both masked and visible patches. The floor is
/// snapped upward when N*ratio sits within 1e-9 of an integer, so results
/// agree with exact rational arithmetic for ratios given to a few decimals.
inline int masked_count(int total_patches, double ratio) {
    if (total_patches < 1) throw InvalidInput("masked_count: patch count must be >= 1");
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw InvalidInput("masked_count: ratio must be in [0,1]");
    const double y = static_cast<double>(total_patches) * ratio;
    int n = static_cast<int>(std::floor(y));
    if (static_cast<double>(n + 1) - y <= 1e-9 * std::max(1.0, y)) ++n;
    if (n > total_patches) n = total_patches;
    if (ratio > 0.0 && ratio < 1.0 && total_patches >= 2) n = std::clamp(n, 1, total_patches - 1);
    return n;
}

}  // namespace mpsams
