#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mpsams/errors.hpp"
#include "mpsams/model.hpp"

namespace mpsams {

/// Per-phase training hyperparameters. `warmup_epochs` = 0 picks the
/// default of 5% of the epoch budget (minimum 1) when the warmup-cosine
/// schedule is selected.
struct TrainConfig {
    double learning_rate = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 1e-4;
    int batch_size = 16;
    int epochs = 100;
    std::string lr_schedule = "constant";  // constant | warmup-cosine
    int warmup_epochs = 0;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(learning_rate > 0.0)) throw InvalidInput("train: learning rate must be positive");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
            throw InvalidInput("train: moment decays must be in [0,1)");
        if (!(epsilon > 0.0)) throw InvalidInput("train: epsilon must be positive");
        if (weight_decay < 0.0) throw InvalidInput("train: weight decay must be non-negative");
        if (batch_size < 1) throw InvalidInput("train: batch size must be >= 1");
        if (epochs < 0) throw InvalidInput("train: epochs must be >= 0");
        if (lr_schedule != "constant" && lr_schedule != "warmup-cosine")
            throw InvalidInput("train: unknown lr schedule '" + lr_schedule + "'");
        if (warmup_epochs < 0) throw InvalidInput("train: warmup epochs must be >= 0");
    }
};

/// Learning rate for a 0-based epoch. Warmup-cosine ramps linearly to the
/// peak over the warmup, then cosine-decays to 1% of the peak at the final
/// epoch.
inline double lr_at_epoch(int epoch, const TrainConfig& cfg) {
    if (epoch < 0) throw InvalidInput("lr_at_epoch: epoch must be >= 0");
    if (cfg.lr_schedule == "constant") return cfg.learning_rate;
    const int total = cfg.epochs;
    int warmup = cfg.warmup_epochs;
    if (warmup == 0) warmup = std::max(1, static_cast<int>(std::floor(0.05 * total)));
    if (epoch < warmup) return cfg.learning_rate * static_cast<double>(epoch + 1) / warmup;
    const double floor_lr = 0.01 * cfg.learning_rate;
    const int last = total - 1;
    if (last <= warmup) return cfg.learning_rate;
    const double progress = static_cast<double>(epoch - warmup) / static_cast<double>(last - warmup);
    return floor_lr + (cfg.learning_rate - floor_lr) * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

/// Adaptive moment estimation with classic L2 weight decay folded into the
/// gradient. Skips non-trainable tensors. State is keyed by tensor index,
/// so the weight/gradient collections must keep a stable layout.
template <class T>
class Adam {
public:
    explicit Adam(const TrainConfig& cfg) : cfg_(cfg) { cfg_.validate(); }

    void step(ModelWeights<T>& weights, const ModelWeights<T>& grads, double lr) {
        if (grads.tensors.size() != weights.tensors.size())
            throw InvalidInput("adam: gradient layout does not match weights");
        if (m_.empty()) {
            m_.resize(weights.tensors.size());
            v_.resize(weights.tensors.size());
            for (std::size_t i = 0; i < weights.tensors.size(); ++i) {
                m_[i].assign(weights.tensors[i].data.size(), 0.0);
                v_[i].assign(weights.tensors[i].data.size(), 0.0);
            }
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (std::size_t i = 0; i < weights.tensors.size(); ++i) {
            auto& wt = weights.tensors[i];
            if (!wt.trainable) continue;
            const auto& gt = grads.tensors[i];
            if (gt.data.size() != wt.data.size()) throw InvalidInput("adam: tensor size mismatch at " + wt.name);
            for (std::size_t k = 0; k < wt.data.size(); ++k) {
                const double g = static_cast<double>(gt.data[k]) + cfg_.weight_decay * static_cast<double>(wt.data[k]);
                m_[i][k] = cfg_.beta1 * m_[i][k] + (1.0 - cfg_.beta1) * g;
                v_[i][k] = cfg_.beta2 * v_[i][k] + (1.0 - cfg_.beta2) * g * g;
                const double mhat = m_[i][k] / bc1;
                const double vhat = v_[i][k] / bc2;
                wt.data[k] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + cfg_.epsilon));
            }
        }
    }

    int steps_taken() const { return t_; }

private:
    TrainConfig cfg_;
    int t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

// ---------------------------------------------------------------------------
// Supervised segmentation loss: pixelwise binary cross-entropy plus soft
// Dice, equal weights. Works on logits; the sigmoid is folded in.
// ---------------------------------------------------------------------------

struct SegLoss {
    double total = 0.0;
    double bce = 0.0;
    double dice = 0.0;  // 1 - soft dice coefficient
};

template <class T>
SegLoss segmentation_loss(const AVec<T>& logits, const std::vector<std::uint8_t>& target,
                          AVec<T>* dlogits = nullptr) {
    if (logits.size() != target.size()) throw InvalidInput("segmentation_loss: size mismatch");
    const std::size_t n = logits.size();
    if (n == 0) throw InvalidInput("segmentation_loss: empty input");
    const double eps = 1e-7;
    std::vector<double> p(n);
    double sum_p = 0.0, sum_g = 0.0, sum_pg = 0.0, bce = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = static_cast<double>(logits[i]);
        const double pi = 1.0 / (1.0 + std::exp(-x));
        p[i] = pi;
        const double g = target[i] ? 1.0 : 0.0;
        sum_p += pi;
        sum_g += g;
        sum_pg += pi * g;
        bce -= g * std::log(pi + eps) + (1.0 - g) * std::log(1.0 - pi + eps);
    }
    bce /= static_cast<double>(n);
    const double smooth = 1.0;
    const double denom = sum_p + sum_g + smooth;
    const double dice_coef = (2.0 * sum_pg + smooth) / denom;

    SegLoss loss;
    loss.bce = bce;
    loss.dice = 1.0 - dice_coef;
    loss.total = loss.bce + loss.dice;

    if (dlogits) {
        dlogits->resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double pi = p[i];
            const double g = target[i] ? 1.0 : 0.0;
            const double dbce_dp = (-g / (pi + eps) + (1.0 - g) / (1.0 - pi + eps)) / static_cast<double>(n);
            const double ddice_dp = -(2.0 * g * denom - (2.0 * sum_pg + smooth)) / (denom * denom);
            const double dp_dx = pi * (1.0 - pi);
            (*dlogits)[i] = static_cast<T>((dbce_dp + ddice_dp) * dp_dx);
        }
    }
    return loss;
}

}  // namespace mpsams
