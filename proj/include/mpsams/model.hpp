#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "mpsams/errors.hpp"
#include "mpsams/patching.hpp"
#include "mpsams/rng.hpp"

namespace mpsams {

/// U-Net shape descriptor. `depth` counts the down/up stages; the spatial
/// size must be divisible by 2^depth at forward time.
struct NetConfig {
    int in_channels = 1;
    int base_channels = 16;
    int depth = 3;
    int out_channels = 1;
    std::string nonlinearity = "relu";  // relu | leaky_relu
    std::string normalization = "none";
    std::uint64_t seed = 0;

    void validate() const {
        if (in_channels < 1 || out_channels < 1) throw InvalidInput("net: channel counts must be positive");
        if (base_channels < 1) throw InvalidInput("net: base_channels must be positive");
        if (depth < 1) throw InvalidInput("net: depth must be >= 1");
        if (nonlinearity != "relu" && nonlinearity != "leaky_relu")
            throw InvalidInput("net: unknown nonlinearity '" + nonlinearity + "'");
        if (normalization != "none")
            throw InvalidInput("net: unknown normalization '" + normalization + "'");
    }

    int stage_channels(int stage) const { return base_channels << stage; }
};

template <class T>
struct NamedTensor {
    std::string name;
    std::vector<std::uint64_t> shape;
    AVec<T> data;
    bool trainable = true;

    std::size_t size() const { return data.size(); }
};

/// Ordered named-tensor collection. Encoder tensors share the "enc." prefix
/// so fine-tuning can select them; the "arch" tensor carries the config so a
/// checkpoint is self-describing.
template <class T>
struct ModelWeights {
    std::vector<NamedTensor<T>> tensors;

    NamedTensor<T>* find(const std::string& name) {
        for (auto& t : tensors)
            if (t.name == name) return &t;
        return nullptr;
    }
    const NamedTensor<T>* find(const std::string& name) const {
        for (const auto& t : tensors)
            if (t.name == name) return &t;
        return nullptr;
    }

    bool finite() const {
        for (const auto& t : tensors)
            for (T v : t.data)
                if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    NetConfig config() const {
        const auto* arch = find("arch");
        if (!arch || arch->data.size() < 6) throw InvalidInput("weights: missing arch descriptor");
        NetConfig cfg;
        cfg.in_channels = static_cast<int>(arch->data[0]);
        cfg.base_channels = static_cast<int>(arch->data[1]);
        cfg.depth = static_cast<int>(arch->data[2]);
        cfg.out_channels = static_cast<int>(arch->data[3]);
        cfg.nonlinearity = arch->data[4] == T(1) ? "leaky_relu" : "relu";
        cfg.normalization = "none";
        return cfg;
    }

    template <class U>
    ModelWeights<U> cast() const {
        ModelWeights<U> out;
        out.tensors.reserve(tensors.size());
        for (const auto& t : tensors) {
            NamedTensor<U> nt;
            nt.name = t.name;
            nt.shape = t.shape;
            nt.trainable = t.trainable;
            nt.data.resize(t.data.size());
            for (std::size_t i = 0; i < t.data.size(); ++i) nt.data[i] = static_cast<U>(t.data[i]);
            out.tensors.push_back(std::move(nt));
        }
        return out;
    }
};

inline constexpr const char* kEncoderPrefix = "enc.";
inline constexpr const char* kMaskTokenName = "mask_token";

namespace detail {

template <class T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;  // col-major

// im2col for a 3x3 kernel with padding 1, stride 1.
// Output layout: (HW x K) col-major with K = channels*9; column (c*9 + ky*3 + kx)
// holds the input channel c shifted by (ky-1, kx-1). Only the padding gaps
// are zeroed, so the buffer can be reused across calls.
template <class T>
void im2col3(const T* src, int channels, int h, int w, AVec<T>& out) {
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    out.resize(hw * channels * 9);
    for (int c = 0; c < channels; ++c) {
        const T* plane = src + static_cast<std::size_t>(c) * hw;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                T* col = out.data() + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * hw;
                const int dy = ky - 1, dx = kx - 1;
                const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                for (int y = 0; y < h; ++y) {
                    const int sy = y + dy;
                    T* row = col + static_cast<std::size_t>(y) * w;
                    if (sy < 0 || sy >= h) {
                        std::fill(row, row + w, T(0));
                        continue;
                    }
                    for (int x = 0; x < x0; ++x) row[x] = T(0);
                    std::memcpy(row + x0, plane + static_cast<std::size_t>(sy) * w + x0 + dx,
                                static_cast<std::size_t>(x1 - x0) * sizeof(T));
                    for (int x = x1; x < w; ++x) row[x] = T(0);
                }
            }
        }
    }
}

// scatter-add of an (HW x K) gradient back onto input planes
template <class T>
void col2im3(const T* cols, int channels, int h, int w, T* dst) {
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    std::fill(dst, dst + hw * channels, T(0));
    for (int c = 0; c < channels; ++c) {
        T* plane = dst + static_cast<std::size_t>(c) * hw;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const T* col = cols + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * hw;
                const int dy = ky - 1, dx = kx - 1;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + dy;
                    if (sy < 0 || sy >= h) continue;
                    const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                    for (int x = x0; x < x1; ++x)
                        plane[static_cast<std::size_t>(sy) * w + x + dx] += col[static_cast<std::size_t>(y) * w + x];
                }
            }
        }
    }
}

}  // namespace detail

/// U-Net over (C,H,W) planes: a stem conv, `depth` pool+conv encoder stages,
/// a mirrored nearest-upsample + skip-concat + conv decoder, and a 1x1 head.
/// Forward records what backward needs into a caller-owned cache so batches
/// can run in parallel with one cache per worker.
template <class T>
class UNet {
public:
    struct Cache {
        int h = 0, w = 0;
        std::vector<AVec<T>> cols;              // im2col matrix per conv layer, reused by backward
        std::vector<AVec<T>> act_out;           // post-activation output per conv layer
        std::vector<std::vector<int>> pool_arg; // argmax flat index per pooled cell
        AVec<T> head_out;                       // logits
        AVec<T> pooled;                         // transient pooled/concat planes
        AVec<T> cat;
        AVec<T> dcols;                          // backward scratch
    };

    explicit UNet(const NetConfig& cfg) : cfg_(cfg) { cfg_.validate(); }

    const NetConfig& config() const { return cfg_; }

    /// Fan-in-scaled normal init, deterministic in the seed; biases zero.
    ModelWeights<T> init(std::uint64_t seed) const {
        ModelWeights<T> w;
        NamedTensor<T> arch;
        arch.name = "arch";
        arch.shape = {6};
        arch.trainable = false;
        arch.data = {static_cast<T>(cfg_.in_channels),  static_cast<T>(cfg_.base_channels),
                     static_cast<T>(cfg_.depth),        static_cast<T>(cfg_.out_channels),
                     static_cast<T>(cfg_.nonlinearity == "leaky_relu" ? 1 : 0), T(0)};
        w.tensors.push_back(std::move(arch));

        Rng rng(derive_seed(seed, {0x756e6574}));
        auto add_conv = [&](const std::string& name, int out_c, int in_c, int k) {
            NamedTensor<T> kw;
            kw.name = name + ".w";
            kw.shape = {static_cast<std::uint64_t>(out_c), static_cast<std::uint64_t>(in_c),
                        static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(k)};
            kw.data.resize(static_cast<std::size_t>(out_c) * in_c * k * k);
            const double scale = std::sqrt(2.0 / (static_cast<double>(in_c) * k * k));
            for (auto& v : kw.data) v = static_cast<T>(rng.normal(0.0, scale));
            w.tensors.push_back(std::move(kw));
            NamedTensor<T> kb;
            kb.name = name + ".b";
            kb.shape = {static_cast<std::uint64_t>(out_c)};
            kb.data.assign(static_cast<std::size_t>(out_c), T(0));
            w.tensors.push_back(std::move(kb));
        };

        add_conv(std::string(kEncoderPrefix) + "0", cfg_.base_channels, cfg_.in_channels, 3);
        for (int d = 1; d <= cfg_.depth; ++d)
            add_conv(std::string(kEncoderPrefix) + std::to_string(d), cfg_.stage_channels(d),
                     cfg_.stage_channels(d - 1), 3);
        for (int d = cfg_.depth; d >= 1; --d)
            add_conv("dec." + std::to_string(d), cfg_.stage_channels(d - 1),
                     cfg_.stage_channels(d) + cfg_.stage_channels(d - 1), 3);
        add_conv("head", cfg_.out_channels, cfg_.base_channels, 1);

        NamedTensor<T> token;
        token.name = kMaskTokenName;
        token.shape = {1};
        token.data = {T(0)};
        token.trainable = false;  // flips on when the learned-token fill is configured
        w.tensors.push_back(std::move(token));
        return w;
    }

    /// Logits (out_channels, H, W). `cache` may be null for inference.
    Image<T> forward(const Image<T>& input, const ModelWeights<T>& weights, Cache* cache) const {
        if (input.channels != cfg_.in_channels)
            throw InvalidInput("unet: input has " + std::to_string(input.channels) + " channels, expected " +
                               std::to_string(cfg_.in_channels));
        const int h = input.height, w = input.width;
        const int div = 1 << cfg_.depth;
        if (h % div != 0 || w % div != 0)
            throw InvalidInput("unet: spatial size " + std::to_string(h) + "x" + std::to_string(w) +
                               " not divisible by 2^depth = " + std::to_string(div));

        Cache local;
        Cache& cc = cache ? *cache : local;
        const int convs = 1 + cfg_.depth + cfg_.depth;
        cc.h = h;
        cc.w = w;
        cc.cols.resize(static_cast<std::size_t>(convs));
        cc.act_out.resize(static_cast<std::size_t>(convs));
        cc.pool_arg.resize(static_cast<std::size_t>(cfg_.depth));

        int layer = 0;
        conv3_forward(weights, "enc.0", input.data.data(), cfg_.in_channels, h, w, cc.act_out[0], cc.cols[0]);
        activation_forward(cc.act_out[0]);
        ++layer;

        // encoder
        std::vector<int> hs{h}, ws{w};
        for (int d = 1; d <= cfg_.depth; ++d) {
            const int ph = hs.back() / 2, pw = ws.back() / 2;
            maxpool_forward(cc.act_out[static_cast<std::size_t>(layer - 1)], cfg_.stage_channels(d - 1), hs.back(),
                            ws.back(), cc.pooled, cc.pool_arg[static_cast<std::size_t>(d - 1)]);
            conv3_forward(weights, std::string(kEncoderPrefix) + std::to_string(d), cc.pooled.data(),
                          cfg_.stage_channels(d - 1), ph, pw, cc.act_out[static_cast<std::size_t>(layer)],
                          cc.cols[static_cast<std::size_t>(layer)]);
            activation_forward(cc.act_out[static_cast<std::size_t>(layer)]);
            hs.push_back(ph);
            ws.push_back(pw);
            ++layer;
        }

        // decoder
        for (int d = cfg_.depth; d >= 1; --d) {
            const int uh = hs[static_cast<std::size_t>(d - 1)], uw = ws[static_cast<std::size_t>(d - 1)];
            const int cu = cfg_.stage_channels(d), cs = cfg_.stage_channels(d - 1);
            cc.cat.resize(static_cast<std::size_t>(cu + cs) * uh * uw);
            upsample2_forward(cc.act_out[static_cast<std::size_t>(layer - 1)], cu, uh / 2, uw / 2, cc.cat.data());
            // skip connection: encoder feature at this resolution
            const AVec<T>& skip = cc.act_out[static_cast<std::size_t>(d - 1)];
            std::copy(skip.begin(), skip.end(), cc.cat.begin() + static_cast<std::size_t>(cu) * uh * uw);
            conv3_forward(weights, "dec." + std::to_string(d), cc.cat.data(), cu + cs, uh, uw,
                          cc.act_out[static_cast<std::size_t>(layer)], cc.cols[static_cast<std::size_t>(layer)]);
            activation_forward(cc.act_out[static_cast<std::size_t>(layer)]);
            ++layer;
        }

        // 1x1 head
        const AVec<T>& g0 = cc.act_out[static_cast<std::size_t>(convs - 1)];
        head_forward(weights, g0, h, w, cc.head_out);

        Image<T> out(cfg_.out_channels, h, w);
        out.data = cc.head_out;
        return out;
    }

    /// Accumulates parameter gradients for one sample into `grads` (same
    /// tensor layout as the weights; call zero_like first for a fresh start).
    /// `dinput` (optional) receives the gradient with respect to the input.
    void backward(const ModelWeights<T>& weights, Cache& cc, const AVec<T>& dlogits,
                  ModelWeights<T>& grads, Image<T>* dinput = nullptr) const {
        const int h = cc.h, w = cc.w;
        const int convs = 1 + 2 * cfg_.depth;
        std::vector<int> hs{h}, ws{w};
        for (int d = 1; d <= cfg_.depth; ++d) {
            hs.push_back(hs.back() / 2);
            ws.push_back(ws.back() / 2);
        }

        // head backward
        AVec<T> dg0;
        head_backward(weights, grads, cc.act_out[static_cast<std::size_t>(convs - 1)], dlogits, h, w, dg0);

        int layer = convs - 1;
        AVec<T> dcur = std::move(dg0);
        // decoder stages in reverse; dskip[j] collects the gradient flowing
        // into the encoder feature act_out[j] through its skip connection
        std::vector<AVec<T>> dskip(static_cast<std::size_t>(cfg_.depth));
        for (int d = 1; d <= cfg_.depth; ++d) {
            const int uh = hs[static_cast<std::size_t>(d - 1)], uw = ws[static_cast<std::size_t>(d - 1)];
            const int cu = cfg_.stage_channels(d), cs = cfg_.stage_channels(d - 1);
            activation_backward(cc.act_out[static_cast<std::size_t>(layer)], dcur);
            AVec<T> dcat;
            conv3_backward(weights, grads, "dec." + std::to_string(d), cc.cols[static_cast<std::size_t>(layer)],
                           cu + cs, uh, uw, dcur, &dcat, cc.dcols);
            // split: first cu channels flow to the upsample, the rest to the skip
            dskip[static_cast<std::size_t>(d - 1)].assign(dcat.begin() + static_cast<std::size_t>(cu) * uh * uw,
                                                          dcat.end());
            AVec<T> dup(static_cast<std::size_t>(cu) * (uh / 2) * (uw / 2));
            upsample2_backward(dcat.data(), cu, uh / 2, uw / 2, dup);
            dcur = std::move(dup);
            --layer;
        }

        // encoder stages in reverse; dcur currently matches the deepest conv output
        for (int d = cfg_.depth; d >= 1; --d) {
            activation_backward(cc.act_out[static_cast<std::size_t>(layer)], dcur);
            AVec<T> dpooled;
            conv3_backward(weights, grads, std::string(kEncoderPrefix) + std::to_string(d),
                           cc.cols[static_cast<std::size_t>(layer)], cfg_.stage_channels(d - 1),
                           hs[static_cast<std::size_t>(d)], ws[static_cast<std::size_t>(d)], dcur, &dpooled,
                           cc.dcols);
            AVec<T> dfull;
            maxpool_backward(dpooled, cfg_.stage_channels(d - 1), hs[static_cast<std::size_t>(d - 1)],
                             ws[static_cast<std::size_t>(d - 1)], cc.pool_arg[static_cast<std::size_t>(d - 1)], dfull);
            const AVec<T>& skip_grad = dskip[static_cast<std::size_t>(d - 1)];
            for (std::size_t i = 0; i < dfull.size(); ++i) dfull[i] += skip_grad[i];
            dcur = std::move(dfull);
            --layer;
        }

        activation_backward(cc.act_out[0], dcur);
        AVec<T> dstem_in;
        conv3_backward(weights, grads, "enc.0", cc.cols[0], cfg_.in_channels, h, w, dcur,
                       dinput ? &dstem_in : nullptr, cc.dcols);
        if (dinput) {
            *dinput = Image<T>(cfg_.in_channels, h, w);
            dinput->data = std::move(dstem_in);
        }
    }

    ModelWeights<T> zero_like(const ModelWeights<T>& weights) const {
        ModelWeights<T> g;
        g.tensors.reserve(weights.tensors.size());
        for (const auto& t : weights.tensors) {
            NamedTensor<T> z;
            z.name = t.name;
            z.shape = t.shape;
            z.trainable = t.trainable;
            z.data.assign(t.data.size(), T(0));
            g.tensors.push_back(std::move(z));
        }
        return g;
    }

private:
    using EMat = detail::EMat<T>;
    using ConstMap = Eigen::Map<const EMat>;
    using Map = Eigen::Map<EMat>;

    void activation_forward(AVec<T>& v) const {
        if (cfg_.nonlinearity == "relu") {
            for (auto& x : v) x = x > T(0) ? x : T(0);
        } else {
            for (auto& x : v) x = x > T(0) ? x : T(0.01) * x;
        }
    }

    // uses the stored outputs: the sign survives both relu variants
    void activation_backward(const AVec<T>& out, AVec<T>& d) const {
        const T slope = cfg_.nonlinearity == "relu" ? T(0) : T(0.01);
        for (std::size_t i = 0; i < d.size(); ++i)
            if (out[i] <= T(0)) d[i] *= slope;
    }

    void conv3_forward(const ModelWeights<T>& weights, const std::string& name, const T* src, int in_c, int h,
                       int w, AVec<T>& out, AVec<T>& cols) const {
        const auto* kw = weights.find(name + ".w");
        const auto* kb = weights.find(name + ".b");
        if (!kw || !kb) throw InvalidInput("unet: missing tensor " + name);
        const int out_c = static_cast<int>(kw->shape[0]);
        const std::size_t hw = static_cast<std::size_t>(h) * w;
        detail::im2col3(src, in_c, h, w, cols);
        out.resize(hw * out_c);
        ConstMap x(cols.data(), static_cast<Eigen::Index>(hw), in_c * 9);
        ConstMap wt(kw->data.data(), in_c * 9, out_c);  // row-major (out_c x K) viewed as (K x out_c)
        Map y(out.data(), static_cast<Eigen::Index>(hw), out_c);
        y.noalias() = x * wt;
        for (int c = 0; c < out_c; ++c) y.col(c).array() += kb->data[static_cast<std::size_t>(c)];
    }

    // consumes the im2col matrix recorded by the forward pass
    void conv3_backward(const ModelWeights<T>& weights, ModelWeights<T>& grads, const std::string& name,
                        const AVec<T>& cols, int in_c, int h, int w, const AVec<T>& dout,
                        AVec<T>* dinput, AVec<T>& dcols) const {
        const auto* kw = weights.find(name + ".w");
        auto* gw = grads.find(name + ".w");
        auto* gb = grads.find(name + ".b");
        const int out_c = static_cast<int>(kw->shape[0]);
        const std::size_t hw = static_cast<std::size_t>(h) * w;
        ConstMap x(cols.data(), static_cast<Eigen::Index>(hw), in_c * 9);
        ConstMap dy(dout.data(), static_cast<Eigen::Index>(hw), out_c);
        Map gwm(gw->data.data(), in_c * 9, out_c);
        gwm.noalias() += x.transpose() * dy;
        for (int c = 0; c < out_c; ++c) gb->data[static_cast<std::size_t>(c)] += dy.col(c).sum();
        if (dinput) {
            dcols.resize(hw * in_c * 9);
            Map dx(dcols.data(), static_cast<Eigen::Index>(hw), in_c * 9);
            ConstMap wt(kw->data.data(), in_c * 9, out_c);
            dx.noalias() = dy * wt.transpose();
            dinput->resize(hw * in_c);
            detail::col2im3(dcols.data(), in_c, h, w, dinput->data());
        }
    }

    void head_forward(const ModelWeights<T>& weights, const AVec<T>& src, int h, int w,
                      AVec<T>& out) const {
        const auto* kw = weights.find("head.w");
        const auto* kb = weights.find("head.b");
        const int in_c = cfg_.base_channels, out_c = cfg_.out_channels;
        const std::size_t hw = static_cast<std::size_t>(h) * w;
        out.resize(hw * out_c);
        ConstMap x(src.data(), static_cast<Eigen::Index>(hw), in_c);
        ConstMap wt(kw->data.data(), in_c, out_c);
        Map y(out.data(), static_cast<Eigen::Index>(hw), out_c);
        y.noalias() = x * wt;
        for (int c = 0; c < out_c; ++c) y.col(c).array() += kb->data[static_cast<std::size_t>(c)];
    }

    void head_backward(const ModelWeights<T>& weights, ModelWeights<T>& grads, const AVec<T>& input,
                       const AVec<T>& dout, int h, int w, AVec<T>& dinput) const {
        const auto* kw = weights.find("head.w");
        auto* gw = grads.find("head.w");
        auto* gb = grads.find("head.b");
        const int in_c = cfg_.base_channels, out_c = cfg_.out_channels;
        const std::size_t hw = static_cast<std::size_t>(h) * w;
        ConstMap x(input.data(), static_cast<Eigen::Index>(hw), in_c);
        ConstMap dy(dout.data(), static_cast<Eigen::Index>(hw), out_c);
        Map gwm(gw->data.data(), in_c, out_c);
        gwm.noalias() += x.transpose() * dy;
        for (int c = 0; c < out_c; ++c) gb->data[static_cast<std::size_t>(c)] += dy.col(c).sum();
        dinput.resize(hw * in_c);
        Map dx(dinput.data(), static_cast<Eigen::Index>(hw), in_c);
        ConstMap wt(kw->data.data(), in_c, out_c);
        dx.noalias() = dy * wt.transpose();
    }

    // 2x2 max pooling; ties resolve to the first cell in scan order
    void maxpool_forward(const AVec<T>& src, int channels, int h, int w, AVec<T>& out,
                         std::vector<int>& argmax) const {
        const int ph = h / 2, pw = w / 2;
        out.resize(static_cast<std::size_t>(channels) * ph * pw);
        argmax.resize(out.size());
        for (int c = 0; c < channels; ++c) {
            const T* plane = src.data() + static_cast<std::size_t>(c) * h * w;
            T* dst = out.data() + static_cast<std::size_t>(c) * ph * pw;
            int* arg = argmax.data() + static_cast<std::size_t>(c) * ph * pw;
            for (int y = 0; y < ph; ++y) {
                for (int x = 0; x < pw; ++x) {
                    const int base = 2 * y * w + 2 * x;
                    int best = base;
                    T val = plane[base];
                    for (int idx : {base + 1, base + w, base + w + 1}) {
                        if (plane[idx] > val) {
                            val = plane[idx];
                            best = idx;
                        }
                    }
                    dst[static_cast<std::size_t>(y) * pw + x] = val;
                    arg[static_cast<std::size_t>(y) * pw + x] = best;
                }
            }
        }
    }

    void maxpool_backward(const AVec<T>& dout, int channels, int h, int w,
                          const std::vector<int>& argmax, AVec<T>& dinput) const {
        const int ph = h / 2, pw = w / 2;
        dinput.assign(static_cast<std::size_t>(channels) * h * w, T(0));
        for (int c = 0; c < channels; ++c) {
            const T* dsrc = dout.data() + static_cast<std::size_t>(c) * ph * pw;
            const int* arg = argmax.data() + static_cast<std::size_t>(c) * ph * pw;
            T* dplane = dinput.data() + static_cast<std::size_t>(c) * h * w;
            for (std::size_t i = 0; i < static_cast<std::size_t>(ph) * pw; ++i) dplane[arg[i]] += dsrc[i];
        }
    }

    // nearest-neighbor 2x upsampling from (h, w) into a (2h, 2w) destination
    void upsample2_forward(const AVec<T>& src, int channels, int h, int w, T* dst) const {
        const int uh = 2 * h, uw = 2 * w;
        for (int c = 0; c < channels; ++c) {
            const T* plane = src.data() + static_cast<std::size_t>(c) * h * w;
            T* out = dst + static_cast<std::size_t>(c) * uh * uw;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const T v = plane[static_cast<std::size_t>(y) * w + x];
                    T* row0 = out + static_cast<std::size_t>(2 * y) * uw + 2 * x;
                    row0[0] = v;
                    row0[1] = v;
                    row0[uw] = v;
                    row0[uw + 1] = v;
                }
        }
    }

    void upsample2_backward(const T* dout, int channels, int h, int w, AVec<T>& dinput) const {
        const int uh = 2 * h, uw = 2 * w;
        dinput.resize(static_cast<std::size_t>(channels) * h * w);
        for (int c = 0; c < channels; ++c) {
            const T* dsrc = dout + static_cast<std::size_t>(c) * uh * uw;
            T* dplane = dinput.data() + static_cast<std::size_t>(c) * h * w;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const T* row0 = dsrc + static_cast<std::size_t>(2 * y) * uw + 2 * x;
                    dplane[static_cast<std::size_t>(y) * w + x] = row0[0] + row0[1] + row0[uw] + row0[uw + 1];
                }
        }
    }

    NetConfig cfg_;
};

// ---------------------------------------------------------------------------
// Spec-level operations
// ---------------------------------------------------------------------------

template <class T>
ModelWeights<T> init_weights(const NetConfig& cfg, std::uint64_t seed) {
    return UNet<T>(cfg).init(seed);
}

/// Autoencoder forward pass: same-size output, linear head.
template <class T>
Image<T> reconstruct(const Image<T>& masked_image, const ModelWeights<T>& weights) {
    UNet<T> net(weights.config());
    return net.forward(masked_image, weights, nullptr);
}

/// Segmentation forward pass: per-pixel probabilities via a sigmoid head.
template <class T>
Image<T> segment(const Image<T>& image, const ModelWeights<T>& weights) {
    UNet<T> net(weights.config());
    Image<T> logits = net.forward(image, weights, nullptr);
    for (auto& v : logits.data) v = T(1) / (T(1) + std::exp(-v));
    return logits;
}

struct ReconstructionLoss {
    double total = 0.0;                   // sum over masked patches of squared pixel error
    double mean_per_masked_pixel = 0.0;   // for logging only; the gradient uses the sum
    std::vector<double> per_patch;        // aligned with plan.masked_indices()
    bool empty_mask = false;
};

/// Masked reconstruction loss: the sum over the n masked patches of squared
/// pixel differences. Visible patches contribute exactly zero.
template <class T>
ReconstructionLoss reconstruction_loss(const Image<T>& reconstructed, const Image<T>& original,
                                       const MaskPlan& plan, Image<T>* grad = nullptr) {
    if (reconstructed.channels != original.channels || reconstructed.height != original.height ||
        reconstructed.width != original.width)
        throw InvalidInput("reconstruction_loss: shape mismatch");
    const PatchGrid grid = plan.grid;
    if (grid.rows * grid.patch_size != original.height || grid.cols * grid.patch_size != original.width ||
        grid.channels != original.channels)
        throw InvalidInput("reconstruction_loss: plan grid does not match image shape");

    ReconstructionLoss loss;
    if (grad) {
        *grad = Image<T>(original.channels, original.height, original.width, T(0));
    }
    if (plan.n == 0) {
        loss.empty_mask = true;
        return loss;
    }
    const int ps = grid.patch_size;
    loss.per_patch.reserve(static_cast<std::size_t>(plan.n));
    for (int i = 0; i < plan.n; ++i) {
        const int p = plan.order[static_cast<std::size_t>(i)];
        const int r = p / grid.cols, c = p % grid.cols;
        double acc = 0.0;
        for (int ch = 0; ch < grid.channels; ++ch)
            for (int py = 0; py < ps; ++py)
                for (int px = 0; px < ps; ++px) {
                    const int y = r * ps + py, x = c * ps + px;
                    const double diff = static_cast<double>(reconstructed.at(ch, y, x)) -
                                        static_cast<double>(original.at(ch, y, x));
                    acc += diff * diff;
                    if (grad) grad->at(ch, y, x) = static_cast<T>(2.0 * diff);
                }
        loss.per_patch.push_back(acc);
        loss.total += acc;
    }
    loss.mean_per_masked_pixel =
        loss.total / (static_cast<double>(plan.n) * grid.channels * ps * ps);
    return loss;
}

/// Copies every "enc."-prefixed tensor from `pretrained` into `target`.
/// Returns the number of transferred tensors; zero means nothing matched.
template <class T>
int transfer_encoder(const ModelWeights<T>& pretrained, ModelWeights<T>& target) {
    int transferred = 0;
    std::vector<std::string> offenders;
    for (const auto& src : pretrained.tensors) {
        if (src.name.rfind(kEncoderPrefix, 0) != 0) continue;
        auto* dst = target.find(src.name);
        if (!dst) {
            offenders.push_back(src.name + " (missing in target)");
            continue;
        }
        if (dst->shape != src.shape) {
            offenders.push_back(src.name);
            continue;
        }
        dst->data = src.data;
        ++transferred;
    }
    if (!offenders.empty()) {
        std::string msg = "transfer_encoder: shape/name mismatch on";
        for (const auto& o : offenders) msg += " " + o;
        throw TrainingError(msg);
    }
    return transferred;
}

// ---------------------------------------------------------------------------
// Checkpoint format (bit-exact):
//   magic "MPSW", u32 LE version, u32 LE tensor count, then per tensor:
//   u32 LE name length, UTF-8 name, u32 LE rank, u64 LE dims, f32 LE data.
//   Trailing u64 LE checksum: sum of all tensor data bytes mod 2^64.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct ByteReader {
    const unsigned char* p;
    std::size_t len;
    std::size_t off = 0;

    void need(std::size_t n) const {
        if (off + n > len) throw IoError("checkpoint: truncated file");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[off + i]) << (8 * i);
        off += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[off + i]) << (8 * i);
        off += 8;
        return v;
    }
};

}  // namespace detail

/// Serializes float32 weights; a double model is narrowed to float32 first.
inline std::string encode_checkpoint(const ModelWeights<float>& weights) {
    std::string out;
    out += "MPSW";
    detail::put_u32(out, kCheckpointVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(weights.tensors.size()));
    std::uint64_t checksum = 0;
    for (const auto& t : weights.tensors) {
        detail::put_u32(out, static_cast<std::uint32_t>(t.name.size()));
        out += t.name;
        detail::put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
        for (std::uint64_t d : t.shape) detail::put_u64(out, d);
        static_assert(sizeof(float) == 4);
        const auto* bytes = reinterpret_cast<const unsigned char*>(t.data.data());
        const std::size_t nbytes = t.data.size() * 4;
        out.append(reinterpret_cast<const char*>(bytes), nbytes);
        for (std::size_t i = 0; i < nbytes; ++i) checksum += bytes[i];
    }
    detail::put_u64(out, checksum);
    return out;
}

inline ModelWeights<float> decode_checkpoint(const std::string& bytes) {
    detail::ByteReader r{reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()};
    r.need(4);
    if (std::memcmp(bytes.data(), "MPSW", 4) != 0) throw IoError("checkpoint: bad magic");
    r.off = 4;
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw IoError("checkpoint: unsupported version " + std::to_string(version));
    const std::uint32_t count = r.u32();
    ModelWeights<float> weights;
    weights.tensors.reserve(count);
    std::uint64_t checksum = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor<float> t;
        const std::uint32_t name_len = r.u32();
        r.need(name_len);
        t.name.assign(bytes.data() + r.off, name_len);
        r.off += name_len;
        const std::uint32_t rank = r.u32();
        std::uint64_t total = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            t.shape.push_back(r.u64());
            total *= t.shape.back();
        }
        if (total > (1ull << 32)) throw IoError("checkpoint: implausible tensor size");
        r.need(total * 4);
        t.data.resize(total);
        std::memcpy(t.data.data(), bytes.data() + r.off, total * 4);
        for (std::size_t b = 0; b < total * 4; ++b)
            checksum += static_cast<unsigned char>(bytes[r.off + b]);
        r.off += total * 4;
        t.trainable = t.name != "arch" && t.name != kMaskTokenName;
        weights.tensors.push_back(std::move(t));
    }
    const std::uint64_t stored = r.u64();
    if (stored != checksum) throw IoError("checkpoint: checksum mismatch");
    if (r.off != bytes.size()) throw IoError("checkpoint: trailing bytes");
    return weights;
}

inline void save_checkpoint(const std::string& path, const ModelWeights<float>& weights) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("checkpoint: cannot open " + path + " for writing");
    const std::string bytes = encode_checkpoint(weights);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("checkpoint: write failed for " + path);
}

inline ModelWeights<float> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace mpsams
