#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mpsams/aligned.hpp"
#include "mpsams/errors.hpp"

namespace mpsams {

/// Dense (channels, height, width) image, values normalized to [0,1].
/// Storage is channel-major: data[(c*height + y)*width + x].
template <class T>
struct Image {
    int channels = 0;
    int height = 0;
    int width = 0;
    AVec<T> data;

    Image() = default;
    Image(int c, int h, int w, T fill = T(0))
        : channels(c), height(h), width(w),
          data(static_cast<std::size_t>(c) * h * w, fill) {}

    T& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    const T& at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    std::size_t size() const { return data.size(); }

    bool finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <class U>
    Image<U> cast() const {
        Image<U> out(channels, height, width);
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

using ImageF = Image<float>;
using ImageD = Image<double>;

/// Geometry of a non-overlapping patch decomposition.
struct PatchGrid {
    int patch_size = 0;
    int rows = 0;
    int cols = 0;
    int channels = 0;

    int count() const { return rows * cols; }
    int patch_length() const { return channels * patch_size * patch_size; }

    bool operator==(const PatchGrid&) const = default;
};

/// The N flattened patch vectors of an image, in row-major grid order.
/// Within a patch the layout is channel-major then row-major.
template <class T>
struct PatchSet {
    PatchGrid grid;
    std::vector<std::vector<T>> patches;
};

enum class PatchLabel : std::uint8_t { background = 0, lesion = 1 };

/// How masked pixels are filled: a constant after normalization (default 0)
/// or a scalar token whose value is learned during pretraining.
struct MaskFill {
    enum class Kind { constant, token } kind = Kind::constant;
    double value = 0.0;

    static MaskFill constant(double v) { return {Kind::constant, v}; }
    static MaskFill token(double v) { return {Kind::token, v}; }
};

/// Lesion-first ordering of patch indices plus the masked-prefix length n.
/// The first n entries of `order` are the masked set, the rest are visible.
struct MaskPlan {
    PatchGrid grid;
    std::vector<int> order;          // permutation of 0..N-1
    std::vector<PatchLabel> labels;  // indexed by patch id, not by order position
    int n = 0;
    std::uint64_t seed = 0;

    std::vector<int> masked_indices() const {
        return {order.begin(), order.begin() + n};
    }
    std::vector<int> visible_indices() const {
        return {order.begin() + n, order.end()};
    }
};

namespace detail {

template <class T>
PatchGrid grid_for(const Image<T>& image, int patch_size) {
    if (patch_size <= 0) throw InvalidInput("patchify: patch_size must be positive");
    if (image.channels < 1) throw InvalidInput("patchify: image needs at least one channel");
    if (image.height <= 0 || image.height % patch_size != 0)
        throw InvalidInput("patchify: height " + std::to_string(image.height) +
                           " is not a positive multiple of patch_size " + std::to_string(patch_size));
    if (image.width <= 0 || image.width % patch_size != 0)
        throw InvalidInput("patchify: width " + std::to_string(image.width) +
                           " is not a positive multiple of patch_size " + std::to_string(patch_size));
    PatchGrid g;
    g.patch_size = patch_size;
    g.rows = image.height / patch_size;
    g.cols = image.width / patch_size;
    g.channels = image.channels;
    if (g.count() < 2) throw InvalidInput("patchify: grid needs at least 2 patches");
    return g;
}

}  // namespace detail

/// Splits an image into N non-overlapping patches in row-major grid order.
/// unpatchify(patchify(x)) reproduces x bitwise.
template <class T>
PatchSet<T> patchify(const Image<T>& image, int patch_size) {
    const PatchGrid grid = detail::grid_for(image, patch_size);
    PatchSet<T> out;
    out.grid = grid;
    out.patches.resize(static_cast<std::size_t>(grid.count()));
    const int ps = patch_size;
    for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.cols; ++c) {
            auto& v = out.patches[static_cast<std::size_t>(r) * grid.cols + c];
            v.resize(static_cast<std::size_t>(grid.patch_length()));
            std::size_t k = 0;
            for (int ch = 0; ch < grid.channels; ++ch)
                for (int py = 0; py < ps; ++py)
                    for (int px = 0; px < ps; ++px)
                        v[k++] = image.at(ch, r * ps + py, c * ps + px);
        }
    }
    return out;
}

template <class T>
Image<T> unpatchify(const PatchSet<T>& set) {
    const PatchGrid& g = set.grid;
    if (g.patch_size <= 0 || g.rows <= 0 || g.cols <= 0 || g.channels <= 0)
        throw InvalidInput("unpatchify: invalid grid");
    if (set.patches.size() != static_cast<std::size_t>(g.count()))
        throw InvalidInput("unpatchify: grid claims " + std::to_string(g.count()) + " patches, got " +
                           std::to_string(set.patches.size()));
    for (const auto& p : set.patches)
        if (p.size() != static_cast<std::size_t>(g.patch_length()))
            throw InvalidInput("unpatchify: patch vector length " + std::to_string(p.size()) +
                               " does not match grid patch length " + std::to_string(g.patch_length()));
    const int ps = g.patch_size;
    Image<T> out(g.channels, g.rows * ps, g.cols * ps);
    for (int r = 0; r < g.rows; ++r) {
        for (int c = 0; c < g.cols; ++c) {
            const auto& v = set.patches[static_cast<std::size_t>(r) * g.cols + c];
            std::size_t k = 0;
            for (int ch = 0; ch < g.channels; ++ch)
                for (int py = 0; py < ps; ++py)
                    for (int px = 0; px < ps; ++px)
                        out.at(ch, r * ps + py, c * ps + px) = v[k++];
        }
    }
    return out;
}

/// Returns x_m: pixels inside the first plan.n patches of plan.order replaced
/// by the fill value, every other pixel untouched.
template <class T>
Image<T> apply_mask(const Image<T>& image, const MaskPlan& plan, const MaskFill& fill) {
    const PatchGrid grid = detail::grid_for(image, plan.grid.patch_size);
    if (!(grid == plan.grid))
        throw InvalidInput("apply_mask: plan grid does not match image grid");
    if (plan.n < 0 || plan.n > grid.count())
        throw InvalidInput("apply_mask: masked prefix length out of range");
    Image<T> out = image;
    const int ps = grid.patch_size;
    const T v = static_cast<T>(fill.value);
    for (int i = 0; i < plan.n; ++i) {
        const int p = plan.order[static_cast<std::size_t>(i)];
        const int r = p / grid.cols;
        const int c = p % grid.cols;
        for (int ch = 0; ch < grid.channels; ++ch)
            for (int py = 0; py < ps; ++py)
                for (int px = 0; px < ps; ++px)
                    out.at(ch, r * ps + py, c * ps + px) = v;
    }
    return out;
}

}  // namespace mpsams
