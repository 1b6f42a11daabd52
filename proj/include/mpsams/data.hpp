#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mpsams/errors.hpp"
#include "mpsams/metrics.hpp"
#include "mpsams/patching.hpp"
#include "mpsams/rng.hpp"

namespace mpsams {

/// Synthetic lesion-corpus generator settings. Disk lesions on a darker (or
/// brighter) background; per-sample region intensities are drawn around the
/// configured means and clamped to two spreads so the contrast stays stable.
struct SyntheticConfig {
    int image_size = 64;
    int lesion_count_min = 1;
    int lesion_count_max = 1;
    int lesion_radius_min = 12;
    int lesion_radius_max = 16;
    double lesion_mean = 0.82;
    double lesion_spread = 0.02;
    double background_mean = 0.22;
    double background_spread = 0.02;
    double noise_level = 0.02;
    std::string texture = "flat";  // flat | speckle

    void validate() const {
        if (image_size < 8) throw InvalidInput("synthetic: image size too small");
        if (lesion_count_min < 1 || lesion_count_max < lesion_count_min)
            throw InvalidInput("synthetic: bad lesion count range");
        if (lesion_radius_min < 1 || lesion_radius_max < lesion_radius_min)
            throw InvalidInput("synthetic: bad lesion radius range");
        if (2 * lesion_radius_max >= image_size)
            throw InvalidInput("synthetic: max radius does not fit the image");
        if (texture != "flat" && texture != "speckle")
            throw InvalidInput("synthetic: unknown texture '" + texture + "'");
        // the small-lesion premise: worst-case lesion area stays under 30%
        const double worst = lesion_count_max * 3.14159265358979323846 * lesion_radius_max * lesion_radius_max;
        if (worst > 0.3 * image_size * image_size)
            throw InvalidInput("synthetic: lesion count x max radius exceeds 30% of image area");
        if (noise_level < 0.0 || lesion_spread < 0.0 || background_spread < 0.0)
            throw InvalidInput("synthetic: spreads must be non-negative");
    }

    nlohmann::json to_json() const {
        return {{"image_size", image_size},
                {"lesion_count_min", lesion_count_min},
                {"lesion_count_max", lesion_count_max},
                {"lesion_radius_min", lesion_radius_min},
                {"lesion_radius_max", lesion_radius_max},
                {"lesion_mean", lesion_mean},
                {"lesion_spread", lesion_spread},
                {"background_mean", background_mean},
                {"background_spread", background_spread},
                {"noise_level", noise_level},
                {"texture", texture}};
    }

    std::uint64_t hash() const { return fnv1a64(to_json().dump()); }
};

struct ManifestEntry {
    std::string id;
    std::string image;  // path relative to the manifest
    std::string mask;
};

struct DatasetManifest {
    int version = 1;
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;
    std::vector<ManifestEntry> samples;
    std::string root;  // directory of the manifest file, set on load
};

struct Sample {
    std::string id;
    ImageF image;
    BinaryMask mask;
    bool has_mask = false;
};

using Dataset = std::vector<Sample>;

// ---------------------------------------------------------------------------
// PNG / PGM grayscale I/O
// ---------------------------------------------------------------------------

namespace detail {

struct PngCloser {
    std::FILE* f = nullptr;
    ~PngCloser() {
        if (f) std::fclose(f);
    }
};

}  // namespace detail

/// 8-bit grayscale PNG writer; values are clamped to [0,1] and quantized.
inline void write_gray_png(const std::string& path, std::span<const double> pixels, int height, int width) {
    detail::PngCloser fc{std::fopen(path.c_str(), "wb")};
    if (!fc.f) throw IoError("png: cannot open " + path + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("png: write failed for " + path);
    }
    png_init_io(png, fc.f);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<std::size_t>(width));
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double v = std::clamp(pixels[static_cast<std::size_t>(y) * width + x], 0.0, 1.0);
            row[static_cast<std::size_t>(x)] = static_cast<png_byte>(std::lround(v * 255.0));
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

namespace detail {

inline ImageD read_gray_png(const std::string& path) {
    PngCloser fc{std::fopen(path.c_str(), "rb")};
    if (!fc.f) throw IoError("ingest: cannot open " + path);
    png_byte header[8];
    if (std::fread(header, 1, 8, fc.f) != 8 || png_sig_cmp(header, 0, 8))
        throw DataError("ingest: " + path + " is not a PNG file");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("ingest: corrupt PNG " + path);
    }
    png_init_io(png, fc.f);
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (color != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("ingest: " + path + " is not grayscale (8/16-bit grayscale only)");
    }
    if (depth != 8 && depth != 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("ingest: " + path + " has unsupported bit depth " + std::to_string(depth));
    }
    const int h = static_cast<int>(png_get_image_height(png, info));
    const int w = static_cast<int>(png_get_image_width(png, info));
    ImageD img(1, h, w);
    std::vector<png_byte> row(static_cast<std::size_t>(w) * (depth / 8));
    const double scale = depth == 8 ? 255.0 : 65535.0;
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < w; ++x) {
            double v;
            if (depth == 8) {
                v = row[static_cast<std::size_t>(x)];
            } else {
                v = 256.0 * row[static_cast<std::size_t>(2 * x)] + row[static_cast<std::size_t>(2 * x) + 1];
            }
            img.at(0, y, x) = v / scale;
        }
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

inline ImageD read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("ingest: cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P5") throw DataError("ingest: " + path + " is not a binary PGM (P5) file");
    auto next_int = [&]() {
        int v;
        while (true) {
            in >> std::ws;
            if (in.peek() == '#') {
                std::string comment;
                std::getline(in, comment);
                continue;
            }
            if (!(in >> v)) throw DataError("ingest: malformed PGM header in " + path);
            return v;
        }
    };
    const int w = next_int();
    const int h = next_int();
    const int maxval = next_int();
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
        throw DataError("ingest: malformed PGM header in " + path);
    in.get();  // single whitespace after maxval
    const int bytes = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * bytes);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) throw DataError("ingest: truncated PGM data in " + path);
    ImageD img(1, h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t i = (static_cast<std::size_t>(y) * w + x) * bytes;
            const double v = bytes == 1 ? buf[i] : 256.0 * buf[i] + buf[i + 1];  // PGM 16-bit is big-endian
            img.at(0, y, x) = v / maxval;
        }
    return img;
}

}  // namespace detail

/// Loads an 8/16-bit grayscale PNG or PGM, scales to [0,1], and center-crops
/// to the nearest multiple of `patch_size` (0 disables cropping).
inline ImageD load_image(const std::string& path, int patch_size = 0) {
    if (!std::filesystem::exists(path)) throw IoError("ingest: no such file " + path);
    ImageD img;
    const auto ext = std::filesystem::path(path).extension().string();
    if (ext == ".pgm") {
        img = detail::read_pgm(path);
    } else {
        img = detail::read_gray_png(path);
    }
    if (patch_size > 0) {
        const int ch = img.height - img.height % patch_size;
        const int cw = img.width - img.width % patch_size;
        if (ch == 0 || cw == 0)
            throw DataError("ingest: " + path + " is smaller than one patch");
        if (ch != img.height || cw != img.width) {
            const int oy = (img.height - ch) / 2, ox = (img.width - cw) / 2;
            ImageD cropped(1, ch, cw);
            for (int y = 0; y < ch; ++y)
                for (int x = 0; x < cw; ++x) cropped.at(0, y, x) = img.at(0, y + oy, x + ox);
            img = std::move(cropped);
        }
    }
    return img;
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

/// One image plus its exact lesion mask; bitwise deterministic in the seed.
inline std::pair<ImageD, BinaryMask> generate_sample(const SyntheticConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    const int s = cfg.image_size;
    BinaryMask mask(s, s);

    const int count = static_cast<int>(rng.uniform_int(cfg.lesion_count_min, cfg.lesion_count_max));
    auto clamped_normal = [&](double mean, double spread) {
        const double v = rng.normal(mean, spread);
        return std::clamp(v, mean - 2.0 * spread, mean + 2.0 * spread);
    };
    const double bg_base = clamped_normal(cfg.background_mean, cfg.background_spread);

    struct Disk {
        int cy, cx, r;
        double intensity;
    };
    std::vector<Disk> disks;
    for (int d = 0; d < count; ++d) {
        Disk disk;
        disk.r = static_cast<int>(rng.uniform_int(cfg.lesion_radius_min, cfg.lesion_radius_max));
        disk.cy = static_cast<int>(rng.uniform_int(disk.r, s - 1 - disk.r));
        disk.cx = static_cast<int>(rng.uniform_int(disk.r, s - 1 - disk.r));
        disk.intensity = clamped_normal(cfg.lesion_mean, cfg.lesion_spread);
        disks.push_back(disk);
        for (int y = disk.cy - disk.r; y <= disk.cy + disk.r; ++y)
            for (int x = disk.cx - disk.r; x <= disk.cx + disk.r; ++x)
                if ((y - disk.cy) * (y - disk.cy) + (x - disk.cx) * (x - disk.cx) <= disk.r * disk.r)
                    mask.at(y, x) = 1;
    }

    ImageD img(1, s, s);
    const bool speckle = cfg.texture == "speckle";
    const double sigma_s = 0.30;  // speckle log-std, mean-one multiplicative field
    for (int y = 0; y < s; ++y) {
        for (int x = 0; x < s; ++x) {
            double base = bg_base;
            if (mask.at(y, x)) {
                for (const auto& d : disks)
                    if ((y - d.cy) * (y - d.cy) + (x - d.cx) * (x - d.cx) <= d.r * d.r) {
                        base = d.intensity;
                        break;
                    }
            }
            double v = base;
            if (speckle) v *= std::exp(sigma_s * rng.normal() - 0.5 * sigma_s * sigma_s);
            v += cfg.noise_level * rng.normal();
            img.at(0, y, x) = std::clamp(v, 0.0, 1.0);
        }
    }
    return {std::move(img), std::move(mask)};
}

/// Writes `count` image/mask PNG pairs plus a manifest JSON under `out_dir`.
/// Per-sample seeds derive from the root seed, so sample i is stable when
/// count grows.
inline DatasetManifest generate_dataset(const SyntheticConfig& cfg, int count, std::uint64_t seed,
                                        const std::string& out_dir) {
    if (count < 1) throw InvalidInput("generate_dataset: count must be >= 1");
    cfg.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("generate_dataset: cannot create " + out_dir);

    DatasetManifest manifest;
    manifest.seed = seed;
    manifest.config_hash = cfg.hash();
    manifest.root = out_dir;

    nlohmann::json js;
    js["version"] = manifest.version;
    js["seed"] = seed;
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(manifest.config_hash));
    js["config_hash"] = hash;
    js["config"] = cfg.to_json();
    js["samples"] = nlohmann::json::array();

    for (int i = 0; i < count; ++i) {
        const auto [img, mask] = generate_sample(cfg, derive_seed(seed, {static_cast<std::uint64_t>(i)}));
        char id[32];
        std::snprintf(id, sizeof(id), "s%05d", i);
        ManifestEntry entry;
        entry.id = id;
        entry.image = std::string(id) + ".png";
        entry.mask = std::string(id) + "_mask.png";
        write_gray_png(out_dir + "/" + entry.image, img.data, img.height, img.width);
        std::vector<double> mask_pixels(mask.data.size());
        for (std::size_t k = 0; k < mask.data.size(); ++k) mask_pixels[k] = mask.data[k] ? 1.0 : 0.0;
        write_gray_png(out_dir + "/" + entry.mask, mask_pixels, mask.height, mask.width);
        js["samples"].push_back({{"id", entry.id}, {"image", entry.image}, {"mask", entry.mask}});
        manifest.samples.push_back(std::move(entry));
    }

    std::ofstream out(out_dir + "/manifest.json", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("generate_dataset: cannot write manifest in " + out_dir);
    out << js.dump(2) << "\n";
    return manifest;
}

inline DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("manifest: cannot open " + path);
    nlohmann::json js;
    try {
        in >> js;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("manifest: malformed JSON in " + path + ": " + e.what());
    }
    DatasetManifest manifest;
    manifest.version = js.value("version", 1);
    manifest.seed = js.value("seed", std::uint64_t{0});
    if (js.contains("config_hash"))
        manifest.config_hash = std::stoull(js["config_hash"].get<std::string>(), nullptr, 16);
    manifest.root = std::filesystem::path(path).parent_path().string();
    if (manifest.root.empty()) manifest.root = ".";
    for (const auto& s : js.at("samples")) {
        ManifestEntry entry;
        entry.id = s.at("id").get<std::string>();
        entry.image = s.at("image").get<std::string>();
        entry.mask = s.value("mask", std::string{});
        manifest.samples.push_back(std::move(entry));
    }
    return manifest;
}

/// Loads every sample in manifest order; masks binarize at 0.5. Missing
/// files are collected and reported together.
inline Dataset load_dataset(const DatasetManifest& manifest, int patch_size = 0) {
    std::vector<std::string> missing;
    for (const auto& e : manifest.samples) {
        if (!std::filesystem::exists(manifest.root + "/" + e.image)) missing.push_back(e.image);
        if (!e.mask.empty() && !std::filesystem::exists(manifest.root + "/" + e.mask)) missing.push_back(e.mask);
    }
    if (!missing.empty()) {
        std::string msg = "load_dataset: missing files:";
        for (const auto& m : missing) msg += " " + m;
        throw DataError(msg);
    }
    Dataset out;
    out.reserve(manifest.samples.size());
    for (const auto& e : manifest.samples) {
        Sample sample;
        sample.id = e.id;
        sample.image = load_image(manifest.root + "/" + e.image, patch_size).cast<float>();
        if (!e.mask.empty()) {
            const ImageD m = load_image(manifest.root + "/" + e.mask, patch_size);
            sample.mask = BinaryMask(m.height, m.width);
            for (std::size_t k = 0; k < m.data.size(); ++k) sample.mask.data[k] = m.data[k] >= 0.5 ? 1 : 0;
            sample.has_mask = true;
        }
        out.push_back(std::move(sample));
    }
    return out;
}

}  // namespace mpsams
