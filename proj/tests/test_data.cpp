#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>

#include "mpsams/data.hpp"

using namespace mpsams;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir(const std::string& tag) : path(fs::temp_directory_path() / ("mpsams_" + tag)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("generated samples are deterministic, in range, and sanely masked") {
    SyntheticConfig cfg;
    const auto [img1, mask1] = generate_sample(cfg, 99);
    const auto [img2, mask2] = generate_sample(cfg, 99);
    REQUIRE(img1.data == img2.data);  // bitwise
    REQUIRE(mask1.data == mask2.data);
    for (double v : img1.data) {
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
    }
    REQUIRE(mask1.positives() > 0);
    REQUIRE(mask1.positives() <= static_cast<std::size_t>(0.3 * 64 * 64));
    const auto [img3, mask3] = generate_sample(cfg, 100);
    REQUIRE(img1.data != img3.data);
}

TEST_CASE("disk area lands inside the discretization band") {
    SyntheticConfig cfg;
    cfg.lesion_count_min = cfg.lesion_count_max = 1;
    cfg.lesion_radius_min = cfg.lesion_radius_max = 8;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto [img, mask] = generate_sample(cfg, seed);
        const double area = static_cast<double>(mask.positives());
        REQUIRE(area >= 3.14159 * 7 * 7);
        REQUIRE(area <= 3.14159 * 9 * 9);
    }
}

TEST_CASE("noise-free disjoint intensities are threshold separable") {
    SyntheticConfig cfg;
    cfg.noise_level = 0.0;
    cfg.lesion_spread = 0.0;
    cfg.background_spread = 0.0;
    const auto [img, mask] = generate_sample(cfg, 5);
    const double threshold = 0.5 * (cfg.lesion_mean + cfg.background_mean);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            REQUIRE((img.at(0, y, x) >= threshold) == (mask.at(y, x) != 0));
}

TEST_CASE("masks stay under 30% of image area across configs") {
    SyntheticConfig cfg;
    cfg.lesion_count_min = 1;
    cfg.lesion_count_max = 2;
    cfg.lesion_radius_min = 6;
    cfg.lesion_radius_max = 12;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto [img, mask] = generate_sample(cfg, seed);
        REQUIRE(mask.positives() > 0);
        REQUIRE(mask.positives() <= static_cast<std::size_t>(0.3 * 64 * 64));
    }
}

TEST_CASE("config validation rejects oversized lesions and bad ranges") {
    SyntheticConfig cfg;
    cfg.lesion_count_max = 4;
    cfg.lesion_radius_max = 20;
    REQUIRE_THROWS_AS(cfg.validate(), InvalidInput);
    cfg = SyntheticConfig{};
    cfg.lesion_radius_min = 9;
    cfg.lesion_radius_max = 8;
    REQUIRE_THROWS_AS(cfg.validate(), InvalidInput);
    cfg = SyntheticConfig{};
    cfg.texture = "plaid";
    REQUIRE_THROWS_AS(cfg.validate(), InvalidInput);
}

TEST_CASE("png round trip preserves 8-bit grayscale values") {
    TempDir dir("png");
    std::vector<double> pixels(32 * 16);
    for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<double>(i % 256) / 255.0;
    write_gray_png(dir.str() + "/t.png", pixels, 16, 32);
    const auto img = load_image(dir.str() + "/t.png");
    REQUIRE(img.height == 16);
    REQUIRE(img.width == 32);
    for (std::size_t i = 0; i < pixels.size(); ++i)
        REQUIRE(img.data[i] == Catch::Approx(pixels[i]).margin(0.5 / 255.0));
    REQUIRE(img.data[0] == 0.0);
    REQUIRE(img.data[255] == 1.0);
}

TEST_CASE("pgm ingestion handles 8 and 16 bit depths") {
    TempDir dir("pgm");
    {
        std::ofstream out(dir.str() + "/a.pgm", std::ios::binary);
        out << "P5\n# comment\n4 2\n255\n";
        const unsigned char bytes[] = {0, 64, 128, 255, 10, 20, 30, 40};
        out.write(reinterpret_cast<const char*>(bytes), 8);
    }
    const auto img8 = load_image(dir.str() + "/a.pgm");
    REQUIRE(img8.width == 4);
    REQUIRE(img8.at(0, 0, 3) == 1.0);
    REQUIRE(img8.at(0, 0, 0) == 0.0);

    {
        std::ofstream out(dir.str() + "/b.pgm", std::ios::binary);
        out << "P5\n2 1\n65535\n";
        const unsigned char bytes[] = {0xff, 0xff, 0x00, 0x00};  // big-endian
        out.write(reinterpret_cast<const char*>(bytes), 4);
    }
    const auto img16 = load_image(dir.str() + "/b.pgm");
    REQUIRE(img16.at(0, 0, 0) == 1.0);
    REQUIRE(img16.at(0, 0, 1) == 0.0);
}

TEST_CASE("loading center-crops to the nearest patch multiple") {
    TempDir dir("crop");
    std::vector<double> pixels(65 * 65, 0.5);
    write_gray_png(dir.str() + "/odd.png", pixels, 65, 65);
    const auto img = load_image(dir.str() + "/odd.png", 8);
    REQUIRE(img.height == 64);
    REQUIRE(img.width == 64);
}

TEST_CASE("ingestion rejects color pngs and garbage") {
    TempDir dir("bad");
    {
        std::ofstream out(dir.str() + "/fake.png", std::ios::binary);
        out << "not a png at all";
    }
    REQUIRE_THROWS_AS(load_image(dir.str() + "/fake.png"), DataError);
    REQUIRE_THROWS_AS(load_image(dir.str() + "/missing.png"), IoError);
}

TEST_CASE("dataset generation is reproducible byte for byte") {
    TempDir a("gen_a"), b("gen_b");
    SyntheticConfig cfg;
    cfg.image_size = 32;
    cfg.lesion_radius_min = 4;
    cfg.lesion_radius_max = 6;
    generate_dataset(cfg, 5, 123, a.str());
    generate_dataset(cfg, 5, 123, b.str());
    for (const auto& name : {"s00000.png", "s00003_mask.png", "manifest.json"})
        REQUIRE(read_file(a.str() + "/" + name) == read_file(b.str() + "/" + name));
}

TEST_CASE("sample i is unchanged when the dataset grows") {
    SyntheticConfig cfg;
    cfg.image_size = 32;
    cfg.lesion_radius_min = 4;
    cfg.lesion_radius_max = 6;
    TempDir small("gen_small"), large("gen_large");
    generate_dataset(cfg, 3, 7, small.str());
    generate_dataset(cfg, 6, 7, large.str());
    REQUIRE(read_file(small.str() + "/s00002.png") == read_file(large.str() + "/s00002.png"));
}

TEST_CASE("manifest hash tracks config changes") {
    SyntheticConfig cfg;
    const auto h1 = cfg.hash();
    cfg.noise_level += 0.01;
    REQUIRE(cfg.hash() != h1);
}

TEST_CASE("generate then load preserves count, ids, and masks") {
    TempDir dir("roundtrip");
    SyntheticConfig cfg;
    cfg.image_size = 32;
    cfg.lesion_radius_min = 4;
    cfg.lesion_radius_max = 6;
    generate_dataset(cfg, 4, 11, dir.str());
    const auto manifest = load_manifest(dir.str() + "/manifest.json");
    REQUIRE(manifest.samples.size() == 4);
    REQUIRE(manifest.seed == 11);
    const auto data = load_dataset(manifest);
    REQUIRE(data.size() == 4);
    REQUIRE(data[2].id == "s00002");
    REQUIRE(data[2].has_mask);
    REQUIRE(data[2].mask.positives() > 0);
    // loading twice yields identical tensors
    const auto again = load_dataset(manifest);
    REQUIRE(again[2].image.data == data[2].image.data);
    REQUIRE(again[2].mask.data == data[2].mask.data);
}

TEST_CASE("missing files are reported together by name") {
    TempDir dir("missing");
    SyntheticConfig cfg;
    cfg.image_size = 32;
    cfg.lesion_radius_min = 4;
    cfg.lesion_radius_max = 6;
    generate_dataset(cfg, 3, 13, dir.str());
    fs::remove(dir.path / "s00001_mask.png");
    const auto manifest = load_manifest(dir.str() + "/manifest.json");
    try {
        load_dataset(manifest);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        REQUIRE(std::string(e.what()).find("s00001_mask.png") != std::string::npos);
    }
}
