#include <catch2/catch_amalgamated.hpp>

#include "mpsams/patching.hpp"
#include "mpsams/rng.hpp"

using namespace mpsams;

namespace {

ImageD random_image(int c, int h, int w, std::uint64_t seed) {
    ImageD img(c, h, w);
    Rng rng(seed);
    for (auto& v : img.data) v = rng.uniform();
    return img;
}

MaskPlan trivial_plan(const PatchGrid& grid, std::vector<int> order, int n) {
    MaskPlan plan;
    plan.grid = grid;
    plan.order = std::move(order);
    plan.labels.assign(static_cast<std::size_t>(grid.count()), PatchLabel::background);
    plan.n = n;
    return plan;
}

}  // namespace

TEST_CASE("patchify splits a 2x2 image into four unit patches in row-major order") {
    ImageD img(1, 2, 2);
    img.at(0, 0, 0) = 1.0;
    img.at(0, 0, 1) = 2.0;
    img.at(0, 1, 0) = 3.0;
    img.at(0, 1, 1) = 4.0;
    const auto set = patchify(img, 1);
    REQUIRE(set.grid.count() == 4);
    REQUIRE(set.patches[0] == std::vector<double>{1.0});
    REQUIRE(set.patches[1] == std::vector<double>{2.0});
    REQUIRE(set.patches[2] == std::vector<double>{3.0});
    REQUIRE(set.patches[3] == std::vector<double>{4.0});
}

TEST_CASE("patchify 224x224 with patch 16 yields 196 patches of length 256") {
    const auto set = patchify(random_image(1, 224, 224, 7), 16);
    REQUIRE(set.grid.count() == 196);
    REQUIRE(set.grid.rows == 14);
    for (const auto& p : set.patches) REQUIRE(p.size() == 256);
}

TEST_CASE("unpatchify is the exact inverse of patchify") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        const int ps = 1 + static_cast<int>(seed % 4);
        const auto img = random_image(1 + static_cast<int>(seed % 3), ps * (2 + seed % 5), ps * (3 + seed % 4), seed);
        const auto back = unpatchify(patchify(img, ps));
        REQUIRE(back.data == img.data);  // bitwise
        REQUIRE(back.channels == img.channels);
        REQUIRE(back.height == img.height);
        REQUIRE(back.width == img.width);
    }
}

TEST_CASE("unpatchify reassembles explicit unit patches") {
    PatchSet<double> set;
    set.grid = PatchGrid{1, 2, 2, 1};
    set.patches = {{1.0}, {2.0}, {3.0}, {4.0}};
    const auto img = unpatchify(set);
    REQUIRE(img.at(0, 0, 0) == 1.0);
    REQUIRE(img.at(0, 0, 1) == 2.0);
    REQUIRE(img.at(0, 1, 0) == 3.0);
    REQUIRE(img.at(0, 1, 1) == 4.0);
}

TEST_CASE("unpatchify rejects inconsistent grids") {
    PatchSet<double> set;
    set.grid = PatchGrid{1, 2, 2, 1};
    set.patches = {{1.0}, {2.0}, {3.0}};
    REQUIRE_THROWS_AS(unpatchify(set), InvalidInput);
    set.patches = {{1.0}, {2.0}, {3.0}, {4.0, 5.0}};
    REQUIRE_THROWS_AS(unpatchify(set), InvalidInput);
}

TEST_CASE("patchify rejects non-divisible dimensions and names the axis") {
    const auto img = random_image(1, 65, 64, 3);
    try {
        patchify(img, 8);
        FAIL("expected InvalidInput");
    } catch (const InvalidInput& e) {
        REQUIRE(std::string(e.what()).find("height") != std::string::npos);
    }
    const auto img2 = random_image(1, 64, 63, 3);
    try {
        patchify(img2, 8);
        FAIL("expected InvalidInput");
    } catch (const InvalidInput& e) {
        REQUIRE(std::string(e.what()).find("width") != std::string::npos);
    }
}

TEST_CASE("apply_mask with n=0 is the identity") {
    const auto img = random_image(1, 8, 8, 11);
    const auto grid = patchify(img, 4).grid;
    const auto out = apply_mask(img, trivial_plan(grid, {0, 1, 2, 3}, 0), MaskFill::constant(0.0));
    REQUIRE(out.data == img.data);
}

TEST_CASE("apply_mask with n=N and zero fill blanks the image") {
    const auto img = random_image(2, 8, 8, 12);
    const auto grid = patchify(img, 4).grid;
    const auto out = apply_mask(img, trivial_plan(grid, {0, 1, 2, 3}, 4), MaskFill::constant(0.0));
    for (double v : out.data) REQUIRE(v == 0.0);
}

TEST_CASE("apply_mask touches only the masked prefix patches") {
    const auto img = random_image(1, 8, 8, 13);
    const auto grid = patchify(img, 4).grid;
    // order [3,0,1,2], n=1: only the bottom-right patch is zeroed
    const auto out = apply_mask(img, trivial_plan(grid, {3, 0, 1, 2}, 1), MaskFill::constant(0.0));
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            if (y >= 4 && x >= 4)
                REQUIRE(out.at(0, y, x) == 0.0);
            else
                REQUIRE(out.at(0, y, x) == img.at(0, y, x));
        }
}

TEST_CASE("apply_mask rejects grid mismatches") {
    const auto img = random_image(1, 8, 8, 14);
    PatchGrid other{4, 4, 4, 1};  // claims a 4x4 grid of 4-px patches: wrong for 8x8
    REQUIRE_THROWS_AS(apply_mask(img, trivial_plan(other, {0, 1, 2, 3}, 1), MaskFill::constant(0.0)),
                      InvalidInput);
    PatchGrid wrong_channels{4, 2, 2, 2};
    REQUIRE_THROWS_AS(apply_mask(img, trivial_plan(wrong_channels, {0, 1, 2, 3}, 1), MaskFill::constant(0.0)),
                      InvalidInput);
}

TEST_CASE("masked and visible sets partition the patch indices") {
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        PatchGrid grid{4, 4, 4, 1};
        MaskPlan plan = trivial_plan(grid, Rng(trial).permutation(16), static_cast<int>(rng.uniform_index(17)));
        auto masked = plan.masked_indices();
        auto visible = plan.visible_indices();
        std::vector<char> seen(16, 0);
        for (int i : masked) seen[static_cast<std::size_t>(i)]++;
        for (int i : visible) seen[static_cast<std::size_t>(i)]++;
        for (char c : seen) REQUIRE(c == 1);
    }
}
