#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <limits>

#include "mpsams/selection.hpp"

using namespace mpsams;

namespace {

// ---- independent brute-force covariance + softmax oracle ----
std::vector<std::vector<double>> oracle_similarity(const std::vector<std::vector<double>>& patches) {
    const std::size_t n = patches.size();
    const std::size_t len = patches[0].size();
    std::vector<double> mean_profile(len, 0.0);
    for (const auto& p : patches)
        for (std::size_t k = 0; k < len; ++k) mean_profile[k] += p[k] / double(n);
    std::vector<std::vector<double>> cov(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < len; ++k)
                acc += (patches[i][k] - mean_profile[k]) * (patches[j][k] - mean_profile[k]);
            cov[i][j] = acc / (len - 1);
        }
    }
    std::vector<std::vector<double>> soft(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (double v : cov[i]) m = std::max(m, v);
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            soft[i][j] = std::exp(cov[i][j] - m);
            total += soft[i][j];
        }
        for (std::size_t j = 0; j < n; ++j) soft[i][j] /= total;
    }
    return soft;
}

PatchSet<double> patch_set_from(const std::vector<std::vector<double>>& patches, int rows, int cols) {
    PatchSet<double> set;
    const int len = static_cast<int>(patches[0].size());
    const int ps = static_cast<int>(std::lround(std::sqrt(double(len))));
    set.grid = PatchGrid{ps, rows, cols, 1};
    set.patches = patches;
    return set;
}

// exhaustive enumeration of all 2-partitions, minimizing within-cluster variance
double oracle_best_wcv(const FeatureRows& rows) {
    const int n = rows.count;
    double best = std::numeric_limits<double>::infinity();
    for (unsigned mask = 1; mask + 1 < (1u << n); ++mask) {
        double wcv = 0.0;
        for (int side = 0; side < 2; ++side) {
            std::vector<double> centroid(static_cast<std::size_t>(rows.dim), 0.0);
            int count = 0;
            for (int i = 0; i < n; ++i) {
                if (((mask >> i) & 1u) != static_cast<unsigned>(side)) continue;
                ++count;
                for (int d = 0; d < rows.dim; ++d) centroid[static_cast<std::size_t>(d)] += rows.row(i)[d];
            }
            for (double& v : centroid) v /= count;
            for (int i = 0; i < n; ++i) {
                if (((mask >> i) & 1u) != static_cast<unsigned>(side)) continue;
                for (int d = 0; d < rows.dim; ++d) {
                    const double diff = rows.row(i)[d] - centroid[static_cast<std::size_t>(d)];
                    wcv += diff * diff;
                }
            }
        }
        best = std::min(best, wcv);
    }
    return best;
}

double assignment_wcv(const FeatureRows& rows, const std::vector<int>& assign) {
    double wcv = 0.0;
    for (int side = 0; side < 2; ++side) {
        std::vector<double> centroid(static_cast<std::size_t>(rows.dim), 0.0);
        int count = 0;
        for (int i = 0; i < rows.count; ++i) {
            if (assign[static_cast<std::size_t>(i)] != side) continue;
            ++count;
            for (int d = 0; d < rows.dim; ++d) centroid[static_cast<std::size_t>(d)] += rows.row(i)[d];
        }
        for (double& v : centroid) v /= count;
        for (int i = 0; i < rows.count; ++i) {
            if (assign[static_cast<std::size_t>(i)] != side) continue;
            for (int d = 0; d < rows.dim; ++d) {
                const double diff = rows.row(i)[d] - centroid[static_cast<std::size_t>(d)];
                wcv += diff * diff;
            }
        }
    }
    return wcv;
}

// two well-separated blobs, N <= 12, separation >= 4x cluster radius
FeatureRows separated_fixture(int n, int small, std::uint64_t seed, int dim = 3) {
    Rng rng(seed);
    FeatureRows rows;
    rows.count = n;
    rows.dim = dim;
    rows.values.resize(static_cast<std::size_t>(n) * dim);
    const double radius = 0.5;
    for (int i = 0; i < n; ++i)
        for (int d = 0; d < dim; ++d)
            rows.row(i)[d] = rng.uniform(-radius, radius) + (i < small && d == 0 ? 8.0 : 0.0);
    return rows;
}

SimilarityMatrix sim_from(const std::vector<std::vector<double>>& values) {
    SimilarityMatrix sim;
    sim.count = static_cast<int>(values.size());
    for (const auto& row : values) sim.values.insert(sim.values.end(), row.begin(), row.end());
    return sim;
}

}  // namespace

TEST_CASE("two identical patches give a symmetric half-half similarity") {
    PatchSet<double> set = patch_set_from({{0.1, 0.9, 0.4, 0.6}, {0.1, 0.9, 0.4, 0.6}}, 1, 2);
    const auto sim = patch_similarity(set);
    REQUIRE(sim.at(0, 0) == Catch::Approx(0.5).margin(1e-12));
    REQUIRE(sim.at(0, 1) == Catch::Approx(0.5).margin(1e-12));
    REQUIRE(sim.at(1, 0) == Catch::Approx(0.5).margin(1e-12));
    REQUIRE(sim.at(1, 1) == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("constant image is degenerate with uniform rows") {
    PatchSet<double> set = patch_set_from({{0.3, 0.3, 0.3, 0.3},
                                           {0.3, 0.3, 0.3, 0.3},
                                           {0.3, 0.3, 0.3, 0.3},
                                           {0.3, 0.3, 0.3, 0.3}},
                                          2, 2);
    const auto sim = patch_similarity(set);
    REQUIRE(sim.degenerate);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) REQUIRE(sim.at(i, j) == 0.25);
}

TEST_CASE("similarity matches the brute-force oracle on an anti-correlated toy") {
    // patch 0 slopes down; patches 1-3 slope up, so row 0 puts its smallest
    // mass where the oracle says the anti-correlation is strongest
    std::vector<std::vector<double>> patches = {
        {4.0, 3.0, 2.0, 1.0}, {1.0, 2.0, 3.0, 4.0}, {1.0, 3.0, 2.0, 4.0}, {2.0, 1.0, 4.0, 3.0}};
    const auto sim = patch_similarity(patch_set_from(patches, 2, 2));
    const auto expected = oracle_similarity(patches);
    for (int i = 0; i < 4; ++i) {
        double row_sum = 0.0;
        for (int j = 0; j < 4; ++j) {
            REQUIRE(sim.at(i, j) == Catch::Approx(expected[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)])
                                        .margin(1e-12));
            row_sum += sim.at(i, j);
        }
        REQUIRE(row_sum == Catch::Approx(1.0).margin(1e-6));
    }
    int impl_argmin = 0, oracle_argmin = 0;
    for (int j = 1; j < 4; ++j) {
        if (sim.at(0, j) < sim.at(0, impl_argmin)) impl_argmin = j;
        if (expected[0][static_cast<std::size_t>(j)] < expected[0][static_cast<std::size_t>(oracle_argmin)])
            oracle_argmin = j;
    }
    REQUIRE(impl_argmin == oracle_argmin);
    REQUIRE(impl_argmin == 1);  // the perfectly anti-correlated patch
}

TEST_CASE("similarity rows are positive and sum to one on random patch sets") {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<std::vector<double>> patches(9, std::vector<double>(16));
        for (auto& p : patches)
            for (auto& v : p) v = rng.uniform();
        const auto sim = patch_similarity(patch_set_from(patches, 3, 3));
        for (int i = 0; i < 9; ++i) {
            double total = 0.0;
            for (int j = 0; j < 9; ++j) {
                REQUIRE(sim.at(i, j) > 0.0);
                REQUIRE(sim.at(i, j) <= 1.0);
                total += sim.at(i, j);
            }
            REQUIRE(total == Catch::Approx(1.0).margin(1e-6));
        }
    }
}

TEST_CASE("patch_similarity rejects fewer than two patches") {
    PatchSet<double> set;
    set.grid = PatchGrid{2, 1, 1, 1};
    set.patches = {{1.0, 2.0, 3.0, 4.0}};
    REQUIRE_THROWS_AS(patch_similarity(set), InvalidInput);
}

TEST_CASE("kmeans matches the exhaustive partition oracle on separated fixtures") {
    int matches = 0;
    const int trials = 40;
    for (int trial = 0; trial < trials; ++trial) {
        const int n = 6 + trial % 7;  // up to 12
        const int small = 1 + trial % (n / 2);
        const auto rows = separated_fixture(n, small, 1000 + trial);
        const auto assign = kmeans2(rows, trial);
        const double wcv = assignment_wcv(rows, assign.assignment);
        const double best = oracle_best_wcv(rows);
        if (wcv <= best + 1e-9) ++matches;
    }
    REQUIRE(matches == trials);
}

TEST_CASE("kmeans on two rows puts each in its own cluster") {
    FeatureRows rows;
    rows.count = 2;
    rows.dim = 2;
    rows.values = {0.0, 0.0, 1.0, 1.0};
    const auto assign = kmeans2(rows, 7);
    REQUIRE(assign.assignment[0] != assign.assignment[1]);
    REQUIRE(assign.converged);
}

TEST_CASE("kmeans assignments follow a row permutation under the data-anchored init") {
    const auto rows = separated_fixture(9, 3, 555);
    const auto base = kmeans2(rows, 42);
    std::vector<int> perm = {4, 7, 0, 2, 8, 1, 6, 3, 5};
    FeatureRows shuffled;
    shuffled.count = rows.count;
    shuffled.dim = rows.dim;
    shuffled.values.resize(rows.values.size());
    for (int i = 0; i < rows.count; ++i)
        std::copy_n(rows.row(perm[static_cast<std::size_t>(i)]), rows.dim, shuffled.row(i));
    const auto moved = kmeans2(shuffled, 42);
    // same partition up to cluster relabeling
    bool direct = true, flipped = true;
    for (int i = 0; i < rows.count; ++i) {
        const int a = base.assignment[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
        const int b = moved.assignment[static_cast<std::size_t>(i)];
        direct &= (a == b);
        flipped &= (a == (1 - b));
    }
    REQUIRE((direct || flipped));
}

TEST_CASE("clustering a constant similarity matrix degenerates") {
    FeatureRows rows;
    rows.count = 4;
    rows.dim = 4;
    rows.values.assign(16, 0.25);
    REQUIRE_THROWS_AS(kmeans2(rows, 3), ClusteringDegenerate);
}

TEST_CASE("all bench methods reach full recall on separable toy rows") {
    for (auto method : {ClusterMethod::kmeans, ClusterMethod::hierarchical, ClusterMethod::tsne_kmeans,
                        ClusterMethod::dbscan}) {
        std::vector<char> truth;
        const auto rows = bench_rows(60, 99, &truth);
        const auto assign = cluster_rows(rows, method, 99);
        const int small = assign.cluster_size(0) <= assign.cluster_size(1) ? 0 : 1;
        int hit = 0, total = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            if (!truth[i]) continue;
            ++total;
            hit += assign.assignment[i] == small;
        }
        INFO(to_string(method));
        REQUIRE(hit == total);
    }
}

TEST_CASE("smaller cluster is labeled lesion") {
    ClusterAssignment assign;
    assign.assignment.assign(196, 0);
    for (int i = 0; i < 3; ++i) assign.assignment[static_cast<std::size_t>(i)] = 1;
    std::vector<double> vars(196, 0.1);
    const auto labeling = label_lesion_cluster(assign, vars);
    REQUIRE(labeling.lesion_cluster == 1);
    REQUIRE(labeling.lesion_count == 3);
    for (int i = 0; i < 3; ++i) REQUIRE(labeling.labels[static_cast<std::size_t>(i)] == PatchLabel::lesion);
    REQUIRE(labeling.labels[10] == PatchLabel::background);
}

TEST_CASE("equal-size tie goes to the higher-variance cluster") {
    ClusterAssignment assign;
    assign.assignment = {0, 0, 1, 1};
    std::vector<double> vars = {0.1, 0.1, 0.4, 0.4};
    REQUIRE(label_lesion_cluster(assign, vars).lesion_cluster == 1);
    vars = {0.4, 0.4, 0.1, 0.1};
    REQUIRE(label_lesion_cluster(assign, vars).lesion_cluster == 0);
}

TEST_CASE("a singleton cluster is the lesion") {
    ClusterAssignment assign;
    assign.assignment = {1, 0, 0, 0, 0};
    const auto labeling = label_lesion_cluster(assign, std::vector<double>(5, 0.2));
    REQUIRE(labeling.lesion_cluster == 1);
    REQUIRE(labeling.lesion_count == 1);
}

TEST_CASE("order_patches sorts lesion-first then by mean similarity") {
    // labels [B, L, B, L]; scores L: {1:0.9, 3:0.8}, B: {0:0.3, 2:0.2}
    LesionLabeling labeling;
    labeling.lesion_cluster = 1;
    labeling.labels = {PatchLabel::background, PatchLabel::lesion, PatchLabel::background, PatchLabel::lesion};
    labeling.lesion_count = 2;
    const auto sim = sim_from({{0.2, 0.3, 0.2, 0.3},
                               {0.05, 0.9, 0.05, 0.9},
                               {0.3, 0.2, 0.3, 0.2},
                               {0.1, 0.8, 0.1, 0.8}});
    const auto plan = order_patches(labeling, sim, PatchGrid{1, 2, 2, 1});
    REQUIRE(plan.order == std::vector<int>{1, 3, 0, 2});
    REQUIRE(plan.n == 0);
}

TEST_CASE("all-lesion labeling reduces to a pure similarity sort") {
    LesionLabeling labeling;
    labeling.lesion_cluster = 0;
    labeling.labels = {PatchLabel::lesion, PatchLabel::lesion, PatchLabel::lesion};
    labeling.lesion_count = 3;
    const auto sim = sim_from({{0.2, 0.4, 0.4}, {0.5, 0.3, 0.2}, {0.9, 0.05, 0.05}});
    // mean-to-lesion scores are the row means: 1/3, 1/3, 1/3 -> tie -> index order?
    // rows differ: scores = mean of each row = (0.2+0.4+0.4)/3 etc. all 1/3; tie-break ascending
    const auto plan = order_patches(labeling, sim, PatchGrid{1, 1, 3, 1});
    REQUIRE(plan.order == std::vector<int>{0, 1, 2});
}

TEST_CASE("equal scores fall back to ascending index within each group") {
    LesionLabeling labeling;
    labeling.lesion_cluster = 1;
    labeling.labels = {PatchLabel::background, PatchLabel::lesion, PatchLabel::lesion, PatchLabel::background};
    labeling.lesion_count = 2;
    const auto sim = sim_from({{0.25, 0.25, 0.25, 0.25},
                               {0.25, 0.25, 0.25, 0.25},
                               {0.25, 0.25, 0.25, 0.25},
                               {0.25, 0.25, 0.25, 0.25}});
    const auto plan = order_patches(labeling, sim, PatchGrid{1, 2, 2, 1});
    REQUIRE(plan.order == std::vector<int>{1, 2, 0, 3});
}

TEST_CASE("make_mask_plan fixes the masked prefix") {
    MaskPlan ordered;
    ordered.grid = PatchGrid{16, 14, 14, 1};
    ordered.order.resize(196);
    std::iota(ordered.order.begin(), ordered.order.end(), 0);
    ordered.labels.assign(196, PatchLabel::background);

    const auto plan = make_mask_plan(ordered, 49);
    REQUIRE(plan.masked_indices().size() == 49);
    REQUIRE(plan.visible_indices().size() == 147);
    REQUIRE(make_mask_plan(ordered, 0).masked_indices().empty());
    REQUIRE(make_mask_plan(ordered, 196).visible_indices().empty());
    REQUIRE_THROWS_AS(make_mask_plan(ordered, 197), InvalidInput);
    REQUIRE_THROWS_AS(make_mask_plan(ordered, -1), InvalidInput);
}

TEST_CASE("mps_order is deterministic and lesion-precedent") {
    Rng rng(31);
    ImageD img(1, 32, 32, 0.2);
    for (auto& v : img.data) v += 0.02 * rng.uniform();
    // bright square lesion
    for (int y = 8; y < 16; ++y)
        for (int x = 8; x < 16; ++x) img.at(0, y, x) = 0.9 + 0.02 * rng.uniform();
    const auto patches = patchify(img, 8);
    const auto a = mps_order(patches, ClusterMethod::kmeans, 7);
    const auto b = mps_order(patches, ClusterMethod::kmeans, 7);
    REQUIRE(a.order == b.order);
    REQUIRE(a.labels == b.labels);
    bool seen_background = false;
    for (int idx : a.order) {
        const bool lesion = a.labels[static_cast<std::size_t>(idx)] == PatchLabel::lesion;
        if (!lesion) seen_background = true;
        if (lesion) REQUIRE_FALSE(seen_background);
    }
    // permutation check
    std::vector<char> seen(16, 0);
    for (int idx : a.order) seen[static_cast<std::size_t>(idx)]++;
    for (char c : seen) REQUIRE(c == 1);
}

TEST_CASE("lesion recall on an easy disk fixture") {
    ImageD img(1, 64, 64, 0.22);
    BinaryMask gt(64, 64);
    Rng rng(3);
    const int cy = 30, cx = 34, r = 13;
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            const bool inside = (y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r;
            img.at(0, y, x) = (inside ? 0.82 : 0.22) + 0.02 * rng.normal();
            if (inside) gt.at(y, x) = 1;
        }
    const auto patches = patchify(img, 4);
    const auto plan = mps_order(patches, ClusterMethod::kmeans, 11);
    const double recall = lesion_patch_recall(plan.labels, plan.grid, gt);
    REQUIRE(recall >= 0.7);
}

TEST_CASE("random_order is a seeded permutation with background labels") {
    PatchGrid grid{8, 8, 8, 1};
    const auto a = random_order(grid, 5);
    const auto b = random_order(grid, 5);
    const auto c = random_order(grid, 6);
    REQUIRE(a.order == b.order);
    REQUIRE(a.order != c.order);
    std::vector<char> seen(64, 0);
    for (int idx : a.order) seen[static_cast<std::size_t>(idx)]++;
    for (char v : seen) REQUIRE(v == 1);
    for (auto l : a.labels) REQUIRE(l == PatchLabel::background);
}

TEST_CASE("cluster_bench produces cells and slopes") {
    const auto report = cluster_bench({64, 128, 256}, {ClusterMethod::kmeans}, 2, 12345);
    REQUIRE(report.cells.size() == 6);
    for (const auto& cell : report.cells) {
        REQUIRE_FALSE(cell.timed_out);
        REQUIRE(cell.lesion_recall == 1.0);
    }
    REQUIRE(report.slopes.at("kmeans").defined);
}

TEST_CASE("single-cell bench has an undefined slope") {
    const auto report = cluster_bench({64}, {ClusterMethod::kmeans}, 1, 1);
    REQUIRE(report.cells.size() == 1);
    REQUIRE_FALSE(report.slopes.at("kmeans").defined);
}

TEST_CASE("cluster_bench validates its inputs") {
    REQUIRE_THROWS_AS(cluster_bench({256, 64}, {ClusterMethod::kmeans}, 1, 1), InvalidInput);
    REQUIRE_THROWS_AS(cluster_bench({}, {ClusterMethod::kmeans}, 1, 1), InvalidInput);
    REQUIRE_THROWS_AS(cluster_bench({64}, {}, 1, 1), InvalidInput);
    REQUIRE_THROWS_AS(cluster_bench({64}, {ClusterMethod::kmeans}, 0, 1), InvalidInput);
}
