#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "mpsams/clustering.hpp"
#include "mpsams/errors.hpp"
#include "mpsams/metrics.hpp"
#include "mpsams/patching.hpp"
#include "mpsams/rng.hpp"

namespace mpsams {

/// Row-stochastic patch-similarity matrix: row-wise softmax of the patch
/// covariance matrix. `degenerate` is set when the image has zero variance
/// in every patch (rows are then uniform).
struct SimilarityMatrix {
    int count = 0;
    std::vector<double> values;  // row-major N x N
    bool degenerate = false;

    double at(int i, int j) const { return values[static_cast<std::size_t>(i) * count + j]; }
};

/// Which cluster is the lesion and the per-patch labels.
struct LesionLabeling {
    int lesion_cluster = 0;
    std::vector<PatchLabel> labels;
    int lesion_count = 0;
};

/// Covariance of the N patch vectors around the mean patch profile (each
/// pixel position centered by its cross-patch mean, unbiased 1/(L-1)
/// normalization), then a row-wise softmax. Centering against the ensemble
/// mean keeps the patch intensity level in the covariance, which is what
/// separates lesion from background profiles; centering each patch by its
/// own mean would erase it. Deterministic; throws on N < 2 or non-finite
/// patches.
template <class T>
SimilarityMatrix patch_similarity(const PatchSet<T>& set) {
    const int n = set.grid.count();
    const int len = set.grid.patch_length();
    if (n < 2) throw InvalidInput("patch_similarity: need at least two patches");
    if (len < 2) throw InvalidInput("patch_similarity: patch vectors need at least two entries");

    std::vector<double> mean_patch(static_cast<std::size_t>(len), 0.0);
    for (int i = 0; i < n; ++i) {
        const auto& v = set.patches[static_cast<std::size_t>(i)];
        for (int k = 0; k < len; ++k) {
            const double x = static_cast<double>(v[static_cast<std::size_t>(k)]);
            if (!std::isfinite(x)) throw InvalidInput("patch_similarity: non-finite patch value");
            mean_patch[static_cast<std::size_t>(k)] += x;
        }
    }
    for (double& m : mean_patch) m /= n;

    std::vector<double> centered(static_cast<std::size_t>(n) * len);
    for (int i = 0; i < n; ++i) {
        const auto& v = set.patches[static_cast<std::size_t>(i)];
        for (int k = 0; k < len; ++k)
            centered[static_cast<std::size_t>(i) * len + k] =
                static_cast<double>(v[static_cast<std::size_t>(k)]) - mean_patch[static_cast<std::size_t>(k)];
    }

    SimilarityMatrix sim;
    sim.count = n;
    sim.values.assign(static_cast<std::size_t>(n) * n, 0.0);

    double max_var = 0.0;
    std::vector<double> cov(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
            double acc = 0.0;
            const double* a = centered.data() + static_cast<std::size_t>(i) * len;
            const double* b = centered.data() + static_cast<std::size_t>(j) * len;
            for (int k = 0; k < len; ++k) acc += a[k] * b[k];
            acc /= (len - 1);
            cov[static_cast<std::size_t>(i) * n + j] = acc;
            cov[static_cast<std::size_t>(j) * n + i] = acc;
            if (i == j) max_var = std::max(max_var, acc);
        }
    }

    if (max_var == 0.0) {
        sim.degenerate = true;
        const double u = 1.0 / n;
        std::fill(sim.values.begin(), sim.values.end(), u);
        return sim;
    }

    for (int i = 0; i < n; ++i) {
        const double* row = cov.data() + static_cast<std::size_t>(i) * n;
        double m = row[0];
        for (int j = 1; j < n; ++j) m = std::max(m, row[j]);
        double total = 0.0;
        double* out = sim.values.data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            out[j] = std::exp(row[j] - m);
            total += out[j];
        }
        for (int j = 0; j < n; ++j) out[j] /= total;
    }
    return sim;
}

/// Sample variance of each patch vector over its own pixels (same 1/(L-1)
/// convention as patch_similarity's diagonal).
template <class T>
std::vector<double> patch_variances(const PatchSet<T>& set) {
    const int len = set.grid.patch_length();
    std::vector<double> out(set.patches.size());
    for (std::size_t i = 0; i < set.patches.size(); ++i) {
        const auto& v = set.patches[i];
        double mean = 0.0;
        for (auto x : v) mean += static_cast<double>(x);
        mean /= len;
        double acc = 0.0;
        for (auto x : v) {
            const double d = static_cast<double>(x) - mean;
            acc += d * d;
        }
        out[i] = acc / (len - 1);
    }
    return out;
}

/// k = 2 clustering over the rows of the similarity matrix (each row is the
/// patch's similarity profile).
inline ClusterAssignment cluster_patches(const SimilarityMatrix& sim, ClusterMethod method, std::uint64_t seed) {
    if (sim.count < 2 || sim.values.size() != static_cast<std::size_t>(sim.count) * sim.count)
        throw InvalidInput("cluster_patches: malformed similarity matrix");
    FeatureRows rows;
    rows.count = sim.count;
    rows.dim = sim.count;
    rows.values = sim.values;
    return cluster_rows(rows, method, seed);
}

/// Smaller cluster is the lesion. Equal sizes: the cluster with the higher
/// mean patch variance wins (lesions are the high-contrast minority);
/// variance tie falls back to cluster 0.
inline LesionLabeling label_lesion_cluster(const ClusterAssignment& assign,
                                           const std::vector<double>& variances) {
    const std::size_t n = assign.assignment.size();
    if (n == 0) throw InvalidInput("label_lesion_cluster: empty assignment");
    if (variances.size() != n)
        throw InvalidInput("label_lesion_cluster: variance vector size mismatch");
    const std::size_t size0 = assign.cluster_size(0);
    const std::size_t size1 = n - size0;
    if (size0 == 0 || size1 == 0) throw InvalidInput("label_lesion_cluster: need two non-empty clusters");

    int lesion;
    if (size0 != size1) {
        lesion = size0 < size1 ? 0 : 1;
    } else {
        double var[2] = {0.0, 0.0};
        for (std::size_t i = 0; i < n; ++i) var[assign.assignment[i]] += variances[i];
        lesion = var[1] > var[0] ? 1 : 0;
    }

    LesionLabeling out;
    out.lesion_cluster = lesion;
    out.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const bool is_lesion = assign.assignment[i] == lesion;
        out.labels[i] = is_lesion ? PatchLabel::lesion : PatchLabel::background;
        out.lesion_count += is_lesion;
    }
    return out;
}

/// Lesion-first ordering: lesion patches before background patches, each
/// group sorted by descending mean similarity to the lesion cluster's
/// members, ties by ascending patch index. n is left unset (0).
inline MaskPlan order_patches(const LesionLabeling& labeling, const SimilarityMatrix& sim,
                              const PatchGrid& grid, std::uint64_t seed = 0) {
    const int n = sim.count;
    if (labeling.labels.size() != static_cast<std::size_t>(n))
        throw InvalidInput("order_patches: labeling/similarity size mismatch");
    if (grid.count() != n) throw InvalidInput("order_patches: grid/similarity size mismatch");

    std::vector<double> score(static_cast<std::size_t>(n), 0.0);
    const int lesion_total = labeling.lesion_count;
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j)
            if (labeling.labels[static_cast<std::size_t>(j)] == PatchLabel::lesion) acc += sim.at(i, j);
        score[static_cast<std::size_t>(i)] = lesion_total > 0 ? acc / lesion_total : 0.0;
    }

    MaskPlan plan;
    plan.grid = grid;
    plan.labels = labeling.labels;
    plan.seed = seed;
    plan.n = 0;
    plan.order.resize(static_cast<std::size_t>(n));
    std::iota(plan.order.begin(), plan.order.end(), 0);
    std::sort(plan.order.begin(), plan.order.end(), [&](int a, int b) {
        const bool la = labeling.labels[static_cast<std::size_t>(a)] == PatchLabel::lesion;
        const bool lb = labeling.labels[static_cast<std::size_t>(b)] == PatchLabel::lesion;
        if (la != lb) return la;
        const double sa = score[static_cast<std::size_t>(a)], sb = score[static_cast<std::size_t>(b)];
        if (sa != sb) return sa > sb;
        return a < b;
    });
    return plan;
}

/// Fixes the masked-prefix length of an ordered plan.
inline MaskPlan make_mask_plan(const MaskPlan& ordered, int n) {
    if (n < 0 || n > static_cast<int>(ordered.order.size()))
        throw InvalidInput("make_mask_plan: n out of range [0, " + std::to_string(ordered.order.size()) + "]");
    MaskPlan plan = ordered;
    plan.n = n;
    return plan;
}

/// Full MPS ordering for one image's patches: similarity, clustering,
/// lesion labeling, lesion-first sort. n is left unset.
template <class T>
MaskPlan mps_order(const PatchSet<T>& patches, ClusterMethod method, std::uint64_t seed) {
    const SimilarityMatrix sim = patch_similarity(patches);
    const ClusterAssignment assign = cluster_patches(sim, method, seed);
    const LesionLabeling labeling = label_lesion_cluster(assign, patch_variances(patches));
    return order_patches(labeling, sim, patches.grid, seed);
}

/// Seeded random ordering with no lesion labels; the selection baseline.
inline MaskPlan random_order(const PatchGrid& grid, std::uint64_t seed) {
    MaskPlan plan;
    plan.grid = grid;
    plan.seed = seed;
    plan.n = 0;
    Rng rng(seed);
    plan.order = rng.permutation(grid.count());
    plan.labels.assign(static_cast<std::size_t>(grid.count()), PatchLabel::background);
    return plan;
}

/// Fraction of ground-truth-overlapping patches that the labeling marks as
/// lesion. A patch overlaps when it contains at least one positive pixel.
inline double lesion_patch_recall(const std::vector<PatchLabel>& labels, const PatchGrid& grid,
                                  const BinaryMask& gt) {
    if (gt.height != grid.rows * grid.patch_size || gt.width != grid.cols * grid.patch_size)
        throw InvalidInput("lesion_patch_recall: mask does not match grid geometry");
    int overlapping = 0, recovered = 0;
    for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.cols; ++c) {
            bool overlap = false;
            for (int py = 0; py < grid.patch_size && !overlap; ++py)
                for (int px = 0; px < grid.patch_size; ++px)
                    if (gt.at(r * grid.patch_size + py, c * grid.patch_size + px)) {
                        overlap = true;
                        break;
                    }
            if (!overlap) continue;
            ++overlapping;
            if (labels[static_cast<std::size_t>(r) * grid.cols + c] == PatchLabel::lesion) ++recovered;
        }
    }
    if (overlapping == 0) return 1.0;
    return static_cast<double>(recovered) / overlapping;
}

// ---------------------------------------------------------------------------
// Clustering-method benchmark
// ---------------------------------------------------------------------------

struct BenchCell {
    std::string method;
    int patch_count = 0;
    int trial = 0;
    double wall_time_seconds = 0.0;
    double lesion_recall = 0.0;
    bool timed_out = false;
};

struct BenchSlope {
    double value = 0.0;
    bool defined = false;
};

struct BenchReport {
    std::vector<BenchCell> cells;
    std::map<std::string, BenchSlope> slopes;  // fitted log-log time-vs-N growth exponent
};

/// Synthetic linearly-separable rows for the bench: a small, tight
/// `lesion_fraction` blob far from a broad background blob. The feature
/// dimension is fixed and low so timings reflect algorithmic growth in N
/// alone and the dbscan radius rule still finds dense neighborhoods.
inline FeatureRows bench_rows(int count, std::uint64_t seed, std::vector<char>* lesion_labels = nullptr,
                              int dim = 3, double lesion_fraction = 0.1, double separation = 12.0) {
    if (count < 8) throw InvalidInput("bench_rows: need at least 8 rows");
    Rng rng(seed);
    FeatureRows rows;
    rows.count = count;
    rows.dim = dim;
    rows.values.resize(static_cast<std::size_t>(count) * dim);
    const int lesions = std::max(1, static_cast<int>(std::floor(count * lesion_fraction)));
    if (lesion_labels) lesion_labels->assign(static_cast<std::size_t>(count), 0);
    for (int i = 0; i < count; ++i) {
        const bool lesion = i < lesions;
        if (lesion && lesion_labels) (*lesion_labels)[static_cast<std::size_t>(i)] = 1;
        const double sigma = lesion ? 0.35 : 1.0;
        for (int d = 0; d < dim; ++d)
            rows.row(i)[d] = rng.normal(0.0, sigma) + (lesion && d == 0 ? separation : 0.0);
    }
    return rows;
}

/// Times each method at each size on freshly generated separable rows and
/// fits the log-log growth exponent per method. Methods run sequentially so
/// timings stay honest; a trial exceeding `budget_seconds` flags that method
/// as timed-out for all larger sizes.
inline BenchReport cluster_bench(const std::vector<int>& patch_counts, const std::vector<ClusterMethod>& methods,
                                 int trials, std::uint64_t seed, double budget_seconds = 60.0) {
    if (patch_counts.empty()) throw InvalidInput("cluster_bench: need at least one patch count");
    if (!std::is_sorted(patch_counts.begin(), patch_counts.end()))
        throw InvalidInput("cluster_bench: patch counts must be ascending");
    if (methods.empty()) throw InvalidInput("cluster_bench: need at least one method");
    if (trials < 1) throw InvalidInput("cluster_bench: need at least one trial");

    BenchReport report;
    for (const ClusterMethod method : methods) {
        bool over_budget = false;
        std::vector<double> log_n, log_t;
        for (std::size_t si = 0; si < patch_counts.size(); ++si) {
            const int count = patch_counts[si];
            double mean_time = 0.0;
            int valid = 0;
            bool size_timed_out = false;
            for (int trial = 0; trial < trials; ++trial) {
                BenchCell cell;
                cell.method = to_string(method);
                cell.patch_count = count;
                cell.trial = trial;
                if (over_budget) {
                    cell.timed_out = true;
                    report.cells.push_back(cell);
                    continue;
                }
                std::vector<char> truth;
                const std::uint64_t trial_seed =
                    derive_seed(seed, {static_cast<std::uint64_t>(si), static_cast<std::uint64_t>(trial),
                                       static_cast<std::uint64_t>(method)});
                const FeatureRows rows = bench_rows(count, trial_seed, &truth);
                const auto t0 = std::chrono::steady_clock::now();
                ClusterAssignment assign;
                bool failed = false;
                try {
                    assign = cluster_rows(rows, method, trial_seed);
                } catch (const ClusteringDegenerate&) {
                    failed = true;
                }
                const auto t1 = std::chrono::steady_clock::now();
                cell.wall_time_seconds = std::chrono::duration<double>(t1 - t0).count();
                if (cell.wall_time_seconds > budget_seconds) {
                    cell.timed_out = true;
                    size_timed_out = true;
                }
                if (!failed && !cell.timed_out) {
                    const int small = assign.cluster_size(0) <= assign.cluster_size(1) ? 0 : 1;
                    int hit = 0, total = 0;
                    for (std::size_t i = 0; i < truth.size(); ++i) {
                        if (!truth[i]) continue;
                        ++total;
                        hit += assign.assignment[i] == small;
                    }
                    cell.lesion_recall = total > 0 ? static_cast<double>(hit) / total : 1.0;
                    mean_time += cell.wall_time_seconds;
                    ++valid;
                }
                report.cells.push_back(cell);
            }
            if (!over_budget && !size_timed_out && valid > 0) {
                mean_time /= valid;
                log_n.push_back(std::log(static_cast<double>(count)));
                log_t.push_back(std::log(std::max(mean_time, 1e-9)));
            }
            if (size_timed_out) over_budget = true;
        }
        BenchSlope slope;
        if (log_n.size() >= 2) {
            double mx = 0.0, my = 0.0;
            for (std::size_t i = 0; i < log_n.size(); ++i) {
                mx += log_n[i];
                my += log_t[i];
            }
            mx /= log_n.size();
            my /= log_n.size();
            double sxy = 0.0, sxx = 0.0;
            for (std::size_t i = 0; i < log_n.size(); ++i) {
                sxy += (log_n[i] - mx) * (log_t[i] - my);
                sxx += (log_n[i] - mx) * (log_n[i] - mx);
            }
            slope.value = sxy / sxx;
            slope.defined = true;
        }
        report.slopes[to_string(method)] = slope;
    }
    return report;
}

}  // namespace mpsams
