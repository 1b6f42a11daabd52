#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "mpsams/errors.hpp"
#include "mpsams/rng.hpp"

namespace mpsams {

enum class ClusterMethod { kmeans, hierarchical, tsne_kmeans, dbscan };

inline const char* to_string(ClusterMethod m) {
    switch (m) {
        case ClusterMethod::kmeans: return "kmeans";
        case ClusterMethod::hierarchical: return "hierarchical";
        case ClusterMethod::tsne_kmeans: return "tsne_kmeans";
        case ClusterMethod::dbscan: return "dbscan";
    }
    return "?";
}

inline ClusterMethod cluster_method_from_string(const std::string& s) {
    if (s == "kmeans") return ClusterMethod::kmeans;
    if (s == "hierarchical") return ClusterMethod::hierarchical;
    if (s == "tsne_kmeans") return ClusterMethod::tsne_kmeans;
    if (s == "dbscan") return ClusterMethod::dbscan;
    throw InvalidInput("unknown clustering method: " + s);
}

/// Two-way partition of N feature rows.
struct ClusterAssignment {
    std::vector<int> assignment;  // per-row cluster id in {0,1}
    ClusterMethod method = ClusterMethod::kmeans;
    int iterations = 0;
    bool converged = false;
    std::uint64_t seed = 0;

    std::size_t cluster_size(int id) const {
        std::size_t n = 0;
        for (int a : assignment) n += (a == id);
        return n;
    }
};

/// Row-major N x dim feature matrix used by all clustering routines.
struct FeatureRows {
    int count = 0;
    int dim = 0;
    std::vector<double> values;

    const double* row(int i) const { return values.data() + static_cast<std::size_t>(i) * dim; }
    double* row(int i) { return values.data() + static_cast<std::size_t>(i) * dim; }
};

namespace detail {

inline double sq_dist(const double* a, const double* b, int dim) {
    double acc = 0.0;
    for (int d = 0; d < dim; ++d) {
        const double diff = a[d] - b[d];
        acc += diff * diff;
    }
    return acc;
}

// Deterministic, index-independent 2-means init: the row farthest from the
// data centroid seeds the candidate-lesion center, the row closest to the
// centroid seeds the candidate-background center. Extremal squared distance
// to the centroid ranks rows exactly like extremal mean squared distance to
// all other rows, but costs O(N*dim).
inline std::pair<int, int> anchor_rows(const FeatureRows& rows) {
    const int n = rows.count, dim = rows.dim;
    std::vector<double> centroid(static_cast<std::size_t>(dim), 0.0);
    for (int i = 0; i < n; ++i)
        for (int d = 0; d < dim; ++d) centroid[d] += rows.row(i)[d];
    for (double& v : centroid) v /= n;
    int far_idx = 0, near_idx = 0;
    double far_d = -1.0, near_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
        const double d = sq_dist(rows.row(i), centroid.data(), dim);
        if (d > far_d) {
            far_d = d;
            far_idx = i;
        }
        if (d < near_d) {
            near_d = d;
            near_idx = i;
        }
    }
    if (near_idx == far_idx) near_idx = (far_idx == 0 && n > 1) ? 1 : 0;
    return {far_idx, near_idx};
}

}  // namespace detail

/// Lloyd 2-means over feature rows. Deterministic given (rows, seed): the
/// init is anchored to the data (see anchor_rows); the seed only drives the
/// jitter used when a retry is needed. Max 100 iterations, convergence =
/// stable assignments. Throws ClusteringDegenerate if two non-empty clusters
/// cannot be formed after 3 seed-derived perturbation retries.
inline ClusterAssignment kmeans2(const FeatureRows& rows, std::uint64_t seed) {
    const int n = rows.count, dim = rows.dim;
    if (n < 2) throw InvalidInput("kmeans2: need at least two rows");

    const auto [far_idx, near_idx] = detail::anchor_rows(rows);
    double scale = 0.0;
    for (double v : rows.values) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) scale = 1.0;

    ClusterAssignment out;
    out.method = ClusterMethod::kmeans;
    out.seed = seed;

    for (int attempt = 0; attempt < 4; ++attempt) {
        std::vector<double> centers(2 * static_cast<std::size_t>(dim));
        std::copy_n(rows.row(far_idx), dim, centers.data());
        std::copy_n(rows.row(near_idx), dim, centers.data() + dim);
        if (attempt > 0) {
            Rng jitter(derive_seed(seed, {0x6b6d, static_cast<std::uint64_t>(attempt)}));
            for (double& c : centers) c += jitter.normal(0.0, 1e-4 * scale);
        }

        std::vector<int> assign(static_cast<std::size_t>(n), 0);
        std::vector<int> prev(static_cast<std::size_t>(n), -1);
        bool converged = false;
        int iter = 0;
        for (; iter < 100; ++iter) {
            // assignment step; ties go to cluster 0
            for (int i = 0; i < n; ++i) {
                const double d0 = detail::sq_dist(rows.row(i), centers.data(), dim);
                const double d1 = detail::sq_dist(rows.row(i), centers.data() + dim, dim);
                assign[static_cast<std::size_t>(i)] = d1 < d0 ? 1 : 0;
            }
            if (assign == prev) {
                converged = true;
                break;
            }
            prev = assign;
            // update step
            std::size_t counts[2] = {0, 0};
            std::fill(centers.begin(), centers.end(), 0.0);
            for (int i = 0; i < n; ++i) {
                const int a = assign[static_cast<std::size_t>(i)];
                ++counts[a];
                for (int d = 0; d < dim; ++d) centers[static_cast<std::size_t>(a) * dim + d] += rows.row(i)[d];
            }
            if (counts[0] == 0 || counts[1] == 0) break;  // retry with jitter
            for (int a = 0; a < 2; ++a)
                for (int d = 0; d < dim; ++d) centers[static_cast<std::size_t>(a) * dim + d] /= counts[a];
        }

        std::size_t c0 = 0;
        for (int a : assign) c0 += (a == 0);
        if (c0 > 0 && c0 < static_cast<std::size_t>(n)) {
            out.assignment = std::move(assign);
            out.iterations = iter + 1;
            out.converged = converged;
            return out;
        }
    }
    throw ClusteringDegenerate("kmeans2: could not form two non-empty clusters after retries");
}

/// Single-linkage 2-clustering: build the Euclidean MST (Prim, O(N^2)) and
/// cut its longest edge.
inline ClusterAssignment single_linkage2(const FeatureRows& rows, std::uint64_t seed) {
    const int n = rows.count, dim = rows.dim;
    if (n < 2) throw InvalidInput("single_linkage2: need at least two rows");

    std::vector<double> best(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    std::vector<int> parent(static_cast<std::size_t>(n), -1);
    std::vector<char> in_tree(static_cast<std::size_t>(n), 0);
    in_tree[0] = 1;
    for (int j = 1; j < n; ++j) {
        best[static_cast<std::size_t>(j)] = detail::sq_dist(rows.row(0), rows.row(j), dim);
        parent[static_cast<std::size_t>(j)] = 0;
    }
    int cut_child = -1;
    double cut_len = -1.0;
    for (int step = 1; step < n; ++step) {
        int next = -1;
        double next_d = std::numeric_limits<double>::infinity();
        for (int j = 0; j < n; ++j)
            if (!in_tree[static_cast<std::size_t>(j)] && best[static_cast<std::size_t>(j)] < next_d) {
                next_d = best[static_cast<std::size_t>(j)];
                next = j;
            }
        in_tree[static_cast<std::size_t>(next)] = 1;
        if (next_d > cut_len) {
            cut_len = next_d;
            cut_child = next;
        }
        for (int j = 0; j < n; ++j)
            if (!in_tree[static_cast<std::size_t>(j)]) {
                const double d = detail::sq_dist(rows.row(next), rows.row(j), dim);
                if (d < best[static_cast<std::size_t>(j)]) {
                    best[static_cast<std::size_t>(j)] = d;
                    parent[static_cast<std::size_t>(j)] = next;
                }
            }
    }

    // removing the longest edge splits the tree; flood from the cut child
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
    for (int j = 1; j < n; ++j) {
        if (j == cut_child) continue;
        adj[static_cast<std::size_t>(j)].push_back(parent[static_cast<std::size_t>(j)]);
        adj[static_cast<std::size_t>(parent[static_cast<std::size_t>(j)])].push_back(j);
    }
    ClusterAssignment out;
    out.method = ClusterMethod::hierarchical;
    out.seed = seed;
    out.assignment.assign(static_cast<std::size_t>(n), 0);
    std::vector<int> stack{cut_child};
    out.assignment[static_cast<std::size_t>(cut_child)] = 1;
    while (!stack.empty()) {
        const int v = stack.back();
        stack.pop_back();
        for (int w : adj[static_cast<std::size_t>(v)])
            if (out.assignment[static_cast<std::size_t>(w)] == 0) {
                out.assignment[static_cast<std::size_t>(w)] = 1;
                stack.push_back(w);
            }
    }
    // flood marked the component containing the cut child as 1; relabel so
    // cluster 0 is the one holding row 0 (stable, index-anchored)
    if (out.assignment[0] == 1)
        for (int& a : out.assignment) a ^= 1;
    out.iterations = n - 1;
    out.converged = true;
    if (out.cluster_size(0) == 0 || out.cluster_size(1) == 0)
        throw ClusteringDegenerate("single_linkage2: degenerate split");
    return out;
}

/// DBSCAN with radius = 0.5 * median pairwise distance and min-points 4,
/// reduced to exactly two clusters: noise joins the nearer cluster, extra
/// clusters are merged into the nearest of the two largest.
inline ClusterAssignment dbscan2(const FeatureRows& rows, std::uint64_t seed) {
    const int n = rows.count, dim = rows.dim;
    if (n < 2) throw InvalidInput("dbscan2: need at least two rows");

    std::vector<double> dists;
    dists.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) dists.push_back(std::sqrt(detail::sq_dist(rows.row(i), rows.row(j), dim)));
    auto mid = dists.begin() + dists.size() / 2;
    std::nth_element(dists.begin(), mid, dists.end());
    const double eps = 0.5 * *mid;
    const double eps_sq = eps * eps;
    const int min_pts = 4;

    std::vector<int> label(static_cast<std::size_t>(n), -1);  // -1 unvisited, -2 noise
    int next_cluster = 0;
    std::vector<int> neigh, frontier;
    auto neighbors = [&](int i) {
        neigh.clear();
        for (int j = 0; j < n; ++j)
            if (j != i && detail::sq_dist(rows.row(i), rows.row(j), dim) <= eps_sq) neigh.push_back(j);
    };
    for (int i = 0; i < n; ++i) {
        if (label[static_cast<std::size_t>(i)] != -1) continue;
        neighbors(i);
        if (static_cast<int>(neigh.size()) + 1 < min_pts) {
            label[static_cast<std::size_t>(i)] = -2;
            continue;
        }
        const int cid = next_cluster++;
        label[static_cast<std::size_t>(i)] = cid;
        frontier = neigh;
        while (!frontier.empty()) {
            const int j = frontier.back();
            frontier.pop_back();
            if (label[static_cast<std::size_t>(j)] == -2) label[static_cast<std::size_t>(j)] = cid;
            if (label[static_cast<std::size_t>(j)] != -1) continue;
            label[static_cast<std::size_t>(j)] = cid;
            neighbors(j);
            if (static_cast<int>(neigh.size()) + 1 >= min_pts)
                frontier.insert(frontier.end(), neigh.begin(), neigh.end());
        }
    }

    if (next_cluster < 2)
        throw ClusteringDegenerate("dbscan2: found " + std::to_string(next_cluster) +
                                   " clusters, cannot split in two");

    // centroids per raw cluster
    std::vector<std::vector<double>> centroids(static_cast<std::size_t>(next_cluster),
                                               std::vector<double>(static_cast<std::size_t>(dim), 0.0));
    std::vector<std::size_t> sizes(static_cast<std::size_t>(next_cluster), 0);
    for (int i = 0; i < n; ++i) {
        const int c = label[static_cast<std::size_t>(i)];
        if (c < 0) continue;
        ++sizes[static_cast<std::size_t>(c)];
        for (int d = 0; d < dim; ++d) centroids[static_cast<std::size_t>(c)][static_cast<std::size_t>(d)] += rows.row(i)[d];
    }
    for (int c = 0; c < next_cluster; ++c)
        for (int d = 0; d < dim; ++d) centroids[static_cast<std::size_t>(c)][static_cast<std::size_t>(d)] /= sizes[static_cast<std::size_t>(c)];

    // two largest clusters survive (ties: lower id)
    int a = 0, b = 1;
    for (int c = 0; c < next_cluster; ++c) {
        if (sizes[static_cast<std::size_t>(c)] > sizes[static_cast<std::size_t>(a)]) a = c;
    }
    b = (a == 0) ? 1 : 0;
    for (int c = 0; c < next_cluster; ++c) {
        if (c == a) continue;
        if (sizes[static_cast<std::size_t>(c)] > sizes[static_cast<std::size_t>(b)]) b = c;
    }
    if (a > b) std::swap(a, b);

    ClusterAssignment out;
    out.method = ClusterMethod::dbscan;
    out.seed = seed;
    out.iterations = next_cluster;
    out.converged = true;
    out.assignment.assign(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
        const int c = label[static_cast<std::size_t>(i)];
        if (c == a) {
            out.assignment[static_cast<std::size_t>(i)] = 0;
        } else if (c == b) {
            out.assignment[static_cast<std::size_t>(i)] = 1;
        } else if (c >= 0) {
            const double da = detail::sq_dist(centroids[static_cast<std::size_t>(a)].data(), rows.row(i), dim);
            const double db = detail::sq_dist(centroids[static_cast<std::size_t>(b)].data(), rows.row(i), dim);
            out.assignment[static_cast<std::size_t>(i)] = db < da ? 1 : 0;
        } else {
            // noise: nearer surviving centroid
            const double da = detail::sq_dist(centroids[static_cast<std::size_t>(a)].data(), rows.row(i), dim);
            const double db = detail::sq_dist(centroids[static_cast<std::size_t>(b)].data(), rows.row(i), dim);
            out.assignment[static_cast<std::size_t>(i)] = db < da ? 1 : 0;
        }
    }
    if (out.cluster_size(0) == 0 || out.cluster_size(1) == 0)
        throw ClusteringDegenerate("dbscan2: merge left an empty cluster");
    return out;
}

/// Plain O(N^2) t-SNE to 2-D (perplexity 10, 500 iterations, seeded init)
/// followed by kmeans2 on the embedding. Bench-comparison path only.
inline ClusterAssignment tsne_kmeans2(const FeatureRows& rows, std::uint64_t seed) {
    const int n = rows.count, dim = rows.dim;
    if (n < 2) throw InvalidInput("tsne_kmeans2: need at least two rows");
    const double perplexity = std::min(10.0, (n - 1) / 3.0);
    const int iterations = 500;

    // conditional affinities with per-point bandwidth matched to perplexity
    std::vector<double> p(static_cast<std::size_t>(n) * n, 0.0);
    std::vector<double> d2(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            d2[static_cast<std::size_t>(i) * n + j] = detail::sq_dist(rows.row(i), rows.row(j), dim);
    const double target_entropy = std::log(perplexity);
    for (int i = 0; i < n; ++i) {
        double beta = 1.0, beta_lo = 0.0, beta_hi = std::numeric_limits<double>::infinity();
        for (int it = 0; it < 50; ++it) {
            double sum = 0.0, sum_dp = 0.0;
            for (int j = 0; j < n; ++j) {
                if (j == i) continue;
                const double w = std::exp(-beta * d2[static_cast<std::size_t>(i) * n + j]);
                sum += w;
                sum_dp += w * d2[static_cast<std::size_t>(i) * n + j];
            }
            if (sum <= 0.0) break;
            const double entropy = std::log(sum) + beta * sum_dp / sum;
            const double diff = entropy - target_entropy;
            if (std::abs(diff) < 1e-5) break;
            if (diff > 0) {
                beta_lo = beta;
                beta = std::isinf(beta_hi) ? beta * 2 : 0.5 * (beta + beta_hi);
            } else {
                beta_hi = beta;
                beta = 0.5 * (beta + beta_lo);
            }
        }
        double sum = 0.0;
        for (int j = 0; j < n; ++j)
            if (j != i) sum += std::exp(-beta * d2[static_cast<std::size_t>(i) * n + j]);
        if (sum <= 0.0) sum = 1.0;
        for (int j = 0; j < n; ++j)
            if (j != i) p[static_cast<std::size_t>(i) * n + j] = std::exp(-beta * d2[static_cast<std::size_t>(i) * n + j]) / sum;
    }
    // symmetrize
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double v = (p[static_cast<std::size_t>(i) * n + j] + p[static_cast<std::size_t>(j) * n + i]) / (2.0 * n);
            p[static_cast<std::size_t>(i) * n + j] = p[static_cast<std::size_t>(j) * n + i] = std::max(v, 1e-12);
        }

    Rng rng(derive_seed(seed, {0x74736e65}));
    std::vector<double> y(static_cast<std::size_t>(n) * 2), vel(static_cast<std::size_t>(n) * 2, 0.0),
        grad(static_cast<std::size_t>(n) * 2);
    for (auto& v : y) v = rng.normal(0.0, 1e-4);

    std::vector<double> qnum(static_cast<std::size_t>(n) * n);
    for (int it = 0; it < iterations; ++it) {
        const double exaggeration = it < 100 ? 4.0 : 1.0;
        const double momentum = it < 250 ? 0.5 : 0.8;
        double qsum = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                const double dy0 = y[static_cast<std::size_t>(i) * 2] - y[static_cast<std::size_t>(j) * 2];
                const double dy1 = y[static_cast<std::size_t>(i) * 2 + 1] - y[static_cast<std::size_t>(j) * 2 + 1];
                const double w = 1.0 / (1.0 + dy0 * dy0 + dy1 * dy1);
                qnum[static_cast<std::size_t>(i) * n + j] = w;
                qsum += 2.0 * w;
            }
        std::fill(grad.begin(), grad.end(), 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                const double w = qnum[static_cast<std::size_t>(i) * n + j];
                const double q = std::max(w / qsum, 1e-12);
                const double coef = 4.0 * (exaggeration * p[static_cast<std::size_t>(i) * n + j] - q) * w;
                const double dy0 = y[static_cast<std::size_t>(i) * 2] - y[static_cast<std::size_t>(j) * 2];
                const double dy1 = y[static_cast<std::size_t>(i) * 2 + 1] - y[static_cast<std::size_t>(j) * 2 + 1];
                grad[static_cast<std::size_t>(i) * 2] += coef * dy0;
                grad[static_cast<std::size_t>(i) * 2 + 1] += coef * dy1;
                grad[static_cast<std::size_t>(j) * 2] -= coef * dy0;
                grad[static_cast<std::size_t>(j) * 2 + 1] -= coef * dy1;
            }
        const double eta = 100.0;
        for (std::size_t k = 0; k < y.size(); ++k) {
            vel[k] = momentum * vel[k] - eta * grad[k];
            y[k] += vel[k];
        }
    }

    FeatureRows embedded;
    embedded.count = n;
    embedded.dim = 2;
    embedded.values = std::move(y);
    ClusterAssignment out = kmeans2(embedded, seed);
    out.method = ClusterMethod::tsne_kmeans;
    out.iterations = iterations;
    return out;
}

/// Dispatch by method id.
inline ClusterAssignment cluster_rows(const FeatureRows& rows, ClusterMethod method, std::uint64_t seed) {
    switch (method) {
        case ClusterMethod::kmeans: return kmeans2(rows, seed);
        case ClusterMethod::hierarchical: return single_linkage2(rows, seed);
        case ClusterMethod::tsne_kmeans: return tsne_kmeans2(rows, seed);
        case ClusterMethod::dbscan: return dbscan2(rows, seed);
    }
    throw InvalidInput("cluster_rows: unknown method");
}

}  // namespace mpsams
