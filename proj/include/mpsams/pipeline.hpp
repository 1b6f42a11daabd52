#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mpsams/csv.hpp"
#include "mpsams/data.hpp"
#include "mpsams/errors.hpp"
#include "mpsams/metrics.hpp"
#include "mpsams/model.hpp"
#include "mpsams/optim.hpp"
#include "mpsams/parallel.hpp"
#include "mpsams/patching.hpp"
#include "mpsams/rng.hpp"
#include "mpsams/schedule.hpp"
#include "mpsams/selection.hpp"

namespace mpsams {

// ---------------------------------------------------------------------------
// Dataset splitting
// ---------------------------------------------------------------------------

struct SplitSpec {
    double train_fraction = 0.8;
    double val_fraction = 0.1;
    double test_fraction = 0.1;
    double labeled_fraction = 0.05;
    std::uint64_t seed = 0;

    void validate() const {
        if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9)
            throw InvalidInput("split: fractions must sum to 1");
        if (train_fraction <= 0.0 || val_fraction <= 0.0 || test_fraction <= 0.0)
            throw InvalidInput("split: all fractions must be positive");
        if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0))
            throw InvalidInput("split: labeled fraction must be in (0,1]");
    }
};

/// Disjoint index sets; labeled-train is carved out of the train block, so
/// the four parts partition 0..N-1.
struct SplitResult {
    std::vector<int> unlabeled_train;
    std::vector<int> labeled_train;
    std::vector<int> val;
    std::vector<int> test;

    std::vector<int> all_train() const {
        std::vector<int> out = labeled_train;
        out.insert(out.end(), unlabeled_train.begin(), unlabeled_train.end());
        return out;
    }
};

inline SplitResult split_dataset(int count, const SplitSpec& spec) {
    spec.validate();
    if (count < 10) throw InvalidInput("split: need at least 10 samples, got " + std::to_string(count));
    const int n_val = static_cast<int>(std::floor(count * spec.val_fraction));
    const int n_test = static_cast<int>(std::floor(count * spec.test_fraction));
    const int n_train = count - n_val - n_test;
    if (n_val < 1 || n_test < 1 || n_train < 2)
        throw InvalidInput("split: dataset too small for non-empty parts");
    int n_labeled = static_cast<int>(std::floor(n_train * spec.labeled_fraction));
    n_labeled = std::clamp(n_labeled, 1, n_train);

    Rng rng(derive_seed(spec.seed, {0x73706c69}));
    std::vector<int> perm = rng.permutation(count);
    SplitResult out;
    out.labeled_train.assign(perm.begin(), perm.begin() + n_labeled);
    out.unlabeled_train.assign(perm.begin() + n_labeled, perm.begin() + n_train);
    out.val.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
    out.test.assign(perm.begin() + n_train + n_val, perm.end());
    return out;
}

// ---------------------------------------------------------------------------
// Run records
// ---------------------------------------------------------------------------

/// One CSV row of the per-run metrics log; absent cells stay empty.
struct MetricsRow {
    int epoch = 0;
    std::string phase;
    std::optional<double> loss;
    std::optional<double> dsc, ppv, sen;
    std::optional<double> sigma;
    std::optional<int> masked;

    static std::vector<std::string> header() {
        return {"epoch", "phase", "loss", "dsc", "ppv", "sen", "sigma", "n"};
    }
    std::vector<std::string> cells() const {
        auto fmt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string{}; };
        return {std::to_string(epoch), phase,          fmt(loss), fmt(dsc), fmt(ppv), fmt(sen), fmt(sigma),
                masked ? std::to_string(*masked) : std::string{}};
    }
};

inline void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows,
                              std::uint64_t config_hash) {
    CsvWriter csv(MetricsRow::header(), config_hash);
    for (const auto& r : rows) csv.row(r.cells());
    csv.save(path);
}

// ---------------------------------------------------------------------------
// Pretraining
// ---------------------------------------------------------------------------

enum class SelectionMode { mps, random };

inline const char* to_string(SelectionMode m) { return m == SelectionMode::mps ? "mps" : "random"; }

struct PretrainOptions {
    NetConfig net;
    TrainConfig train;
    ScheduleParams schedule;
    SelectionMode selection = SelectionMode::mps;
    ClusterMethod cluster_method = ClusterMethod::kmeans;
    int patch_size = 8;
    MaskFill fill = MaskFill::constant(0.0);
    bool cache_plans = false;        // clustering is epoch-independent, so plans can be reused
    int workers = 1;
    std::vector<int> snapshot_epochs;  // keep in-memory weight copies after these epochs
    std::string checkpoint_dir;        // when set, snapshots are also written to disk
};

struct PretrainStats {
    std::uint64_t clustering_invocations = 0;
    std::uint64_t plan_cache_hits = 0;
    std::vector<int> masked_count_per_epoch;
};

struct PretrainResult {
    ModelWeights<float> weights;
    std::vector<MetricsRow> curve;
    PretrainStats stats;
    std::vector<std::pair<int, ModelWeights<float>>> snapshots;
};

/// Masked-autoencoder pretraining over the images at `indices`. Per epoch:
/// sigma from the schedule, per image a lesion-first MPS plan (or a seeded
/// random order), n = floor(N*sigma), one adaptive-moment step per batch on
/// the masked l2 loss. Deterministic given (data, options, seed); the
/// worker count never changes results because per-image gradients merge in
/// image order.
inline PretrainResult pretrain(const Dataset& data, const std::vector<int>& indices, const PretrainOptions& opts) {
    opts.net.validate();
    opts.train.validate();
    opts.schedule.validate();
    if (indices.empty()) throw InvalidInput("pretrain: no images");
    for (int idx : indices)
        if (idx < 0 || idx >= static_cast<int>(data.size()))
            throw InvalidInput("pretrain: index out of range");

    UNet<float> net(opts.net);
    PretrainResult result;
    result.weights = net.init(derive_seed(opts.train.seed, {0x696e6974}));
    if (opts.fill.kind == MaskFill::Kind::token) {
        auto* token = result.weights.find(kMaskTokenName);
        token->trainable = true;
        token->data[0] = static_cast<float>(opts.fill.value);
    }
    if (opts.train.epochs == 0) return result;

    const PatchGrid grid = patchify(data[static_cast<std::size_t>(indices.front())].image, opts.patch_size).grid;
    const int total_patches = grid.count();

    Adam<float> optimizer(opts.train);
    const int workers = std::max(1, opts.workers);
    std::vector<UNet<float>::Cache> caches(static_cast<std::size_t>(workers));
    std::unordered_map<std::uint64_t, MaskPlan> plan_cache;

    // per-image ordered plans are epoch-independent; only n moves with sigma
    auto ordered_plan_for = [&](int idx) {
        const Sample& sample = data[static_cast<std::size_t>(idx)];
        const std::uint64_t plan_seed = derive_seed(opts.train.seed, {0x706c616e, static_cast<std::uint64_t>(idx)});
        if (opts.selection == SelectionMode::random) {
            return random_order(grid, plan_seed);
        }
        std::uint64_t key = 0;
        if (opts.cache_plans) {
            key = fnv1a64(sample.image.data.data(), sample.image.data.size() * sizeof(float));
            const auto hit = plan_cache.find(key);
            if (hit != plan_cache.end()) {
                ++result.stats.plan_cache_hits;
                return hit->second;
            }
        }
        const auto patches = patchify(sample.image, opts.patch_size);
        ++result.stats.clustering_invocations;
        MaskPlan plan = mps_order(patches, opts.cluster_method, plan_seed);
        if (opts.cache_plans) plan_cache.emplace(key, plan);
        return plan;
    };

    std::vector<int> order(indices);
    const std::size_t n_images = order.size();
    std::vector<ModelWeights<float>> image_grads;
    std::vector<MaskPlan> batch_plans(n_images);

    for (int epoch = 1; epoch <= opts.train.epochs; ++epoch) {
        const double sigma = masking_ratio(epoch, opts.schedule);
        const int n_masked = masked_count(total_patches, sigma);
        result.stats.masked_count_per_epoch.push_back(n_masked);

        Rng shuffle_rng(derive_seed(opts.train.seed, {0x65706f63, static_cast<std::uint64_t>(epoch)}));
        shuffle_rng.shuffle(order);

        const bool random_mode = opts.selection == SelectionMode::random;
        double epoch_loss = 0.0;

        for (std::size_t start = 0; start < n_images; start += static_cast<std::size_t>(opts.train.batch_size)) {
            const std::size_t stop = std::min(n_images, start + static_cast<std::size_t>(opts.train.batch_size));
            const int batch = static_cast<int>(stop - start);
            if (image_grads.size() < static_cast<std::size_t>(batch)) {
                image_grads.resize(static_cast<std::size_t>(batch), net.zero_like(result.weights));
            }
            // plans are computed serially: the cache and the stats counter stay single-writer
            for (int b = 0; b < batch; ++b) {
                const int idx = order[start + static_cast<std::size_t>(b)];
                // random mode draws a fresh mask each epoch, as in standard
                // masked pretraining; mps plans depend only on the image
                const MaskPlan plan =
                    random_mode ? random_order(grid, derive_seed(opts.train.seed,
                                                                 {0x726e64, static_cast<std::uint64_t>(idx),
                                                                  static_cast<std::uint64_t>(epoch)}))
                                : ordered_plan_for(idx);
                batch_plans[static_cast<std::size_t>(b)] = make_mask_plan(plan, n_masked);
            }

            const float token_value = opts.fill.kind == MaskFill::Kind::token
                                          ? result.weights.find(kMaskTokenName)->data[0]
                                          : static_cast<float>(opts.fill.value);
            std::vector<double> batch_losses(static_cast<std::size_t>(batch), 0.0);
            std::atomic<int> next_worker{0};
            std::vector<int> worker_slot(static_cast<std::size_t>(batch), 0);

            parallel_for(batch, workers, [&](int b) {
                thread_local int slot = -1;
                if (slot < 0) slot = next_worker.fetch_add(1) % workers;
                worker_slot[static_cast<std::size_t>(b)] = slot;
                const Sample& sample = data[static_cast<std::size_t>(order[start + static_cast<std::size_t>(b)])];
                const MaskPlan& plan = batch_plans[static_cast<std::size_t>(b)];
                const MaskFill fill = opts.fill.kind == MaskFill::Kind::token
                                          ? MaskFill::token(token_value)
                                          : opts.fill;
                const ImageF masked = apply_mask(sample.image, plan, fill);
                UNet<float>::Cache& cache = caches[static_cast<std::size_t>(slot)];
                const ImageF recon = net.forward(masked, result.weights, &cache);
                Image<float> drecon;
                const auto loss = reconstruction_loss(recon, sample.image, plan, &drecon);
                batch_losses[static_cast<std::size_t>(b)] = loss.total;
                auto& grads = image_grads[static_cast<std::size_t>(b)];
                for (auto& t : grads.tensors) std::fill(t.data.begin(), t.data.end(), 0.0f);
                if (opts.fill.kind == MaskFill::Kind::token) {
                    Image<float> dinput;
                    net.backward(result.weights, cache, drecon.data, grads, &dinput);
                    double dtoken = 0.0;
                    for (int i = 0; i < plan.n; ++i) {
                        const int p = plan.order[static_cast<std::size_t>(i)];
                        const int r = p / plan.grid.cols, c = p % plan.grid.cols;
                        for (int ch = 0; ch < plan.grid.channels; ++ch)
                            for (int py = 0; py < plan.grid.patch_size; ++py)
                                for (int px = 0; px < plan.grid.patch_size; ++px)
                                    dtoken += dinput.at(ch, r * plan.grid.patch_size + py,
                                                        c * plan.grid.patch_size + px);
                    }
                    grads.find(kMaskTokenName)->data[0] = static_cast<float>(dtoken);
                } else {
                    net.backward(result.weights, cache, drecon.data, grads);
                }
            });

            // merge per-image gradients in a fixed order, then one step
            ModelWeights<float>& total = image_grads[0];
            for (int b = 1; b < batch; ++b)
                for (std::size_t t = 0; t < total.tensors.size(); ++t) {
                    const auto& src = image_grads[static_cast<std::size_t>(b)].tensors[t].data;
                    auto& dst = total.tensors[t].data;
                    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
                }
            const float inv_batch = 1.0f / static_cast<float>(batch);
            for (auto& t : total.tensors)
                for (auto& v : t.data) v *= inv_batch;

            double batch_loss = 0.0;
            for (double l : batch_losses) batch_loss += l;
            if (!std::isfinite(batch_loss))
                throw TrainingError("pretrain: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(start / opts.train.batch_size) + ", loss " +
                                    std::to_string(batch_loss));
            epoch_loss += batch_loss;

            optimizer.step(result.weights, total, lr_at_epoch(epoch - 1, opts.train));
        }

        MetricsRow row;
        row.epoch = epoch;
        row.phase = "pretrain";
        row.loss = epoch_loss / static_cast<double>(n_images);
        row.sigma = sigma;
        row.masked = n_masked;
        result.curve.push_back(row);

        const bool want_snapshot =
            std::find(opts.snapshot_epochs.begin(), opts.snapshot_epochs.end(), epoch) != opts.snapshot_epochs.end();
        if (want_snapshot) {
            result.snapshots.emplace_back(epoch, result.weights);
            if (!opts.checkpoint_dir.empty())
                save_checkpoint(opts.checkpoint_dir + "/pretrain_epoch" + std::to_string(epoch) + ".mpsw",
                                result.weights);
        }
    }
    if (!opts.checkpoint_dir.empty())
        save_checkpoint(opts.checkpoint_dir + "/pretrain_final.mpsw", result.weights);
    return result;
}

// ---------------------------------------------------------------------------
// Fine-tuning
// ---------------------------------------------------------------------------

struct FinetuneOptions {
    NetConfig net;
    TrainConfig train;
    bool select_best_on_val = true;
    double threshold = 0.5;
    int workers = 1;
};

struct FinetuneResult {
    ModelWeights<float> weights;  // best-on-val (or final) weights
    std::vector<MetricsRow> curve;
    double best_val_dsc = 0.0;
    int best_epoch = 0;
    int transferred_tensors = 0;
};

/// Mean per-image metrics of `weights` over the samples at `indices`.
inline SegMetrics evaluate_segmentation(const ModelWeights<float>& weights, const Dataset& data,
                                        const std::vector<int>& indices, double threshold = 0.5,
                                        MetricAggregation aggregation = MetricAggregation::per_image) {
    if (indices.empty()) throw InvalidInput("evaluate: no samples");
    std::vector<SegMetrics> per_image;
    per_image.reserve(indices.size());
    for (int idx : indices) {
        const Sample& s = data[static_cast<std::size_t>(idx)];
        if (!s.has_mask) throw InvalidInput("evaluate: sample " + s.id + " has no mask");
        const auto prob = segment(s.image, weights);
        per_image.push_back(compute_metrics(binarize(prob, threshold), s.mask));
    }
    return aggregate_metrics(per_image, aggregation);
}

/// Supervised fine-tuning with optional encoder transfer from a pretrained
/// autoencoder. Default schedule is warmup-cosine; the returned weights are
/// the best-on-val snapshot.
inline FinetuneResult finetune(const Dataset& data, const std::vector<int>& labeled,
                               const std::vector<int>& val, const ModelWeights<float>* pretrained,
                               const FinetuneOptions& opts) {
    opts.net.validate();
    opts.train.validate();
    if (labeled.empty()) throw InvalidInput("finetune: no labeled samples");
    if (val.empty()) throw InvalidInput("finetune: no validation samples");
    for (int idx : labeled)
        if (!data[static_cast<std::size_t>(idx)].has_mask)
            throw InvalidInput("finetune: labeled sample without mask");

    UNet<float> net(opts.net);
    FinetuneResult result;
    ModelWeights<float> weights = net.init(derive_seed(opts.train.seed, {0x66696e65}));
    if (pretrained) result.transferred_tensors = transfer_encoder(*pretrained, weights);

    Adam<float> optimizer(opts.train);
    const int workers = std::max(1, opts.workers);
    std::vector<UNet<float>::Cache> caches(static_cast<std::size_t>(workers));
    std::vector<int> order(labeled);
    std::vector<ModelWeights<float>> image_grads;

    result.weights = weights;
    result.best_val_dsc = -1.0;

    for (int epoch = 1; epoch <= opts.train.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(opts.train.seed, {0x66747368, static_cast<std::uint64_t>(epoch)}));
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;

        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opts.train.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(opts.train.batch_size));
            const int batch = static_cast<int>(stop - start);
            if (image_grads.size() < static_cast<std::size_t>(batch))
                image_grads.resize(static_cast<std::size_t>(batch), net.zero_like(weights));

            std::vector<double> batch_losses(static_cast<std::size_t>(batch), 0.0);
            std::atomic<int> next_worker{0};
            parallel_for(batch, workers, [&](int b) {
                thread_local int slot = -1;
                if (slot < 0) slot = next_worker.fetch_add(1) % workers;
                const Sample& sample = data[static_cast<std::size_t>(order[start + static_cast<std::size_t>(b)])];
                UNet<float>::Cache& cache = caches[static_cast<std::size_t>(slot)];
                const auto logits = net.forward(sample.image, weights, &cache);
                AVec<float> dlogits;
                const auto loss = segmentation_loss(logits.data, sample.mask.data, &dlogits);
                batch_losses[static_cast<std::size_t>(b)] = loss.total;
                auto& grads = image_grads[static_cast<std::size_t>(b)];
                for (auto& t : grads.tensors) std::fill(t.data.begin(), t.data.end(), 0.0f);
                net.backward(weights, cache, dlogits, grads);
            });

            ModelWeights<float>& total = image_grads[0];
            for (int b = 1; b < batch; ++b)
                for (std::size_t t = 0; t < total.tensors.size(); ++t) {
                    const auto& src = image_grads[static_cast<std::size_t>(b)].tensors[t].data;
                    auto& dst = total.tensors[t].data;
                    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
                }
            const float inv_batch = 1.0f / static_cast<float>(batch);
            for (auto& t : total.tensors)
                for (auto& v : t.data) v *= inv_batch;

            double batch_loss = 0.0;
            for (double l : batch_losses) batch_loss += l;
            if (!std::isfinite(batch_loss))
                throw TrainingError("finetune: non-finite loss at epoch " + std::to_string(epoch));
            epoch_loss += batch_loss;
            optimizer.step(weights, total, lr_at_epoch(epoch - 1, opts.train));
        }

        const SegMetrics val_metrics = evaluate_segmentation(weights, data, val, opts.threshold);
        MetricsRow row;
        row.epoch = epoch;
        row.phase = "finetune";
        row.loss = epoch_loss / static_cast<double>(order.size());
        row.dsc = val_metrics.dsc;
        row.ppv = val_metrics.ppv;
        row.sen = val_metrics.sen;
        result.curve.push_back(row);

        if (!opts.select_best_on_val || val_metrics.dsc > result.best_val_dsc) {
            result.best_val_dsc = val_metrics.dsc;
            result.best_epoch = epoch;
            result.weights = weights;
        }
    }
    if (opts.train.epochs == 0) result.weights = weights;
    return result;
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

struct AblationArmSpec {
    std::string name;
    SelectionMode selection;
    ScheduleParams schedule;
};

/// The four arms compared in the ablation; the published BUSI 5% DSC values
/// are carried along as a reference column for orientation.
inline std::vector<AblationArmSpec> ablation_arms(const ScheduleParams& adaptive, double fixed_ratio = 0.75) {
    return {
        {"base", SelectionMode::random, ScheduleParams::fixed(fixed_ratio)},
        {"base+AMS", SelectionMode::random, adaptive},
        {"base+MPS", SelectionMode::mps, ScheduleParams::fixed(fixed_ratio)},
        {"base+AMS+MPS", SelectionMode::mps, adaptive},
    };
}

inline double busi5_reference_dsc(const std::string& arm) {
    if (arm == "base") return 0.4584;
    if (arm == "base+AMS") return 0.4629;
    if (arm == "base+MPS") return 0.4732;
    if (arm == "base+AMS+MPS") return 0.5002;
    return 0.0;
}

struct AblationArmResult {
    std::string arm;
    std::vector<std::uint64_t> seeds;
    std::vector<SegMetrics> per_seed;
    SegMetrics mean;
    SegMetrics stddev;
    std::string error;  // non-empty when the arm failed
};

struct AblationOptions {
    PretrainOptions pretrain;   // schedule/selection overridden per arm
    FinetuneOptions finetune;
    SplitSpec split;
    double fixed_ratio = 0.75;
    std::string out_dir;        // when set, per-run metric CSVs are written here
    std::uint64_t config_hash = 0;
};

struct AblationReport {
    std::vector<AblationArmResult> arms;
    std::vector<PretrainStats> run_stats;

    std::string table() const;
    void to_csv(CsvWriter& csv) const;
};

inline AblationReport ablate(const Dataset& data, const AblationOptions& opts,
                             const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw InvalidInput("ablate: need at least one seed");
    AblationReport report;
    const auto arms = ablation_arms(opts.pretrain.schedule, opts.fixed_ratio);
    for (const auto& arm : arms) {
        AblationArmResult result;
        result.arm = arm.name;
        try {
            for (const std::uint64_t seed : seeds) {
                SplitSpec split = opts.split;
                split.seed = derive_seed(seed, {0x73706c74});
                const SplitResult parts = split_dataset(static_cast<int>(data.size()), split);

                PretrainOptions po = opts.pretrain;
                po.selection = arm.selection;
                po.schedule = arm.schedule;
                po.train.seed = seed;
                auto pre = pretrain(data, parts.all_train(), po);

                FinetuneOptions fo = opts.finetune;
                fo.train.seed = seed;
                auto fine = finetune(data, parts.labeled_train, parts.val, &pre.weights, fo);

                const SegMetrics test = evaluate_segmentation(fine.weights, data, parts.test, fo.threshold);
                result.seeds.push_back(seed);
                result.per_seed.push_back(test);
                report.run_stats.push_back(std::move(pre.stats));

                if (!opts.out_dir.empty()) {
                    std::vector<MetricsRow> rows = pre.curve;
                    rows.insert(rows.end(), fine.curve.begin(), fine.curve.end());
                    std::string arm_slug = arm.name;
                    std::replace(arm_slug.begin(), arm_slug.end(), '+', '_');
                    write_metrics_csv(opts.out_dir + "/run_" + arm_slug + "_seed" + std::to_string(seed) + ".csv",
                                      rows, opts.config_hash);
                }
            }
        } catch (const std::exception& e) {
            result.error = e.what();
        }
        if (!result.per_seed.empty()) {
            auto accumulate = [&](auto select) {
                double mean = 0.0;
                for (const auto& m : result.per_seed) mean += select(m);
                mean /= static_cast<double>(result.per_seed.size());
                double var = 0.0;
                for (const auto& m : result.per_seed) var += (select(m) - mean) * (select(m) - mean);
                var = result.per_seed.size() > 1 ? var / static_cast<double>(result.per_seed.size() - 1) : 0.0;
                return std::pair{mean, std::sqrt(var)};
            };
            std::tie(result.mean.dsc, result.stddev.dsc) = accumulate([](const SegMetrics& m) { return m.dsc; });
            std::tie(result.mean.ppv, result.stddev.ppv) = accumulate([](const SegMetrics& m) { return m.ppv; });
            std::tie(result.mean.sen, result.stddev.sen) = accumulate([](const SegMetrics& m) { return m.sen; });
        }
        report.arms.push_back(std::move(result));
    }
    return report;
}

inline void AblationReport::to_csv(CsvWriter& csv) const {
    for (const auto& arm : arms) {
        for (std::size_t i = 0; i < arm.per_seed.size(); ++i) {
            const auto& m = arm.per_seed[i];
            csv.row({arm.arm, std::to_string(arm.seeds[i]), format_double(m.dsc), format_double(m.ppv),
                     format_double(m.sen), format_double(busi5_reference_dsc(arm.arm))});
        }
        if (!arm.per_seed.empty()) {
            csv.row({arm.arm, "mean", format_double(arm.mean.dsc), format_double(arm.mean.ppv),
                     format_double(arm.mean.sen), format_double(busi5_reference_dsc(arm.arm))});
            csv.row({arm.arm, "std", format_double(arm.stddev.dsc), format_double(arm.stddev.ppv),
                     format_double(arm.stddev.sen), format_double(busi5_reference_dsc(arm.arm))});
        }
        if (!arm.error.empty()) csv.row({arm.arm, "error", "", "", "", ""});
    }
}

inline std::vector<std::string> ablation_csv_header() {
    return {"arm", "seed", "dsc", "ppv", "sen", "busi5_reference_dsc"};
}

inline std::string AblationReport::table() const {
    char line[160];
    std::string out;
    std::snprintf(line, sizeof(line), "%-14s %-22s %-22s %-22s %s\n", "arm", "dsc (mean+/-std)",
                  "ppv (mean+/-std)", "sen (mean+/-std)", "busi5 ref dsc");
    out += line;
    for (const auto& arm : arms) {
        if (!arm.error.empty()) {
            std::snprintf(line, sizeof(line), "%-14s FAILED: %s\n", arm.arm.c_str(), arm.error.c_str());
            out += line;
            continue;
        }
        std::snprintf(line, sizeof(line), "%-14s %.4f +/- %.4f      %.4f +/- %.4f      %.4f +/- %.4f      %.4f\n",
                      arm.arm.c_str(), arm.mean.dsc, arm.stddev.dsc, arm.mean.ppv, arm.stddev.ppv, arm.mean.sen,
                      arm.stddev.sen, busi5_reference_dsc(arm.arm));
        out += line;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Schedule sweep
// ---------------------------------------------------------------------------

struct SweepPoint {
    int pretrain_epochs = 0;
    double mean_test_dsc = 0.0;
    std::vector<double> per_seed_dsc;
};

/// Fine-tunes from the checkpoints of a single pretraining run per seed,
/// one run covering max(epochs_list) epochs with snapshots at each listed
/// epoch.
inline std::vector<SweepPoint> schedule_sweep(const Dataset& data, const std::vector<int>& epochs_list,
                                              const AblationOptions& opts,
                                              const std::vector<std::uint64_t>& seeds) {
    if (epochs_list.empty()) throw InvalidInput("sweep: need at least one epoch count");
    if (!std::is_sorted(epochs_list.begin(), epochs_list.end()))
        throw InvalidInput("sweep: epochs list must be ascending");
    if (seeds.empty()) throw InvalidInput("sweep: need at least one seed");

    std::vector<SweepPoint> points(epochs_list.size());
    for (std::size_t i = 0; i < epochs_list.size(); ++i) points[i].pretrain_epochs = epochs_list[i];

    for (const std::uint64_t seed : seeds) {
        SplitSpec split = opts.split;
        split.seed = derive_seed(seed, {0x73706c74});
        const SplitResult parts = split_dataset(static_cast<int>(data.size()), split);

        PretrainOptions po = opts.pretrain;
        po.train.seed = seed;
        po.train.epochs = epochs_list.back();
        po.snapshot_epochs.assign(epochs_list.begin(), epochs_list.end());
        const auto pre = pretrain(data, parts.all_train(), po);

        for (std::size_t i = 0; i < epochs_list.size(); ++i) {
            const ModelWeights<float>* snapshot = nullptr;
            for (const auto& [epoch, w] : pre.snapshots)
                if (epoch == epochs_list[i]) snapshot = &w;
            if (!snapshot) throw TrainingError("sweep: missing snapshot for epoch " + std::to_string(epochs_list[i]));
            FinetuneOptions fo = opts.finetune;
            fo.train.seed = seed;
            const auto fine = finetune(data, parts.labeled_train, parts.val, snapshot, fo);
            const SegMetrics test = evaluate_segmentation(fine.weights, data, parts.test, fo.threshold);
            points[i].per_seed_dsc.push_back(test.dsc);
        }
    }
    for (auto& p : points) {
        for (double d : p.per_seed_dsc) p.mean_test_dsc += d;
        p.mean_test_dsc /= static_cast<double>(p.per_seed_dsc.size());
    }
    return points;
}

}  // namespace mpsams
