#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mpsams/clustering.hpp"
#include "mpsams/data.hpp"
#include "mpsams/errors.hpp"
#include "mpsams/model.hpp"
#include "mpsams/optim.hpp"
#include "mpsams/pipeline.hpp"
#include "mpsams/rng.hpp"
#include "mpsams/schedule.hpp"

namespace mpsams {

using nlohmann::json;

/// Everything a run needs, resolved from defaults <- config file <- --set
/// overrides. Unknown keys anywhere are rejected. The canonical JSON dump
/// hashes into every CSV the run writes.
struct ExperimentConfig {
    std::uint64_t seed = 42;
    int workers = 1;
    int patch_size = 8;

    std::string selection_mode = "mps";      // mps | random
    std::string cluster_method = "kmeans";
    bool cache_plans = false;

    ScheduleParams schedule;
    NetConfig net;
    TrainConfig pretrain_cfg;
    TrainConfig finetune_cfg;
    SplitSpec split;
    SyntheticConfig synthetic;

    std::string mask_fill_mode = "constant";  // constant | token
    double mask_fill_value = 0.0;

    std::string data_dir;
    int data_count = 300;

    bool select_best_on_val = true;
    double threshold = 0.5;
    int checkpoint_every = 0;

    std::vector<std::uint64_t> ablate_seeds = {1, 2, 3};
    std::vector<int> sweep_epochs = {10, 25, 50, 100};
    std::vector<std::uint64_t> sweep_seeds = {1};

    std::vector<int> bench_patch_counts = {64, 256, 1024, 4096};
    std::vector<std::string> bench_methods = {"kmeans", "hierarchical", "tsne_kmeans", "dbscan"};
    int bench_trials = 3;
    double bench_budget_seconds = 60.0;

    int entropy_models = 20;
    int entropy_outcomes = 8;
    std::string entropy_sampler = "uniform";  // uniform | mps-induced
    int entropy_mc_samples = 10000;

    json resolved;  // the config snapshot after all overrides

    std::uint64_t hash() const { return fnv1a64(resolved.dump()); }
};

namespace detail {

inline json default_config_json() {
    return json{
        {"seed", 42},
        {"workers", 1},
        {"patch_size", 8},
        {"selection", {{"mode", "mps"}, {"method", "kmeans"}, {"cache_plans", false}}},
        {"schedule",
         {{"mode", "adaptive"}, {"sigma0", 0.25}, {"tau", 12.0}, {"sigma_max", 0.95}, {"fixed_ratio", 0.75}}},
        {"net",
         {{"in_channels", 1},
          {"base_channels", 16},
          {"depth", 3},
          {"out_channels", 1},
          {"nonlinearity", "relu"},
          {"normalization", "none"}}},
        {"pretrain",
         {{"learning_rate", 2e-4},
          {"beta1", 0.9},
          {"beta2", 0.999},
          {"epsilon", 1e-8},
          {"weight_decay", 1e-4},
          {"batch_size", 16},
          {"epochs", 100},
          {"lr_schedule", "constant"},
          {"warmup_epochs", 0},
          {"checkpoint_every", 0}}},
        {"finetune",
         {{"learning_rate", 2e-4},
          {"beta1", 0.9},
          {"beta2", 0.999},
          {"epsilon", 1e-8},
          {"weight_decay", 1e-4},
          {"batch_size", 8},
          {"epochs", 30},
          {"lr_schedule", "warmup-cosine"},
          {"warmup_epochs", 0},
          {"select_best_on_val", true},
          {"threshold", 0.5}}},
        {"split", {{"train", 0.8}, {"val", 0.1}, {"test", 0.1}, {"labeled_fraction", 0.05}}},
        {"synthetic", SyntheticConfig{}.to_json()},
        {"mask_fill", {{"mode", "constant"}, {"value", 0.0}}},
        {"data", {{"dir", ""}, {"count", 300}}},
        {"ablate", {{"seeds", {1, 2, 3}}}},
        {"sweep", {{"epochs", {10, 25, 50, 100}}, {"seeds", {1}}}},
        {"bench",
         {{"patch_counts", {64, 256, 1024, 4096}},
          {"methods", {"kmeans", "hierarchical", "tsne_kmeans", "dbscan"}},
          {"trials", 3},
          {"budget_seconds", 60.0}}},
        {"entropy", {{"models", 20}, {"outcomes", 8}, {"sampler", "uniform"}, {"mc_samples", 10000}}},
    };
}

inline void check_known_keys(const json& value, const json& schema, const std::string& path) {
    if (!value.is_object()) return;
    if (!schema.is_object())
        throw ConfigError("config: '" + path + "' should not be an object");
    for (const auto& [key, sub] : value.items()) {
        if (!schema.contains(key))
            throw ConfigError("config: unknown key '" + (path.empty() ? key : path + "." + key) + "'");
        check_known_keys(sub, schema.at(key), path.empty() ? key : path + "." + key);
    }
}

inline void merge_into(json& base, const json& overlay, const std::string& path) {
    for (const auto& [key, value] : overlay.items()) {
        const std::string sub = path.empty() ? key : path + "." + key;
        if (value.is_object() && base.contains(key) && base.at(key).is_object()) {
            merge_into(base.at(key), value, sub);
        } else {
            base[key] = value;
        }
    }
}

inline json parse_scalar(const std::string& text) {
    const json parsed = json::parse(text, nullptr, false);
    if (!parsed.is_discarded()) return parsed;
    return json(text);  // bare strings pass through
}

template <class T>
T get_checked(const json& js, const std::string& path) {
    const json* cur = &js;
    std::size_t begin = 0;
    while (true) {
        const std::size_t dot = path.find('.', begin);
        const std::string key = path.substr(begin, dot == std::string::npos ? dot : dot - begin);
        cur = &cur->at(key);
        if (dot == std::string::npos) break;
        begin = dot + 1;
    }
    try {
        return cur->get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: bad type for '" + path + "'");
    }
}

inline TrainConfig train_config_from(const json& js, const std::string& section, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.learning_rate = get_checked<double>(js, section + ".learning_rate");
    cfg.beta1 = get_checked<double>(js, section + ".beta1");
    cfg.beta2 = get_checked<double>(js, section + ".beta2");
    cfg.epsilon = get_checked<double>(js, section + ".epsilon");
    cfg.weight_decay = get_checked<double>(js, section + ".weight_decay");
    cfg.batch_size = get_checked<int>(js, section + ".batch_size");
    cfg.epochs = get_checked<int>(js, section + ".epochs");
    cfg.lr_schedule = get_checked<std::string>(js, section + ".lr_schedule");
    cfg.warmup_epochs = get_checked<int>(js, section + ".warmup_epochs");
    cfg.seed = seed;
    return cfg;
}

}  // namespace detail

/// Loads a config: defaults, then the optional JSON file, then dotted-path
/// overrides ("a.b.c=value"). Throws ConfigError on unknown keys or type
/// mismatches; every consumer struct re-validates its own ranges.
inline ExperimentConfig load_experiment_config(const std::string& config_path,
                                               const std::vector<std::string>& overrides) {
    json resolved = detail::default_config_json();
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw ConfigError("config: cannot open " + config_path);
        json from_file;
        try {
            in >> from_file;
        } catch (const json::exception& e) {
            throw ConfigError("config: malformed JSON in " + config_path + ": " + e.what());
        }
        detail::check_known_keys(from_file, resolved, "");
        detail::merge_into(resolved, from_file, "");
    }
    for (const auto& item : overrides) {
        const std::size_t eq = item.find('=');
        if (eq == std::string::npos) throw ConfigError("config: override '" + item + "' is not key=value");
        const std::string path = item.substr(0, eq);
        json patch = detail::parse_scalar(item.substr(eq + 1));
        // build the nested object for the dotted path
        std::vector<std::string> parts;
        std::size_t begin = 0;
        while (true) {
            const std::size_t dot = path.find('.', begin);
            parts.push_back(path.substr(begin, dot == std::string::npos ? dot : dot - begin));
            if (dot == std::string::npos) break;
            begin = dot + 1;
        }
        for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
        detail::check_known_keys(patch, detail::default_config_json(), "");
        detail::merge_into(resolved, patch, "");
    }

    ExperimentConfig cfg;
    cfg.resolved = resolved;
    cfg.seed = detail::get_checked<std::uint64_t>(resolved, "seed");
    cfg.workers = detail::get_checked<int>(resolved, "workers");
    cfg.patch_size = detail::get_checked<int>(resolved, "patch_size");

    cfg.selection_mode = detail::get_checked<std::string>(resolved, "selection.mode");
    if (cfg.selection_mode != "mps" && cfg.selection_mode != "random")
        throw ConfigError("config: selection.mode must be 'mps' or 'random'");
    cfg.cluster_method = detail::get_checked<std::string>(resolved, "selection.method");
    cluster_method_from_string(cfg.cluster_method);  // validates
    cfg.cache_plans = detail::get_checked<bool>(resolved, "selection.cache_plans");

    const std::string sched_mode = detail::get_checked<std::string>(resolved, "schedule.mode");
    if (sched_mode != "adaptive" && sched_mode != "fixed")
        throw ConfigError("config: schedule.mode must be 'adaptive' or 'fixed'");
    cfg.schedule.mode = sched_mode == "adaptive" ? ScheduleParams::Mode::adaptive : ScheduleParams::Mode::fixed;
    cfg.schedule.sigma0 = detail::get_checked<double>(resolved, "schedule.sigma0");
    cfg.schedule.tau = detail::get_checked<double>(resolved, "schedule.tau");
    cfg.schedule.sigma_max = detail::get_checked<double>(resolved, "schedule.sigma_max");
    cfg.schedule.fixed_ratio = detail::get_checked<double>(resolved, "schedule.fixed_ratio");

    cfg.net.in_channels = detail::get_checked<int>(resolved, "net.in_channels");
    cfg.net.base_channels = detail::get_checked<int>(resolved, "net.base_channels");
    cfg.net.depth = detail::get_checked<int>(resolved, "net.depth");
    cfg.net.out_channels = detail::get_checked<int>(resolved, "net.out_channels");
    cfg.net.nonlinearity = detail::get_checked<std::string>(resolved, "net.nonlinearity");
    cfg.net.normalization = detail::get_checked<std::string>(resolved, "net.normalization");
    cfg.net.seed = cfg.seed;

    cfg.pretrain_cfg = detail::train_config_from(resolved, "pretrain", cfg.seed);
    cfg.finetune_cfg = detail::train_config_from(resolved, "finetune", cfg.seed);
    cfg.checkpoint_every = detail::get_checked<int>(resolved, "pretrain.checkpoint_every");
    cfg.select_best_on_val = detail::get_checked<bool>(resolved, "finetune.select_best_on_val");
    cfg.threshold = detail::get_checked<double>(resolved, "finetune.threshold");

    cfg.split.train_fraction = detail::get_checked<double>(resolved, "split.train");
    cfg.split.val_fraction = detail::get_checked<double>(resolved, "split.val");
    cfg.split.test_fraction = detail::get_checked<double>(resolved, "split.test");
    cfg.split.labeled_fraction = detail::get_checked<double>(resolved, "split.labeled_fraction");
    cfg.split.seed = cfg.seed;

    cfg.synthetic.image_size = detail::get_checked<int>(resolved, "synthetic.image_size");
    cfg.synthetic.lesion_count_min = detail::get_checked<int>(resolved, "synthetic.lesion_count_min");
    cfg.synthetic.lesion_count_max = detail::get_checked<int>(resolved, "synthetic.lesion_count_max");
    cfg.synthetic.lesion_radius_min = detail::get_checked<int>(resolved, "synthetic.lesion_radius_min");
    cfg.synthetic.lesion_radius_max = detail::get_checked<int>(resolved, "synthetic.lesion_radius_max");
    cfg.synthetic.lesion_mean = detail::get_checked<double>(resolved, "synthetic.lesion_mean");
    cfg.synthetic.lesion_spread = detail::get_checked<double>(resolved, "synthetic.lesion_spread");
    cfg.synthetic.background_mean = detail::get_checked<double>(resolved, "synthetic.background_mean");
    cfg.synthetic.background_spread = detail::get_checked<double>(resolved, "synthetic.background_spread");
    cfg.synthetic.noise_level = detail::get_checked<double>(resolved, "synthetic.noise_level");
    cfg.synthetic.texture = detail::get_checked<std::string>(resolved, "synthetic.texture");

    cfg.mask_fill_mode = detail::get_checked<std::string>(resolved, "mask_fill.mode");
    if (cfg.mask_fill_mode != "constant" && cfg.mask_fill_mode != "token")
        throw ConfigError("config: mask_fill.mode must be 'constant' or 'token'");
    cfg.mask_fill_value = detail::get_checked<double>(resolved, "mask_fill.value");

    cfg.data_dir = detail::get_checked<std::string>(resolved, "data.dir");
    cfg.data_count = detail::get_checked<int>(resolved, "data.count");

    cfg.ablate_seeds = detail::get_checked<std::vector<std::uint64_t>>(resolved, "ablate.seeds");
    cfg.sweep_epochs = detail::get_checked<std::vector<int>>(resolved, "sweep.epochs");
    cfg.sweep_seeds = detail::get_checked<std::vector<std::uint64_t>>(resolved, "sweep.seeds");

    cfg.bench_patch_counts = detail::get_checked<std::vector<int>>(resolved, "bench.patch_counts");
    cfg.bench_methods = detail::get_checked<std::vector<std::string>>(resolved, "bench.methods");
    for (const auto& m : cfg.bench_methods) cluster_method_from_string(m);
    cfg.bench_trials = detail::get_checked<int>(resolved, "bench.trials");
    cfg.bench_budget_seconds = detail::get_checked<double>(resolved, "bench.budget_seconds");

    cfg.entropy_models = detail::get_checked<int>(resolved, "entropy.models");
    cfg.entropy_outcomes = detail::get_checked<int>(resolved, "entropy.outcomes");
    cfg.entropy_sampler = detail::get_checked<std::string>(resolved, "entropy.sampler");
    if (cfg.entropy_sampler != "uniform" && cfg.entropy_sampler != "mps-induced")
        throw ConfigError("config: entropy.sampler must be 'uniform' or 'mps-induced'");
    cfg.entropy_mc_samples = detail::get_checked<int>(resolved, "entropy.mc_samples");

    return cfg;
}

inline PretrainOptions pretrain_options_from(const ExperimentConfig& cfg) {
    PretrainOptions opts;
    opts.net = cfg.net;
    opts.train = cfg.pretrain_cfg;
    opts.schedule = cfg.schedule;
    opts.selection = cfg.selection_mode == "mps" ? SelectionMode::mps : SelectionMode::random;
    opts.cluster_method = cluster_method_from_string(cfg.cluster_method);
    opts.patch_size = cfg.patch_size;
    opts.fill = cfg.mask_fill_mode == "token" ? MaskFill::token(cfg.mask_fill_value)
                                              : MaskFill::constant(cfg.mask_fill_value);
    opts.cache_plans = cfg.cache_plans;
    opts.workers = cfg.workers;
    return opts;
}

inline FinetuneOptions finetune_options_from(const ExperimentConfig& cfg) {
    FinetuneOptions opts;
    opts.net = cfg.net;
    opts.train = cfg.finetune_cfg;
    opts.select_best_on_val = cfg.select_best_on_val;
    opts.threshold = cfg.threshold;
    opts.workers = cfg.workers;
    return opts;
}

}  // namespace mpsams
