// mpsams: synthetic-corpus masked-pretraining workbench.
//
// Subcommands bind a JSON experiment config to the pipeline: data
// generation, masked pretraining with lesion-first patch selection,
// fine-tuning with encoder transfer, the four-arm ablation, the clustering
// benchmark, entropy diagnostics, the pretrain-length sweep, and SVG plots.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mpsams/config.hpp"
#include "mpsams/csv.hpp"
#include "mpsams/data.hpp"
#include "mpsams/entropy_bridge.hpp"
#include "mpsams/pipeline.hpp"
#include "mpsams/svg.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    std::int64_t seed = -1;
    int workers = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON experiment config file");
    cmd->add_option("--set", args.overrides, "dotted-path override, e.g. --set schedule.tau=10");
    cmd->add_option("--out", args.out_dir, "output directory (default: $MPSAMS_OUT or ./out)");
    cmd->add_option("--seed", args.seed, "root seed override");
    cmd->add_option("--workers", args.workers, "parallel data workers override");
}

mpsams::ExperimentConfig resolve(const CommonArgs& args) {
    auto overrides = args.overrides;
    if (args.seed >= 0) overrides.push_back("seed=" + std::to_string(args.seed));
    if (args.workers > 0) overrides.push_back("workers=" + std::to_string(args.workers));
    return mpsams::load_experiment_config(args.config_path, overrides);
}

std::string out_dir_of(const CommonArgs& args) {
    std::string dir = args.out_dir;
    if (dir.empty()) {
        const char* env = std::getenv("MPSAMS_OUT");
        dir = env && *env ? env : "out";
    }
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw mpsams::IoError("cannot create output directory " + dir);
    return dir;
}

void write_config_snapshot(const mpsams::ExperimentConfig& cfg, const std::string& out_dir) {
    std::ofstream out(out_dir + "/config_resolved.json", std::ios::binary | std::ios::trunc);
    if (!out) throw mpsams::IoError("cannot write config snapshot in " + out_dir);
    out << cfg.resolved.dump(2) << "\n";
}

/// Loads the configured dataset: from data.dir when set, otherwise a
/// deterministic in-memory corpus of data.count synthetic samples.
mpsams::Dataset load_corpus(const mpsams::ExperimentConfig& cfg) {
    if (!cfg.data_dir.empty()) {
        const auto manifest = mpsams::load_manifest(cfg.data_dir + "/manifest.json");
        return mpsams::load_dataset(manifest, cfg.patch_size);
    }
    mpsams::Dataset data;
    data.reserve(static_cast<std::size_t>(cfg.data_count));
    for (int i = 0; i < cfg.data_count; ++i) {
        auto [img, mask] = mpsams::generate_sample(
            cfg.synthetic, mpsams::derive_seed(cfg.seed, {0x64617461, static_cast<std::uint64_t>(i)}));
        mpsams::Sample s;
        char id[16];
        std::snprintf(id, sizeof(id), "s%05d", i);
        s.id = id;
        s.image = img.cast<float>();
        s.mask = std::move(mask);
        s.has_mask = true;
        data.push_back(std::move(s));
    }
    return data;
}

std::vector<int> checkpoint_epochs(int every, int total) {
    std::vector<int> out;
    if (every > 0)
        for (int e = every; e <= total; e += every) out.push_back(e);
    return out;
}

int cmd_gen_data(const CommonArgs& args) {
    const auto cfg = resolve(args);
    const auto out_dir = out_dir_of(args);
    write_config_snapshot(cfg, out_dir);
    const auto manifest = mpsams::generate_dataset(cfg.synthetic, cfg.data_count, cfg.seed, out_dir);
    std::printf("wrote %zu samples and manifest.json to %s\n", manifest.samples.size(), out_dir.c_str());
    return 0;
}

int cmd_pretrain(const CommonArgs& args) {
    const auto cfg = resolve(args);
    const auto out_dir = out_dir_of(args);
    write_config_snapshot(cfg, out_dir);
    const auto data = load_corpus(cfg);
    const auto parts = mpsams::split_dataset(static_cast<int>(data.size()), cfg.split);

    auto opts = mpsams::pretrain_options_from(cfg);
    opts.checkpoint_dir = out_dir;
    opts.snapshot_epochs = checkpoint_epochs(cfg.checkpoint_every, opts.train.epochs);
    const auto result = mpsams::pretrain(data, parts.all_train(), opts);
    mpsams::write_metrics_csv(out_dir + "/pretrain_metrics.csv", result.curve, cfg.hash());
    std::printf("pretrained %d epochs on %zu images; final loss %s; checkpoint %s/pretrain_final.mpsw\n",
                opts.train.epochs, parts.all_train().size(),
                result.curve.empty() ? "-" : mpsams::format_double(*result.curve.back().loss).c_str(),
                out_dir.c_str());
    return 0;
}

int cmd_finetune(const CommonArgs& args, const std::string& checkpoint) {
    const auto cfg = resolve(args);
    const auto out_dir = out_dir_of(args);
    write_config_snapshot(cfg, out_dir);
    const auto data = load_corpus(cfg);
    const auto parts = mpsams::split_dataset(static_cast<int>(data.size()), cfg.split);

    mpsams::ModelWeights<float> pretrained;
    const bool have_checkpoint = !checkpoint.empty();
    if (have_checkpoint) pretrained = mpsams::load_checkpoint(checkpoint);

    const auto opts = mpsams::finetune_options_from(cfg);
    const auto result =
        mpsams::finetune(data, parts.labeled_train, parts.val, have_checkpoint ? &pretrained : nullptr, opts);
    mpsams::write_metrics_csv(out_dir + "/finetune_metrics.csv", result.curve, cfg.hash());
    mpsams::save_checkpoint(out_dir + "/finetune_best.mpsw", result.weights);

    const auto test = mpsams::evaluate_segmentation(result.weights, data, parts.test, opts.threshold);
    mpsams::CsvWriter csv({"split", "dsc", "ppv", "sen"}, cfg.hash());
    csv.row({"test", mpsams::format_double(test.dsc), mpsams::format_double(test.ppv),
             mpsams::format_double(test.sen)});
    csv.save(out_dir + "/test_metrics.csv");
    std::printf("finetuned %d epochs (%s init); best val dsc %s at epoch %d; test dsc %s\n",
                opts.train.epochs, have_checkpoint ? "pretrained" : "random",
                mpsams::format_double(result.best_val_dsc).c_str(), result.best_epoch,
                mpsams::format_double(test.dsc).c_str());
    return 0;
}

int cmd_ablate(const CommonArgs& args) {
    const auto cfg = resolve(args);
    const auto out_dir = out_dir_of(args);
    write_config_snapshot(cfg, out_dir);
    const auto data = load_corpus(cfg);

    mpsams::AblationOptions opts;
    opts.pretrain = mpsams::pretrain_options_from(cfg);
    opts.finetune = mpsams::finetune_options_from(cfg);
    opts.split = cfg.split;
    opts.out_dir = out_dir;
    opts.config_hash = cfg.hash();
    const auto report = mpsams::ablate(data, opts, cfg.ablate_seeds);

    mpsams::CsvWriter csv(mpsams::ablation_csv_header(), cfg.hash());
    report.to_csv(csv);
    csv.save(out_dir + "/ablation_report.csv");
    const std::string table = report.table();
    std::ofstream table_out(out_dir + "/ablation_table.txt", std::ios::binary | std::ios::trunc);
    table_out << table;
    std::fputs(table.c_str(), stdout);
    for (const auto& arm : report.arms)
        if (!arm.error.empty()) {
            std::fprintf(stderr, "error: training: arm %s failed: %s\n", arm.arm.c_str(), arm.error.c_str());
            return 4;
        }
    return 0;
}

int cmd_cluster_bench(const CommonArgs& args) {
    const auto cfg = resolve(args);
    const auto out_dir = out_dir_of(args);
    write_config_snapshot(cfg, out_dir);
    std::vector<mpsams::ClusterMethod> methods;
    for (const auto& m : cfg.bench_methods) methods.push_back(mpsams::cluster_method_from_string(m));
    const auto report = mpsams::cluster_bench(cfg.bench_patch_counts, methods, cfg.bench_trials, cfg.seed,
                                              cfg.bench_budget_seconds);

    mpsams::CsvWriter csv({"method", "patch_count", "trial", "wall_time_seconds", "lesion_recall"}, cfg.hash());
    for (const auto& cell : report.cells) {
        csv.row({cell.method, std::to_string(cell.patch_count), std::to_string(cell.trial),
                 cell.timed_out && cell.wall_time_seconds == 0.0 ? "" : mpsams::format_double(cell.wall_time_seconds),
                 cell.timed_out ? "" : mpsams::format_double(cell.lesion_recall)});
    }
    csv.save(out_dir + "/cluster_bench.csv");

    mpsams::CsvWriter slopes({"method", "loglog_slope", "defined"}, cfg.hash());
    for (const auto& [method, slope] : report.slopes) {
        slopes.row({method, slope.defined ? mpsams::format_double(slope.value) : "", slope.defined ? "1" : "0"});
        if (slope.defined)
            std::printf("%s: log-log runtime slope %.3f\n", method.c_str(), slope.value);
        else
            std::printf("%s: slope undefined (need at least two completed sizes)\n", method.c_str());
    }
    slopes.save(out_dir + "/cluster_bench_slopes.csv");
    return 0;
}

int cmd_entropy_check(const CommonArgs& args) {
    const auto cfg = resolve(args);
    const auto out_dir = out_dir_of(args);
    write_config_snapshot(cfg, out_dir);

    std::vector<mpsams::entropy::DiscreteJointModel> models;
    std::vector<std::size_t> mps_outcomes;
    if (cfg.entropy_sampler == "mps-induced") {
        // toy image models: outcomes are the mask-subset choices
        mpsams::SyntheticConfig toy;
        toy.image_size = 16;
        toy.lesion_radius_min = 3;
        toy.lesion_radius_max = 4;
        toy.noise_level = 0.02;
        for (int i = 0; i < cfg.entropy_models; ++i) {
            const auto [img, mask] =
                mpsams::generate_sample(toy, mpsams::derive_seed(cfg.seed, {0x746f79, static_cast<std::uint64_t>(i)}));
            const auto outcome_model = mpsams::entropy::make_mask_outcome_model(
                img, mask, 4, 3, mpsams::derive_seed(cfg.seed, {0x6d7073, static_cast<std::uint64_t>(i)}));
            models.push_back(outcome_model.model);
            mps_outcomes.push_back(outcome_model.mps_outcome);
        }
    } else {
        for (int i = 0; i < cfg.entropy_models; ++i)
            models.push_back(mpsams::entropy::random_model(
                static_cast<std::size_t>(cfg.entropy_outcomes),
                mpsams::derive_seed(cfg.seed, {0x656e74, static_cast<std::uint64_t>(i)})));
        mps_outcomes.assign(models.size(), 0);
    }

    const auto rows = mpsams::entropy::ordering_check(
        models, [&](const mpsams::entropy::DiscreteJointModel& m, std::size_t i) {
            return mpsams::entropy::make_sampler(cfg.entropy_sampler, m, mps_outcomes[i]);
        });

    mpsams::CsvWriter csv({"model_id", "h1", "h2", "h3", "kl", "h2_le_h1", "h3_le_h2"}, cfg.hash());
    int h2_ok = 0;
    for (const auto& r : rows) {
        csv.row({std::to_string(r.model_id), mpsams::format_double(r.h1), mpsams::format_double(r.h2),
                 mpsams::format_double(r.h3), mpsams::format_double(r.kl), r.h2_le_h1 ? "1" : "0",
                 r.h3_le_h2 ? "1" : "0"});
        h2_ok += r.h2_le_h1;
    }
    csv.save(out_dir + "/entropy_check.csv");
    std::printf("h2 <= h1 on %d/%zu models (sampler: %s)\n", h2_ok, rows.size(), cfg.entropy_sampler.c_str());
    return 0;
}

int cmd_sweep(const CommonArgs& args) {
    const auto cfg = resolve(args);
    const auto out_dir = out_dir_of(args);
    write_config_snapshot(cfg, out_dir);
    const auto data = load_corpus(cfg);

    mpsams::AblationOptions opts;
    opts.pretrain = mpsams::pretrain_options_from(cfg);
    opts.finetune = mpsams::finetune_options_from(cfg);
    opts.split = cfg.split;
    const auto points = mpsams::schedule_sweep(data, cfg.sweep_epochs, opts, cfg.sweep_seeds);

    mpsams::CsvWriter csv({"pretrain_epochs", "seed", "test_dsc"}, cfg.hash());
    for (const auto& p : points) {
        for (std::size_t s = 0; s < p.per_seed_dsc.size(); ++s)
            csv.row({std::to_string(p.pretrain_epochs), std::to_string(cfg.sweep_seeds[s]),
                     mpsams::format_double(p.per_seed_dsc[s])});
        csv.row({std::to_string(p.pretrain_epochs), "mean", mpsams::format_double(p.mean_test_dsc)});
    }
    csv.save(out_dir + "/sweep.csv");
    for (const auto& p : points)
        std::printf("pretrain %d epochs -> mean test dsc %s\n", p.pretrain_epochs,
                    mpsams::format_double(p.mean_test_dsc).c_str());
    return 0;
}

int cmd_plot(const std::string& csv_path, const std::string& out_svg, std::string x_col, std::string y_col,
             const std::string& group_col, bool logx, bool logy, std::string title) {
    const auto table = mpsams::read_csv(csv_path);
    if (x_col.empty()) x_col = table.header.at(0);
    if (y_col.empty()) {
        for (const auto& candidate : {"dsc", "loss", "wall_time_seconds", "test_dsc", "mean_test_dsc"})
            if (table.column(candidate) >= 0) {
                y_col = candidate;
                break;
            }
        if (y_col.empty()) y_col = table.header.size() > 1 ? table.header.at(1) : table.header.at(0);
    }
    const int xi = table.column(x_col), yi = table.column(y_col);
    if (xi < 0) throw mpsams::DataError("plot: no column '" + x_col + "' in " + csv_path);
    if (yi < 0) throw mpsams::DataError("plot: no column '" + y_col + "' in " + csv_path);
    const int gi = group_col.empty() ? -1 : table.column(group_col);
    if (!group_col.empty() && gi < 0) throw mpsams::DataError("plot: no column '" + group_col + "'");

    std::map<std::string, mpsams::SvgSeries> series;
    for (const auto& row : table.rows) {
        const std::string& xs = row.at(static_cast<std::size_t>(xi));
        const std::string& ys = row.at(static_cast<std::size_t>(yi));
        if (xs.empty() || ys.empty()) continue;
        char* end = nullptr;
        const double x = std::strtod(xs.c_str(), &end);
        if (end == xs.c_str()) continue;
        const double y = std::strtod(ys.c_str(), &end);
        if (end == ys.c_str()) continue;
        const std::string key = gi >= 0 ? row.at(static_cast<std::size_t>(gi)) : y_col;
        auto& s = series[key];
        s.label = key;
        s.points.emplace_back(x, y);
    }
    if (series.empty()) throw mpsams::DataError("plot: no numeric data for " + x_col + "/" + y_col);
    std::vector<mpsams::SvgSeries> list;
    for (auto& [key, s] : series) list.push_back(std::move(s));
    if (title.empty()) title = y_col + " vs " + x_col;
    mpsams::save_svg(out_svg, mpsams::render_line_chart(std::move(list), title, x_col, y_col, logx, logy));
    std::printf("wrote %s\n", out_svg.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"masked-patch selection + adaptive masking pretraining workbench"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    CommonArgs gen_args, pre_args, fine_args, abl_args, bench_args, ent_args, sweep_args;
    std::string checkpoint;

    add_common(app.add_subcommand("gen-data", "generate a synthetic lesion corpus with masks"), gen_args);
    add_common(app.add_subcommand("pretrain", "masked-autoencoder pretraining"), pre_args);
    auto* fine = app.add_subcommand("finetune", "supervised fine-tuning (optionally from a checkpoint)");
    add_common(fine, fine_args);
    fine->add_option("--checkpoint", checkpoint, "pretrained autoencoder checkpoint (.mpsw)");
    add_common(app.add_subcommand("ablate", "run the four-arm ablation"), abl_args);
    add_common(app.add_subcommand("cluster-bench", "benchmark the clustering methods"), bench_args);
    add_common(app.add_subcommand("entropy-check", "entropy diagnostics on toy models"), ent_args);
    add_common(app.add_subcommand("sweep", "test DSC vs pretraining length"), sweep_args);

    auto* plot = app.add_subcommand("plot", "render a CSV as an SVG line chart");
    std::string plot_csv, plot_out = "plot.svg", plot_x, plot_y, plot_group, plot_title;
    bool plot_logx = false, plot_logy = false;
    plot->add_option("--csv", plot_csv, "input CSV")->required();
    plot->add_option("--out-svg", plot_out, "output SVG path");
    plot->add_option("--x", plot_x, "x column (default: first column)");
    plot->add_option("--y", plot_y, "y column (default: dsc/loss/wall_time_seconds if present)");
    plot->add_option("--group", plot_group, "series column (one polyline per value)");
    plot->add_flag("--logx", plot_logx, "log-scale x axis");
    plot->add_flag("--logy", plot_logy, "log-scale y axis");
    plot->add_option("--title", plot_title, "chart title");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // --help/--version arrive here with exit code 0; real parse errors map to 2
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand("gen-data")) return cmd_gen_data(gen_args);
        if (app.got_subcommand("pretrain")) return cmd_pretrain(pre_args);
        if (app.got_subcommand("finetune")) return cmd_finetune(fine_args, checkpoint);
        if (app.got_subcommand("ablate")) return cmd_ablate(abl_args);
        if (app.got_subcommand("cluster-bench")) return cmd_cluster_bench(bench_args);
        if (app.got_subcommand("entropy-check")) return cmd_entropy_check(ent_args);
        if (app.got_subcommand("sweep")) return cmd_sweep(sweep_args);
        if (app.got_subcommand("plot"))
            return cmd_plot(plot_csv, plot_out, plot_x, plot_y, plot_group, plot_logx, plot_logy, plot_title);
    } catch (const mpsams::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const mpsams::InvalidInput& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const mpsams::DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const mpsams::ClusteringDegenerate& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const mpsams::TrainingError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const mpsams::IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 5;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
