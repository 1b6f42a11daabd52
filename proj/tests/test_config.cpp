#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>

#include "mpsams/config.hpp"
#include "mpsams/svg.hpp"

using namespace mpsams;

namespace {

std::string write_temp_config(const std::string& body) {
    const auto path = std::filesystem::temp_directory_path() / "mpsams_cfg_test.json";
    std::ofstream out(path);
    out << body;
    return path.string();
}

}  // namespace

TEST_CASE("defaults load without a file and hash deterministically") {
    const auto a = load_experiment_config("", {});
    const auto b = load_experiment_config("", {});
    REQUIRE(a.hash() == b.hash());
    REQUIRE(a.seed == 42);
    REQUIRE(a.schedule.sigma0 == 0.25);
    REQUIRE(a.schedule.tau == 12.0);
    REQUIRE(a.net.base_channels == 16);
    REQUIRE(a.pretrain_cfg.learning_rate == 2e-4);
    REQUIRE(a.pretrain_cfg.weight_decay == 1e-4);
    REQUIRE(a.finetune_cfg.lr_schedule == "warmup-cosine");
}

TEST_CASE("config files override defaults") {
    const auto path = write_temp_config(R"({"schedule": {"tau": 9.0}, "net": {"depth": 2}})");
    const auto cfg = load_experiment_config(path, {});
    REQUIRE(cfg.schedule.tau == 9.0);
    REQUIRE(cfg.net.depth == 2);
    REQUIRE(cfg.schedule.sigma0 == 0.25);  // untouched default
}

TEST_CASE("dotted --set overrides beat the file") {
    const auto path = write_temp_config(R"({"schedule": {"tau": 9.0}})");
    const auto cfg = load_experiment_config(path, {"schedule.tau=7.5", "selection.mode=random", "seed=7"});
    REQUIRE(cfg.schedule.tau == 7.5);
    REQUIRE(cfg.selection_mode == "random");
    REQUIRE(cfg.seed == 7);
    REQUIRE(cfg.split.seed == 7);
}

TEST_CASE("unknown keys are rejected with their path") {
    const auto path = write_temp_config(R"({"schedule": {"taus": 9.0}})");
    try {
        load_experiment_config(path, {});
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        REQUIRE(std::string(e.what()).find("schedule.taus") != std::string::npos);
    }
    REQUIRE_THROWS_AS(load_experiment_config("", {"nosuch=1"}), ConfigError);
    REQUIRE_THROWS_AS(load_experiment_config("", {"schedule.bogus=1"}), ConfigError);
}

TEST_CASE("bad values are rejected") {
    REQUIRE_THROWS_AS(load_experiment_config("", {"selection.mode=sideways"}), ConfigError);
    REQUIRE_THROWS_AS(load_experiment_config("", {"schedule.mode=sometimes"}), ConfigError);
    REQUIRE_THROWS_AS(load_experiment_config("", {"selection.method=means"}), InvalidInput);
    REQUIRE_THROWS_AS(load_experiment_config("", {"schedule.tau=\"fast\""}), ConfigError);
    REQUIRE_THROWS_AS(load_experiment_config("", {"entropy.sampler=argmax"}), ConfigError);
    REQUIRE_THROWS_AS(load_experiment_config("", {"mask_fill.mode=checker"}), ConfigError);
}

TEST_CASE("malformed json and missing files raise config errors") {
    const auto path = write_temp_config("{nope");
    REQUIRE_THROWS_AS(load_experiment_config(path, {}), ConfigError);
    REQUIRE_THROWS_AS(load_experiment_config("/no/such/config.json", {}), ConfigError);
}

TEST_CASE("option structs inherit the config values") {
    const auto cfg = load_experiment_config(
        "", {"selection.mode=random", "schedule.mode=fixed", "schedule.fixed_ratio=0.75", "workers=3",
             "mask_fill.mode=token", "mask_fill.value=0.3"});
    const auto po = pretrain_options_from(cfg);
    REQUIRE(po.selection == SelectionMode::random);
    REQUIRE(po.schedule.mode == ScheduleParams::Mode::fixed);
    REQUIRE(po.workers == 3);
    REQUIRE(po.fill.kind == MaskFill::Kind::token);
    REQUIRE(po.fill.value == 0.3);
    const auto fo = finetune_options_from(cfg);
    REQUIRE(fo.train.lr_schedule == "warmup-cosine");
    REQUIRE(fo.threshold == 0.5);
}

TEST_CASE("config hash changes with any override") {
    const auto a = load_experiment_config("", {});
    const auto b = load_experiment_config("", {"schedule.tau=11"});
    REQUIRE(a.hash() != b.hash());
}

TEST_CASE("svg line chart renders polylines, axes, and legend") {
    std::vector<SvgSeries> series(2);
    series[0].label = "alpha";
    series[0].points = {{1, 2}, {2, 3}, {3, 2.5}};
    series[1].label = "beta";
    series[1].points = {{1, 1}, {2, 1.2}, {3, 4}};
    const auto svg = render_line_chart(series, "demo", "x", "y");
    REQUIRE(svg.find("<svg") == 0);
    REQUIRE(std::count(svg.begin(), svg.end(), '\n') > 10);
    std::size_t polylines = 0, pos = 0;
    while ((pos = svg.find("<polyline", pos)) != std::string::npos) {
        ++polylines;
        pos += 9;
    }
    REQUIRE(polylines == 2);
    REQUIRE(svg.find("alpha") != std::string::npos);
    REQUIRE(svg.find("</svg>") != std::string::npos);
}

TEST_CASE("svg rejects empty input and bad log axes") {
    REQUIRE_THROWS_AS(render_line_chart({}, "t", "x", "y"), InvalidInput);
    std::vector<SvgSeries> series(1);
    series[0].points = {{0.0, 1.0}};
    REQUIRE_THROWS_AS(render_line_chart(series, "t", "x", "y", true, false), InvalidInput);
}

TEST_CASE("csv writer emits comment, header, and formatted rows") {
    CsvWriter csv({"a", "b"}, 0xdeadbeefULL);
    csv.row({"1", format_double(0.5)});
    const auto text = csv.str();
    REQUIRE(text.find("# config_hash=00000000deadbeef") == 0);
    REQUIRE(text.find("a,b\n1,0.5\n") != std::string::npos);
    REQUIRE_THROWS_AS(csv.row({"only-one"}), InvalidInput);
}

TEST_CASE("csv reader round-trips and skips comments") {
    const auto dir = std::filesystem::temp_directory_path();
    const auto path = (dir / "mpsams_csv_test.csv").string();
    CsvWriter csv({"epoch", "loss"}, 1);
    csv.row({"1", "0.25"});
    csv.row({"2", ""});
    csv.save(path);
    const auto table = read_csv(path);
    REQUIRE(table.header == std::vector<std::string>{"epoch", "loss"});
    REQUIRE(table.rows.size() == 2);
    REQUIRE(table.rows[0][1] == "0.25");
    REQUIRE(table.rows[1][1].empty());
    REQUIRE(table.column("loss") == 1);
    REQUIRE(table.column("nope") == -1);
}
