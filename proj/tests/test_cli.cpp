#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "mpsams/csv.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = MPSAMS_CLI_PATH;

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) : path(fs::temp_directory_path() / ("mpsams_cli_" + tag)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

int run(const std::string& args) {
    const int status = std::system((kCli + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(status);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// small corpus + cheap net so the whole file stays fast
const std::string kTinyFlags =
    " --set data.count=16 --set synthetic.image_size=32"
    " --set synthetic.lesion_radius_min=4 --set synthetic.lesion_radius_max=7"
    " --set net.base_channels=4 --set net.depth=2"
    " --set pretrain.epochs=2 --set pretrain.batch_size=8"
    " --set finetune.epochs=2 --set finetune.batch_size=4"
    " --set split.labeled_fraction=0.5";

}  // namespace

TEST_CASE("help and version exit zero") {
    REQUIRE(run("--help") == 0);
    REQUIRE(run("--version") == 0);
    REQUIRE(run("gen-data --help") == 0);
    REQUIRE(run("plot --help") == 0);
}

TEST_CASE("unknown config keys exit with the config code") {
    TempDir dir("badkey");
    REQUIRE(run("pretrain --out " + dir.str() + " --set bogus.key=1") == 2);
    REQUIRE(run("pretrain --out " + dir.str() + " --set schedule.tau=\\\"x\\\"") == 2);
}

TEST_CASE("missing data directory exits with the io/data code") {
    TempDir dir("nodata");
    REQUIRE(run("pretrain --out " + dir.str() + " --set data.dir=\\\"/no/such/dir\\\"" + kTinyFlags) == 5);
}

TEST_CASE("gen-data writes images, masks, and a manifest") {
    TempDir dir("gen");
    REQUIRE(run("gen-data --out " + dir.str() + " --set data.count=5 --set synthetic.image_size=32"
                " --set synthetic.lesion_radius_min=4 --set synthetic.lesion_radius_max=7") == 0);
    REQUIRE(fs::exists(dir.path / "manifest.json"));
    REQUIRE(fs::exists(dir.path / "s00004.png"));
    REQUIRE(fs::exists(dir.path / "s00004_mask.png"));
    REQUIRE(fs::exists(dir.path / "config_resolved.json"));
}

TEST_CASE("pretrain then finetune from the written checkpoint") {
    TempDir pre("pre"), fine("fine");
    REQUIRE(run("pretrain --out " + pre.str() + kTinyFlags) == 0);
    REQUIRE(fs::exists(pre.path / "pretrain_final.mpsw"));
    REQUIRE(fs::exists(pre.path / "pretrain_metrics.csv"));

    const auto table = mpsams::read_csv((pre.path / "pretrain_metrics.csv").string());
    REQUIRE(table.rows.size() == 2);
    REQUIRE(table.column("sigma") >= 0);

    REQUIRE(run("finetune --out " + fine.str() + " --checkpoint " + pre.str() + "/pretrain_final.mpsw" +
                kTinyFlags) == 0);
    REQUIRE(fs::exists(fine.path / "finetune_best.mpsw"));
    REQUIRE(fs::exists(fine.path / "test_metrics.csv"));
}

TEST_CASE("finetune without a checkpoint is the supervised baseline") {
    TempDir dir("sup");
    REQUIRE(run("finetune --out " + dir.str() + kTinyFlags) == 0);
    REQUIRE(fs::exists(dir.path / "finetune_metrics.csv"));
}

TEST_CASE("cluster-bench writes the report and slopes") {
    TempDir dir("bench");
    REQUIRE(run("cluster-bench --out " + dir.str() +
                " --set bench.patch_counts=[64,128] --set bench.methods=[\\\"kmeans\\\"]"
                " --set bench.trials=2") == 0);
    const auto table = mpsams::read_csv((dir.path / "cluster_bench.csv").string());
    REQUIRE(table.header ==
            std::vector<std::string>{"method", "patch_count", "trial", "wall_time_seconds", "lesion_recall"});
    REQUIRE(table.rows.size() == 4);
    REQUIRE(fs::exists(dir.path / "cluster_bench_slopes.csv"));
}

TEST_CASE("entropy-check emits the diagnostic table for both samplers") {
    TempDir dir("entropy");
    REQUIRE(run("entropy-check --out " + dir.str() + " --set entropy.models=5") == 0);
    auto table = mpsams::read_csv((dir.path / "entropy_check.csv").string());
    REQUIRE(table.rows.size() == 5);
    for (const auto& row : table.rows) REQUIRE(row[5] == "1");  // h2 <= h1 always

    REQUIRE(run("entropy-check --out " + dir.str() + " --set entropy.models=3"
                " --set entropy.sampler=\\\"mps-induced\\\"") == 0);
    table = mpsams::read_csv((dir.path / "entropy_check.csv").string());
    REQUIRE(table.rows.size() == 3);
}

TEST_CASE("ablate on a tiny corpus writes a four-arm report") {
    TempDir dir("ablate");
    REQUIRE(run("ablate --out " + dir.str() + kTinyFlags + " --set ablate.seeds=[5]"
                " --set split.labeled_fraction=0.25 --set pretrain.epochs=1 --set finetune.epochs=1") == 0);
    const auto table = mpsams::read_csv((dir.path / "ablation_report.csv").string());
    // 4 arms x (1 seed + mean + std)
    REQUIRE(table.rows.size() == 12);
    REQUIRE(fs::exists(dir.path / "ablation_table.txt"));
    REQUIRE(fs::exists(dir.path / "run_base_seed5.csv"));
    REQUIRE(fs::exists(dir.path / "run_base_AMS_MPS_seed5.csv"));
}

TEST_CASE("sweep writes one block per epoch count") {
    TempDir dir("sweep");
    REQUIRE(run("sweep --out " + dir.str() + kTinyFlags +
                " --set sweep.epochs=[1,2] --set sweep.seeds=[3] --set split.labeled_fraction=0.25") == 0);
    const auto table = mpsams::read_csv((dir.path / "sweep.csv").string());
    REQUIRE(table.rows.size() == 4);  // 2 points x (1 seed + mean)
}

TEST_CASE("plot renders a polyline from a two-row csv") {
    TempDir dir("plot");
    {
        mpsams::CsvWriter csv({"epoch", "loss"}, 0);
        csv.row({"1", "2.0"});
        csv.row({"2", "1.5"});
        csv.save((dir.path / "loss.csv").string());
    }
    REQUIRE(run("plot --csv " + dir.str() + "/loss.csv --out-svg " + dir.str() + "/loss.svg") == 0);
    const auto svg = read_file((dir.path / "loss.svg").string());
    REQUIRE(svg.find("<svg") != std::string::npos);
    std::size_t polylines = 0, pos = 0;
    while ((pos = svg.find("<polyline", pos)) != std::string::npos) {
        ++polylines;
        pos += 9;
    }
    REQUIRE(polylines == 1);
    REQUIRE(run("plot --csv " + dir.str() + "/loss.csv --out-svg " + dir.str() + "/bad.svg --y nosuch") == 3);
}

TEST_CASE("identical runs reproduce identical csv bytes") {
    TempDir a("repro_a"), b("repro_b");
    const std::string flags = kTinyFlags + " --seed 11";
    REQUIRE(run("pretrain --out " + a.str() + flags) == 0);
    REQUIRE(run("pretrain --out " + b.str() + flags) == 0);
    REQUIRE(read_file(a.str() + "/pretrain_metrics.csv") == read_file(b.str() + "/pretrain_metrics.csv"));
    REQUIRE(read_file(a.str() + "/pretrain_final.mpsw") == read_file(b.str() + "/pretrain_final.mpsw"));
}

TEST_CASE("MPSAMS_OUT provides the default output root") {
    TempDir dir("envout");
    const int status = std::system(("MPSAMS_OUT=" + dir.str() + "/sub " + kCli +
                                    " entropy-check --set entropy.models=2 >/dev/null 2>&1")
                                       .c_str());
    REQUIRE(WEXITSTATUS(status) == 0);
    REQUIRE(fs::exists(dir.path / "sub" / "entropy_check.csv"));
}
