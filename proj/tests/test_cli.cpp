#include "doctest.h"

#include "sadapt/binio.hpp"
#include "sadapt/checkpoint.hpp"
#include "sadapt/cli.hpp"
#include "sadapt/dataio.hpp"
#include "sadapt/evalkit.hpp"
#include "test_support.hpp"

#include "json.hpp"

#include <fstream>
#include <sstream>

using namespace sadapt;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "sadapt");
    std::ostringstream out, err;
    const int code = cli::run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string s(const std::filesystem::path& p) { return p.string(); }

} // namespace

TEST_CASE("usage errors exit with 1") {
    CHECK(run({}).code == 1);
    CHECK(run({"frobnicate"}).code == 1);
    CHECK(run({"train", "--shots", "4"}).code == 1);
    CHECK(run({"--help"}).code == 0);
}

TEST_CASE("synth, info and corrupt inputs") {
    testing::TempDir dir("cli_synth");
    const auto r = run({"synth", "--out", s(dir.path()), "--classes", "3", "--dim", "8", "--per-class", "10",
                        "--views", "4", "--seed", "5"});
    REQUIRE(r.code == 0);
    const auto set = read_container(dir / "train.sadp");
    CHECK(set.views() == 4);
    CHECK(set.classes() == 3);

    const auto info = run({"info", "--embeddings", s(dir / "train.sadp")});
    CHECK(info.code == 0);
    CHECK(info.out.find("views=4") != std::string::npos);
    CHECK(info.out.find("norm_check=ok") != std::string::npos);

    auto bytes = binio::read_file(dir / "train.sadp");
    bytes.resize(bytes.size() - 7);
    binio::write_file(dir / "short.sadp", bytes);
    const auto bad = run({"info", "--embeddings", s(dir / "short.sadp")});
    CHECK(bad.code == 2);
    CHECK(bad.err.find("CorruptLength") != std::string::npos);

    bytes[0] = 'Q';
    binio::write_file(dir / "magic.sadp", bytes);
    CHECK(run({"info", "--embeddings", s(dir / "magic.sadp")}).code == 2);
    CHECK(run({"info", "--embeddings", s(dir / "missing.sadp")}).code == 2);

    const auto too_many = run({"sample", "--embeddings", s(dir / "train.sadp"), "--shots", "11"});
    CHECK(too_many.code == 2);
    CHECK(too_many.err.find("InsufficientShots") != std::string::npos);
}

TEST_CASE("train, soup, verify and eval") {
    testing::TempDir dir("cli_pipeline");
    REQUIRE(run({"synth", "--out", s(dir.path()), "--classes", "4", "--dim", "16", "--per-class", "40", "--seed",
                 "2"}).code == 0);
    const auto train_args = [&](const std::string& out, const std::string& jobs) {
        return std::vector<std::string>{"train",   "--embeddings", s(dir / "train.sadp"), "--shots", "8",
                                        "--k",     "3",            "--epochs",            "5",       "--seed",
                                        "7",       "--jobs",       jobs,                  "--out",   out,
                                        "--override", "red=4",     "--override",          "lr=0.002"};
    };
    REQUIRE(run(train_args(s(dir / "a"), "1")).code == 0);
    REQUIRE(run(train_args(s(dir / "b"), "3")).code == 0);
    for (int j = 0; j < 3; ++j) {
        const auto name = "component_" + std::to_string(j) + ".sada";
        CHECK(binio::read_file(dir / "a" / name) == binio::read_file(dir / "b" / name));
        std::ifstream side(dir / "a" / ("component_" + std::to_string(j) + ".json"));
        const auto meta = nlohmann::json::parse(side);
        CHECK(meta.at("hyper").at("red") == 4);
        CHECK(meta.at("hyper").at("lr") == 0.002);
        CHECK(meta.at("hyper").at("mask_strategy") == "mask");
        CHECK(meta.at("train").contains("wall_seconds"));
        const auto ck = read_checkpoint(dir / "a" / name);
        CHECK_FALSE(ck.meta.at("train").contains("wall_seconds"));
    }
    CHECK(std::filesystem::exists(dir / "a" / "prototypes.shed"));
    CHECK(std::filesystem::exists(dir / "a" / "bank.sadp"));

    const std::vector<std::string> comps{s(dir / "a" / "component_0.sada"), s(dir / "a" / "component_1.sada"),
                                         s(dir / "a" / "component_2.sada")};
    std::vector<std::string> soup_args{"soup", "--out", s(dir / "merged.sada"), "--components"};
    soup_args.insert(soup_args.end(), comps.begin(), comps.end());
    const auto soup = run(soup_args);
    CHECK(soup.code == 0);
    CHECK(read_checkpoint(dir / "merged.sada").params.hidden == 12);

    std::vector<std::string> verify_args{"verify", "--merged", s(dir / "merged.sada"), "--components"};
    verify_args.insert(verify_args.end(), comps.begin(), comps.end());
    CHECK(run(verify_args).code == 0);

    // A tampered merged checkpoint fails equivalence with exit code 3.
    auto merged = read_checkpoint(dir / "merged.sada");
    merged.params.b2[0] += 0.01f;
    write_checkpoint(merged, dir / "tampered.sada");
    verify_args[2] = s(dir / "tampered.sada");
    const auto tampered = run(verify_args);
    CHECK(tampered.code == 3);
    CHECK(tampered.err.find("EquivalenceViolation") != std::string::npos);

    std::vector<std::string> eval_args{"eval",        "--head",          s(dir / "a" / "prototypes.shed"),
                                       "--head-kind", "prototype",       "--id",
                                       s(dir / "id_test.sadp"), "--ood", s(dir / "ood_test.sadp"),
                                       "--bank",      s(dir / "a" / "bank.sadp"), "--grid", "0:1:0.5",
                                       "--out",       s(dir / "report"), "--components"};
    eval_args.insert(eval_args.end(), comps.begin(), comps.end());
    const auto ev = run(eval_args);
    CHECK(ev.code == 0);
    const auto report = read_report_json(dir / "report.json");
    CHECK(report.find("soup", "id", 0.5).has_value());
    CHECK(report.find("soup", kOodMeanSplit, 1.0).has_value());
    CHECK(report.find("mean", "id", 1.0).has_value());
    REQUIRE(report.baselines.size() >= 1);
    CHECK(report.baselines[0].prototype.has_value());
    CHECK(report.baselines[0].knn.has_value());
    CHECK(std::filesystem::exists(dir / "report.csv"));
}

TEST_CASE("soup inputs with different dimensions") {
    testing::TempDir dir("cli_mixed");
    Rng rng(1);
    write_checkpoint({round_to_f32(testing::random_adapter(rng, 8, 2)), 1.0, {}}, dir / "a.sada");
    write_checkpoint({round_to_f32(testing::random_adapter(rng, 9, 2)), 1.0, {}}, dir / "b.sada");
    const auto r = run({"soup", "--out", s(dir / "m.sada"), "--components", s(dir / "a.sada"), s(dir / "b.sada")});
    CHECK(r.code == 2);
    CHECK(r.err.find("DimensionMismatch") != std::string::npos);
    CHECK(r.err.find("b.sada") != std::string::npos);
}

TEST_CASE("red too large is a usage error") {
    testing::TempDir dir("cli_red");
    REQUIRE(run({"synth", "--out", s(dir.path()), "--classes", "2", "--dim", "4", "--per-class", "10"}).code == 0);
    const auto r = run({"train", "--embeddings", s(dir / "train.sadp"), "--shots", "2", "--k", "2", "--epochs", "1",
                        "--out", s(dir / "o"), "--override", "red=10"});
    CHECK(r.code == 1);
    CHECK(r.err.find("RedTooLarge") != std::string::npos);
}

TEST_CASE("synth outputs") {
    testing::TempDir dir("cli_synth_default");
    REQUIRE(run({"synth", "--out", s(dir / "a"), "--seed", "4"}).code == 0);
    REQUIRE(run({"synth", "--out", s(dir / "b"), "--seed", "4"}).code == 0);
    for (const char* name : {"train", "id_test", "ood_test"}) {
        const auto path = dir / "a" / (std::string(name) + ".sadp");
        const auto set = read_container(path);
        CHECK(set.classes() == 10);
        CHECK(set.dim() == 32);
        CHECK(run({"info", "--embeddings", s(path)}).code == 0);
        CHECK(binio::read_file(path) == binio::read_file(dir / "b" / (std::string(name) + ".sadp")));
        CHECK(std::filesystem::exists(manifest_path_for(path)));
    }

    REQUIRE(run({"synth", "--out", s(dir / "flat"), "--shift-angle", "0", "--noise", "0", "--per-class", "3"}).code ==
            0);
    const auto id = read_container(dir / "flat" / "id_test.sadp");
    const auto ood = read_container(dir / "flat" / "ood_test.sadp");
    CHECK(id.raw_features() == ood.raw_features());
}

TEST_CASE("default K, overrides, soup widths and grids") {
    testing::TempDir dir("cli_k8");
    REQUIRE(run({"synth", "--out", s(dir.path()), "--classes", "3", "--dim", "512", "--per-class", "6", "--seed",
                 "1"}).code == 0);
    REQUIRE(run({"train", "--embeddings", s(dir / "train.sadp"), "--shots", "4", "--epochs", "1", "--override",
                 "lr=1e-3", "--out", s(dir / "run")}).code == 0);
    std::vector<std::string> comps;
    std::size_t hidden = 0;
    for (int j = 0; j < 8; ++j) {
        const auto stem = "component_" + std::to_string(j);
        REQUIRE(std::filesystem::exists(dir / "run" / (stem + ".sada")));
        comps.push_back(s(dir / "run" / (stem + ".sada")));
        hidden += read_checkpoint(comps.back()).params.hidden;
        std::ifstream side(dir / "run" / (stem + ".json"));
        CHECK(nlohmann::json::parse(side).at("hyper").at("lr") == 1e-3);
    }
    CHECK_FALSE(std::filesystem::exists(dir / "run" / "component_8.sada"));

    std::vector<std::string> soup_args{"soup", "--out", s(dir / "merged.sada"), "--components"};
    soup_args.insert(soup_args.end(), comps.begin(), comps.end());
    REQUIRE(run(soup_args).code == 0);
    CHECK(read_checkpoint(dir / "merged.sada").params.hidden == hidden);

    REQUIRE(run({"soup", "--out", s(dir / "single.sada"), "--components", comps[0]}).code == 0);
    const auto one = read_checkpoint(comps[0]).params;
    const auto single = read_checkpoint(dir / "single.sada").params;
    Rng rng(2);
    for (int t = 0; t < 10; ++t) {
        const auto x = rng.unit_vector(512);
        CHECK(testing::max_abs_diff(adapter_forward(one, x), adapter_forward(single, x)) <= 1e-6);
    }

    const auto eval = [&](const std::string& grid, const std::string& out) {
        return run({"eval", "--head", s(dir / "zeroshot.shed"), "--id", s(dir / "id_test.sadp"), "--ood",
                    s(dir / "ood_test.sadp"), "--adapter", s(dir / "merged.sada"), "--grid", grid, "--out", out});
    };
    REQUIRE(eval("0:1:0.1", s(dir / "full")).code == 0);
    const auto full = read_report_json(dir / "full.json");
    for (const char* split : {"id", "ood_test"}) {
        const auto n = std::count_if(full.rows.begin(), full.rows.end(),
                                     [&](const RatioRow& r) { return r.model == "merged" && r.split == split; });
        CHECK(n == 11);
    }
    REQUIRE(eval("0:0:1", s(dir / "base")).code == 0);
    const auto base = read_report_json(dir / "base.json");
    CHECK(base.grid == std::vector<double>{0.0});
    for (const auto& b : base.baselines) {
        CHECK(b.imported.has_value());
        CHECK(*base.find("merged", b.split, 0.0) == *b.imported);
    }
}
