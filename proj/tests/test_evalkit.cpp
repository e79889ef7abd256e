#include "doctest.h"

#include "sadapt/evalkit.hpp"
#include "test_support.hpp"

#include <cmath>
#include <sstream>

using namespace sadapt;
using testing::error_kind;

namespace {

struct Fixture {
    SyntheticBenchmark data;
    ClassifierHead head;

    Fixture() {
        SynthConfig cfg;
        cfg.classes = 5;
        cfg.dim = 16;
        cfg.per_class = 20;
        cfg.seed = 12;
        data = generate_synthetic(cfg);
        head = build_prototypes(selection_prompts(
            data.train, sample_few_shot(data.train, all_indices(data.train), 4, 1)));
    }
};

} // namespace

TEST_CASE("accuracy") {
    const std::vector<std::size_t> p{0, 1, 2, 1};
    const std::vector<std::uint32_t> l{0, 1, 1, 1};
    CHECK(accuracy(p, l) == 0.75);
    const std::vector<std::uint32_t> wrong{1, 0, 0, 0};
    CHECK(accuracy(p, wrong) == 0.0);
    const std::vector<std::uint32_t> short_labels{0, 1};
    CHECK(error_kind([&] { accuracy(p, short_labels); }) == ErrorKind::LengthMismatch);
    CHECK(error_kind([] { accuracy(std::vector<std::size_t>{}, std::vector<std::uint32_t>{}); }) ==
          ErrorKind::InvalidArgument);
    // argmax ties go to class 0
    const std::vector<std::vector<double>> logits{{1.0, 1.0}, {0.0, 2.0}};
    const std::vector<std::uint32_t> l2{0, 1};
    CHECK(accuracy(logits, l2) == 1.0);
}

TEST_CASE("grid parsing") {
    CHECK(default_grid().size() == 11);
    CHECK(default_grid()[3] == 0.3);
    CHECK(parse_grid("0:1:0.1") == default_grid());
    CHECK(parse_grid("0:0:1") == std::vector<double>{0.0});
    CHECK(parse_grid("0.5:1:0.25") == std::vector<double>{0.5, 0.75, 1.0});
    CHECK(error_kind([] { parse_grid("0:1"); }) == ErrorKind::InvalidArgument);
    CHECK(error_kind([] { parse_grid("0:1:0"); }) == ErrorKind::InvalidArgument);
    CHECK(error_kind([] { parse_grid("0:2:0.5"); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("ratio sweeps") {
    const Fixture fx;
    const auto split = EvalSplit::whole("id", fx.data.id_test);
    Rng rng(2);
    const auto adapter = testing::random_adapter(rng, 16, 4, 2.0);
    const auto grid = default_grid();

    SUBCASE("r = 0 is the bare head") {
        const auto acc = ratio_sweep(adapter, fx.head, split, grid);
        CHECK(acc.size() == grid.size());
        CHECK(acc[0] == head_accuracy(fx.head, split));
        const auto outputs = adapter_outputs(EvalModel::adapter("a", adapter), split);
        const auto preds = predict(fx.head, split, outputs, 0.0);
        for (std::size_t i = 0; i < split.samples.size(); ++i) {
            CHECK(preds[i] == argmax(head_logits(fx.head, fx.data.id_test.unit(i))));
        }
    }
    SUBCASE("a zero adapter gives a constant row") {
        const AdapterParams zero(16, 4);
        const auto acc = ratio_sweep(zero, fx.head, split, grid);
        for (double a : acc) CHECK(a == acc[0]);
    }
    SUBCASE("class-set mismatch") {
        const auto other = testing::random_head(rng, 4, 16, 1.0);
        CHECK(error_kind([&] { ratio_sweep(adapter, other, split, grid); }) == ErrorKind::ClassSetMismatch);
    }
}

TEST_CASE("robustness report and serialization") {
    const Fixture fx;
    Rng rng(3);
    const auto a = testing::random_adapter(rng, 16, 4);
    const auto b = testing::random_adapter(rng, 16, 2);
    const std::vector<EvalModel> models{EvalModel::adapter("a", a), EvalModel::soup("soup", Soup({a, b}))};
    const auto id = EvalSplit::whole("id", fx.data.id_test);
    const std::vector<EvalSplit> ood{EvalSplit::whole("rot", fx.data.ood_test),
                                     EvalSplit::whole("rot2", fx.data.ood_test)};
    const std::vector<double> grid{0.0, 0.5, 1.0};
    auto report = robustness_report(models, fx.head, id, ood, grid);
    report.model_id = "test";

    // models × grid × (id + 2 ood + mean)
    CHECK(report.rows.size() == 2 * 3 * 4);
    CHECK(report.robustness.size() == 2 * 3);
    CHECK(report.baselines.size() == 3);
    for (const auto& pt : report.robustness) {
        CHECK(pt.ood_accuracy == *report.find(pt.model, "rot", pt.r));
        CHECK(pt.ood_accuracy == *report.find(pt.model, kOodMeanSplit, pt.r));
    }

    const auto csv = report_to_csv(report);
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);
    CHECK(line == "model,split,r,accuracy");
    std::size_t n = 0;
    while (std::getline(lines, line)) ++n;
    CHECK(n == report.rows.size());

    EvalReport empty;
    CHECK(report_to_csv(empty) == "model,split,r,accuracy\n");

    CHECK(report_from_json(report_to_json(report)) == report);
    testing::TempDir dir("report");
    write_report(report, dir / "r.json", ReportFormat::Json);
    CHECK(read_report_json(dir / "r.json") == report);

    const auto best = best_ratio(report, "a", "id");
    REQUIRE(best.has_value());
    for (double r : grid) CHECK(*report.find("a", "id", r) <= best->second);
}

TEST_CASE("component average report") {
    const Fixture fx;
    Rng rng(4);
    std::vector<AdapterParams> comps;
    for (int j = 0; j < 4; ++j) comps.push_back(testing::random_adapter(rng, 16, 3, 1.5));
    const std::vector<EvalSplit> splits{EvalSplit::whole("id", fx.data.id_test)};
    const std::vector<double> grid{0.0, 1.0};
    const auto report = component_average_report(comps, fx.head, splits, grid);
    for (double r : grid) {
        std::vector<double> accs;
        for (int j = 0; j < 4; ++j) accs.push_back(*report.find("component_" + std::to_string(j), "id", r));
        double mean = 0;
        for (double v : accs) mean += v;
        mean /= 4;
        CHECK(std::abs(*report.find("mean", "id", r) - mean) < 1e-15);
        CHECK(*report.find("min", "id", r) == *std::min_element(accs.begin(), accs.end()));
        CHECK(*report.find("max", "id", r) == *std::max_element(accs.begin(), accs.end()));
    }
}

TEST_CASE("knn baseline") {
    const Fixture fx;
    const auto bank = make_knn_bank(fx.data.train, all_indices(fx.data.train));
    const auto split = EvalSplit::whole("train", fx.data.train);
    // Every training sample is its own nearest neighbour.
    CHECK(knn_accuracy(bank, split, {1, 0.1}) == 1.0);
}

TEST_CASE("robustness report shapes") {
    const Fixture fx;
    Rng rng(5);
    const auto a = testing::random_adapter(rng, 16, 4);
    const auto id = EvalSplit::whole("id", fx.data.id_test);

    SUBCASE("ood set equal to the id set duplicates the id column") {
        const std::vector<EvalSplit> ood{EvalSplit::whole("copy", fx.data.id_test)};
        const auto grid = default_grid();
        const auto report = robustness_report({EvalModel::adapter("a", a)}, fx.head, id, ood, grid);
        for (double r : grid) CHECK(*report.find("a", "copy", r) == *report.find("a", "id", r));
        for (const auto& pt : report.robustness) CHECK(pt.id_accuracy == pt.ood_accuracy);
    }
    SUBCASE("single r gives one curve point per model") {
        const std::vector<EvalSplit> ood{EvalSplit::whole("ood", fx.data.ood_test)};
        const std::vector<double> grid{0.4};
        const auto report = robustness_report(
            {EvalModel::adapter("a", a), EvalModel::adapter("b", testing::random_adapter(rng, 16, 2))}, fx.head, id, ood,
            grid);
        CHECK(report.robustness.size() == 2);
    }
}

TEST_CASE("shift lowers bare-head accuracy") {
    SynthConfig cfg;
    cfg.seed = 1;
    const auto data = generate_synthetic(cfg);
    const auto head = build_prototypes(selection_prompts(
        data.train, sample_few_shot(data.train, all_indices(data.train), 16, 1)));
    CHECK(head_accuracy(head, EvalSplit::whole("ood", data.ood_test)) <=
          head_accuracy(head, EvalSplit::whole("id", data.id_test)));
}

TEST_CASE("a trained soup improves on r = 0") {
    SynthConfig cfg;
    cfg.seed = 2;
    const auto data = generate_synthetic(cfg);
    const auto sel = sample_few_shot(data.train, all_indices(data.train), 16, 2);
    std::vector<AdapterParams> comps;
    for (std::uint64_t j = 0; j < 4; ++j) {
        auto h = sample_hyperconfig(2, j);
        h.epochs = 30;
        h.mask = MaskStrategy::Mask;
        comps.push_back(train_component(data.train, sel, TrainHead::prototypes(), h).params);
    }
    const auto head = build_prototypes(selection_prompts(data.train, sel));
    const auto grid = default_grid();
    const auto acc = ratio_sweep(EvalModel::soup("soup", Soup(comps)), head, EvalSplit::whole("id", data.id_test), grid);
    CHECK(*std::max_element(acc.begin() + 1, acc.end()) > acc[0]);
}

TEST_CASE("component statistics edge cases") {
    const Fixture fx;
    Rng rng(6);
    const auto a = testing::random_adapter(rng, 16, 3, 1.5);
    const std::vector<EvalSplit> splits{EvalSplit::whole("id", fx.data.id_test)};
    const auto grid = default_grid();

    const auto single = component_average_report({a}, fx.head, splits, grid);
    for (const auto& st : single.component_stats) {
        CHECK(st.mean == *single.find("component_0", "id", st.r));
        CHECK(st.min == st.mean);
        CHECK(st.max == st.mean);
    }
    const auto same = component_average_report({a, a, a}, fx.head, splits, grid);
    for (const auto& st : same.component_stats) CHECK(st.max - st.min == 0.0);
}
