#include "doctest.h"

#include "sadapt/binio.hpp"
#include "sadapt/heads.hpp"
#include "test_support.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

using namespace sadapt;
using testing::error_kind;

namespace {

std::vector<Matrix> random_prompts(Rng& rng, std::size_t classes, std::size_t dim, std::size_t max_prompts) {
    std::vector<Matrix> prompts;
    for (std::size_t c = 0; c < classes; ++c) {
        const auto n = 1 + static_cast<std::size_t>(rng.below(max_prompts));
        Matrix m(n, dim);
        for (std::size_t j = 0; j < n; ++j) {
            const auto u = rng.unit_vector(dim);
            std::copy(u.begin(), u.end(), m.row(j).begin());
        }
        prompts.push_back(std::move(m));
    }
    return prompts;
}

// Full sort of the bank; independent of the partial-sort path in the library.
std::vector<double> knn_brute_force(const KnnBank& bank, std::span<const double> x, std::size_t k, double t) {
    std::vector<std::size_t> order(bank.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> sims(bank.size());
    for (std::size_t i = 0; i < bank.size(); ++i) sims[i] = dot(bank.features.row(i), x);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return sims[a] > sims[b]; });
    std::vector<double> out(bank.classes, 0.0);
    for (std::size_t n = 0; n < std::min(k, bank.size()); ++n) {
        out[bank.labels[order[n]]] += std::exp(sims[order[n]] / t);
    }
    return out;
}

} // namespace

TEST_CASE("prototype head") {
    SUBCASE("hand example") {
        std::vector<Matrix> prompts{Matrix(2, 2, {1, 0, 0, 1}), Matrix(1, 2, {0, -1})};
        const auto h = build_prototypes(prompts);
        CHECK(std::abs(h.weights(0, 0) - std::sqrt(0.5)) < 1e-15);
        CHECK(std::abs(h.weights(0, 1) - std::sqrt(0.5)) < 1e-15);
        CHECK(h.weights(1, 1) == -1.0);
        CHECK(h.scale == kDefaultLogitScale);
        CHECK(std::abs(std::exp(h.scale) - 100.0) < 1e-12);
    }
    SUBCASE("failures") {
        std::vector<Matrix> empty_class{Matrix(1, 2, {1, 0}), Matrix(0, 2)};
        CHECK(error_kind([&] { build_prototypes(empty_class); }) == ErrorKind::EmptyClass);
        std::vector<Matrix> cancel{Matrix(2, 2, {1, 0, -1, 0})};
        CHECK(error_kind([&] { build_prototypes(cancel); }) == ErrorKind::DegenerateVector);
    }
}

TEST_CASE("masked prototypes equal a rebuild without the excluded prompt") {
    testing::WarningCapture quiet;
    Rng rng(31);
    for (int t = 0; t < 30; ++t) {
        const auto prompts = random_prompts(rng, 5, 16, 6);
        const PrototypeCache cache(prompts);
        for (std::size_t c = 0; c < prompts.size(); ++c) {
            for (std::size_t j = 0; j < prompts[c].rows(); ++j) {
                const auto masked = build_prototypes_masked(prompts, {c, j});
                const auto row = cache.masked_row({c, j});
                if (prompts[c].rows() == 1) {
                    CHECK(masked.weights == cache.unmasked().weights);
                    continue;
                }
                auto reduced = prompts;
                std::vector<double> kept;
                for (std::size_t r = 0; r < prompts[c].rows(); ++r) {
                    if (r == j) continue;
                    kept.insert(kept.end(), prompts[c].row(r).begin(), prompts[c].row(r).end());
                }
                reduced[c] = Matrix(prompts[c].rows() - 1, 16, kept);
                const auto oracle = build_prototypes(reduced);
                CHECK(testing::max_abs_diff(masked.weights.values(), oracle.weights.values()) <= 1e-12);
                CHECK(testing::max_abs_diff(row, oracle.weights.row(c)) <= 1e-12);
            }
        }
    }
}

TEST_CASE("single-prompt class falls back with a warning") {
    testing::WarningCapture warnings;
    std::vector<Matrix> prompts{Matrix(1, 2, {1, 0}), Matrix(2, 2, {0, 1, 0.6, 0.8})};
    const auto h = build_prototypes_masked(prompts, {0, 0});
    CHECK(h.weights == build_prototypes(prompts).weights);
    CHECK(warnings.messages.size() == 1);
}

TEST_CASE("knn logits match a brute-force oracle") {
    Rng rng(41);
    for (int t = 0; t < 40; ++t) {
        const std::size_t n = 1 + rng.below(60), dim = 8, classes = 4;
        KnnBank bank;
        bank.features = Matrix(n, dim);
        bank.classes = classes;
        for (std::size_t i = 0; i < n; ++i) {
            const auto u = rng.unit_vector(dim);
            std::copy(u.begin(), u.end(), bank.features.row(i).begin());
            bank.labels.push_back(static_cast<std::uint32_t>(rng.below(classes)));
        }
        if (t % 5 == 0 && n > 2) {
            // Exact duplicate similarity: tie break must go to the lower index.
            std::copy(bank.features.row(0).begin(), bank.features.row(0).end(), bank.features.row(n - 1).begin());
        }
        const auto x = rng.unit_vector(dim);
        for (std::size_t k = 1; k <= n + 3; ++k) {
            const auto got = knn_logits(bank, x, {k, 0.1});
            const auto want = knn_brute_force(bank, x, k, 0.1);
            CHECK(testing::max_abs_diff(got, want) <= 1e-12 * std::max(1.0, *std::max_element(want.begin(), want.end())));
        }
    }
}

TEST_CASE("knn edge cases") {
    KnnBank empty;
    empty.features = Matrix(0, 3);
    empty.classes = 2;
    const std::vector<double> x{1, 0, 0};
    CHECK(error_kind([&] { knn_logits(empty, x, {}); }) == ErrorKind::EmptyBank);

    KnnBank one;
    one.features = Matrix(1, 3, {0, 1, 0});
    one.labels = {1};
    one.classes = 2;
    const auto l = knn_logits(one, x, {5, 0.1});
    CHECK(l[0] == 0.0);
    CHECK(l[1] == 1.0); // exp(0/T)
}

TEST_CASE("head file fixture gives the expected logits") {
    const auto head = import_head(SADAPT_FIXTURE_DIR "/head_fixture.shed");
    CHECK(head.classes() == 5);
    CHECK(head.dim() == 12);
    CHECK(head.scale == 2.5);
    CHECK(head.origin == HeadOrigin::Imported);

    std::ifstream in(SADAPT_FIXTURE_DIR "/head_fixture.json");
    const auto j = nlohmann::json::parse(in);
    const auto feats = j.at("features").get<std::vector<std::vector<double>>>();
    const auto want = j.at("logits").get<std::vector<std::vector<double>>>();
    REQUIRE(feats.size() == 8);
    for (std::size_t i = 0; i < feats.size(); ++i) {
        const auto got = head_logits(head, feats[i]);
        CHECK(testing::max_abs_diff(got, want[i]) <= 1e-4);
    }
}

TEST_CASE("head file round trip and validation") {
    Rng rng(51);
    auto head = testing::random_head(rng, 6, 9, 3.0);
    const auto file = to_head_file(head);
    const auto bytes = encode_head_file(file);
    CHECK(bytes.size() == 24 + 6 * 9 * 4);
    CHECK(decode_head_file(bytes) == file);
    CHECK(encode_head_file(decode_head_file(bytes)) == bytes);

    testing::TempDir dir("head");
    export_head(head, dir / "h.shed");
    CHECK(binio::read_file(dir / "h.shed") == bytes);

    auto bad = bytes;
    bad[1] = 'X';
    CHECK(error_kind([&] { decode_head_file(bad); }) == ErrorKind::BadMagic);
    bad = bytes;
    bad.pop_back();
    CHECK(error_kind([&] { decode_head_file(bad); }) == ErrorKind::CorruptLength);

    HeadFile zero = file;
    std::fill(zero.rows.begin() + 9, zero.rows.begin() + 18, 0.0f);
    CHECK(error_kind([&] { head_from_file(zero); }) == ErrorKind::NormViolation);
}

TEST_CASE("prototype edge cases") {
    SUBCASE("one prompt per class gives the prompts back") {
        std::vector<Matrix> prompts{Matrix(1, 2, {0.6, 0.8}), Matrix(1, 2, {-1, 0})};
        const auto h = build_prototypes(prompts);
        CHECK(h.weights == Matrix(2, 2, {0.6, 0.8, -1, 0}));
    }
    SUBCASE("symmetric average") {
        std::vector<Matrix> prompts{Matrix(2, 2, {1, 0, 0, 1})};
        const auto h = build_prototypes(prompts);
        CHECK(h.weights(0, 0) == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-15));
        CHECK(h.weights(0, 1) == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-15));
    }
    SUBCASE("dropping one of two identical prompts") {
        std::vector<Matrix> prompts{Matrix(2, 2, {0.6, 0.8, 0.6, 0.8}), Matrix(1, 2, {1, 0})};
        const auto h = build_prototypes_masked(prompts, {0, 1});
        CHECK(testing::max_abs_diff(h.weights.values(), build_prototypes(prompts).weights.values()) < 1e-15);
    }
    SUBCASE("masking never touches other classes") {
        Rng rng(71);
        const auto prompts = random_prompts(rng, 3, 10, 5);
        const auto full = build_prototypes(prompts);
        for (std::size_t c = 0; c < 3; ++c) {
            const auto masked = build_prototypes_masked(prompts, {c, 0});
            for (std::size_t o = 0; o < 3; ++o) {
                if (o != c) CHECK(testing::max_abs_diff(masked.weights.row(o), full.weights.row(o)) == 0.0);
            }
        }
    }
}

TEST_CASE("head logits") {
    Rng rng(72);
    auto head = testing::random_head(rng, 4, 6, 0.0);
    const auto self = head_logits(head, head.weights.row(2));
    CHECK(self[2] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(argmax(self) == 2);

    head.scale = 1.3;
    for (int t = 0; t < 20; ++t) {
        const auto f = rng.unit_vector(6);
        const auto got = head_logits(head, f);
        for (std::size_t c = 0; c < 4; ++c) {
            double d = 0;
            for (std::size_t k = 0; k < 6; ++k) d += head.weights(c, k) * f[k];
            CHECK(std::abs(got[c] - std::exp(1.3) * d) <= 1e-12);
        }
    }
}

TEST_CASE("knn small cases") {
    KnnBank bank;
    bank.features = Matrix(3, 2, {1, 0, 0, 1, -1, 0});
    bank.labels = {0, 1, 2};
    bank.classes = 3;
    const std::vector<double> x{0.8, 0.6};

    const auto k1 = knn_logits(bank, x, {1, 0.1});
    CHECK(k1[0] == std::exp(0.8 / 0.1));
    CHECK(k1[1] == 0.0);
    CHECK(k1[2] == 0.0);

    const auto k3 = knn_logits(bank, x, {3, 0.1});
    CHECK(testing::max_abs_diff(k3, knn_brute_force(bank, x, 3, 0.1)) <= 1e-12);

    const std::vector<double> on_point{0, 1};
    const auto dup = knn_logits(bank, on_point, {1, 0.1});
    CHECK(argmax(dup) == 1);
    CHECK(dup[1] == doctest::Approx(std::exp(1.0 / 0.1)).epsilon(1e-15));
}

TEST_CASE("exported rows survive import") {
    Rng rng(73);
    const auto head = testing::random_head(rng, 5, 7, 2.0);
    testing::TempDir dir("head_rt");
    export_head(head, dir / "h.shed");
    const auto back = import_head(dir / "h.shed");
    CHECK(back.scale == 2.0);
    CHECK(testing::max_abs_diff(back.weights.values(), head.weights.values()) <= 1e-7);
}
