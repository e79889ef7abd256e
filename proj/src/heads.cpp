#include "sadapt/heads.hpp"

#include "sadapt/binio.hpp"
#include "sadapt/error.hpp"
#include "sadapt/log.hpp"

#include <algorithm>
#include <numeric>

namespace sadapt {

namespace {

constexpr std::string_view kHeadMagic = "SHED";
constexpr std::uint32_t kHeadVersion = 1;

void check_prompts(std::span<const Matrix> prompts) {
    if (prompts.empty()) {
        fail(ErrorKind::EmptyClass, "no classes given");
    }
    const std::size_t dim = prompts.front().cols();
    for (std::size_t c = 0; c < prompts.size(); ++c) {
        if (prompts[c].rows() == 0) {
            fail(ErrorKind::EmptyClass, "class " + std::to_string(c) + " has no prompts");
        }
        if (prompts[c].cols() != dim) {
            fail(ErrorKind::ShapeMismatch, "class " + std::to_string(c) + " prompt dimension differs");
        }
    }
}

// Sum of rows in ascending order, optionally skipping one.
std::vector<double> class_sum(const Matrix& prompts, std::size_t skip = static_cast<std::size_t>(-1)) {
    std::vector<double> sum(prompts.cols(), 0.0);
    for (std::size_t j = 0; j < prompts.rows(); ++j) {
        if (j == skip) {
            continue;
        }
        const auto row = prompts.row(j);
        for (std::size_t d = 0; d < sum.size(); ++d) {
            sum[d] += row[d];
        }
    }
    return sum;
}

std::vector<double> unit_prototype(std::span<const double> sum, std::size_t cls) {
    if (norm2(sum) < kDegenerateNorm) {
        fail(ErrorKind::DegenerateVector, "prototype of class " + std::to_string(cls) + " cancels to zero");
    }
    return normalized(sum);
}

} // namespace

ClassifierHead build_prototypes(std::span<const Matrix> prompts, double scale) {
    check_prompts(prompts);
    ClassifierHead head;
    head.weights = Matrix(prompts.size(), prompts.front().cols());
    head.scale = scale;
    head.origin = HeadOrigin::Prototype;
    for (std::size_t c = 0; c < prompts.size(); ++c) {
        const auto row = unit_prototype(class_sum(prompts[c]), c);
        std::copy(row.begin(), row.end(), head.weights.row(c).begin());
    }
    return head;
}

ClassifierHead build_prototypes_masked(std::span<const Matrix> prompts, ExcludedPrompt excluded,
                                       double scale) {
    check_prompts(prompts);
    if (excluded.cls >= prompts.size() || excluded.index >= prompts[excluded.cls].rows()) {
        fail(ErrorKind::InvalidArgument, "excluded prompt out of range");
    }
    ClassifierHead head;
    head.weights = Matrix(prompts.size(), prompts.front().cols());
    head.scale = scale;
    head.origin = HeadOrigin::Prototype;
    for (std::size_t c = 0; c < prompts.size(); ++c) {
        std::vector<double> sum;
        if (c == excluded.cls && prompts[c].rows() >= 2) {
            sum = class_sum(prompts[c], excluded.index);
        } else {
            if (c == excluded.cls) {
                warn("class " + std::to_string(c) + " has a single prompt; using its unmasked prototype");
            }
            sum = class_sum(prompts[c]);
        }
        const auto row = unit_prototype(sum, c);
        std::copy(row.begin(), row.end(), head.weights.row(c).begin());
    }
    return head;
}

std::vector<Matrix> selection_prompts(const EmbeddingSet& set, const FewShotSelection& selection) {
    if (selection.per_class.size() != set.classes()) {
        fail(ErrorKind::ClassSetMismatch, "selection class count differs from embedding set");
    }
    std::vector<Matrix> prompts;
    prompts.reserve(selection.per_class.size());
    for (const auto& members : selection.per_class) {
        Matrix m(members.size(), set.dim());
        for (std::size_t j = 0; j < members.size(); ++j) {
            const auto x = set.unit(members[j], 0);
            std::copy(x.begin(), x.end(), m.row(j).begin());
        }
        prompts.push_back(std::move(m));
    }
    return prompts;
}

PrototypeCache::PrototypeCache(std::span<const Matrix> prompts, double scale)
    : m_prompts(prompts.begin(), prompts.end()), m_head(build_prototypes(prompts, scale)) {
    m_sums = Matrix(prompts.size(), prompts.front().cols());
    for (std::size_t c = 0; c < prompts.size(); ++c) {
        const auto sum = class_sum(prompts[c]);
        std::copy(sum.begin(), sum.end(), m_sums.row(c).begin());
        if (prompts[c].rows() < 2) {
            warn("class " + std::to_string(c) + " has a single prompt; masking falls back to its unmasked prototype");
        }
    }
}

std::vector<double> PrototypeCache::masked_row(ExcludedPrompt excluded) const {
    const auto& prompts = m_prompts.at(excluded.cls);
    if (excluded.index >= prompts.rows()) {
        fail(ErrorKind::InvalidArgument, "excluded prompt out of range");
    }
    const auto head_row = m_head.weights.row(excluded.cls);
    if (prompts.rows() < 2) {
        return {head_row.begin(), head_row.end()};
    }
    const auto sum = m_sums.row(excluded.cls);
    const auto drop = prompts.row(excluded.index);
    std::vector<double> row(sum.size());
    for (std::size_t d = 0; d < row.size(); ++d) {
        row[d] = sum[d] - drop[d];
    }
    return unit_prototype(row, excluded.cls);
}

std::vector<double> head_logits(const ClassifierHead& head, std::span<const double> f) {
    auto logits = matvec(head.weights, f);
    const double s = std::exp(head.scale);
    for (auto& z : logits) {
        z *= s;
    }
    return logits;
}

KnnBank make_knn_bank(const EmbeddingSet& set, std::span<const std::uint32_t> samples) {
    KnnBank bank;
    bank.classes = set.classes();
    bank.features = Matrix(samples.size(), set.dim());
    bank.labels.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto x = set.unit(samples[i], 0);
        std::copy(x.begin(), x.end(), bank.features.row(i).begin());
        bank.labels.push_back(set.label(samples[i]));
    }
    return bank;
}

std::vector<double> knn_logits(const KnnBank& bank, std::span<const double> x, const KnnConfig& cfg) {
    if (bank.size() == 0) {
        fail(ErrorKind::EmptyBank, "knn bank is empty");
    }
    if (cfg.k == 0 || !(cfg.temperature > 0.0)) {
        fail(ErrorKind::InvalidArgument, "knn needs k >= 1 and T > 0");
    }
    const std::size_t k = std::min(cfg.k, bank.size());
    std::vector<double> sims = matvec(bank.features, x);
    std::vector<std::size_t> order(bank.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto closer = [&](std::size_t a, std::size_t b) {
        return sims[a] > sims[b] || (sims[a] == sims[b] && a < b);
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), closer);

    std::vector<double> logits(bank.classes, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
        const auto idx = order[j];
        logits[bank.labels[idx]] += std::exp(sims[idx] / cfg.temperature);
    }
    return logits;
}

std::vector<unsigned char> encode_head_file(const HeadFile& file) {
    binio::Writer w;
    w.magic(kHeadMagic);
    w.u32(kHeadVersion);
    w.u32(file.classes);
    w.u32(file.dim);
    w.f64(file.scale);
    for (float x : file.rows) {
        w.f32(x);
    }
    return w.buffer();
}

HeadFile decode_head_file(std::span<const unsigned char> bytes, const std::string& context) {
    binio::Reader r(bytes, context);
    r.expect_magic(kHeadMagic);
    const auto version = r.u32();
    if (version != kHeadVersion) {
        fail(ErrorKind::VersionUnsupported, context + ": version " + std::to_string(version));
    }
    HeadFile file;
    file.classes = r.u32();
    file.dim = r.u32();
    file.scale = r.f64();
    if (file.classes == 0 || file.dim == 0) {
        fail(ErrorKind::CorruptLength, context + ": header declares an empty dimension");
    }
    const std::uint64_t expected = std::uint64_t{file.classes} * file.dim * 4;
    if (r.remaining() != expected) {
        fail(ErrorKind::CorruptLength, context + ": payload is " + std::to_string(r.remaining()) +
                                           " bytes, header implies " + std::to_string(expected));
    }
    file.rows.resize(std::size_t{file.classes} * file.dim);
    for (auto& x : file.rows) {
        x = r.f32();
    }
    return file;
}

HeadFile to_head_file(const ClassifierHead& head) {
    HeadFile file;
    file.classes = static_cast<std::uint32_t>(head.classes());
    file.dim = static_cast<std::uint32_t>(head.dim());
    file.scale = head.scale;
    file.rows.reserve(head.weights.size());
    for (double x : head.weights.values()) {
        file.rows.push_back(static_cast<float>(x));
    }
    return file;
}

ClassifierHead head_from_file(const HeadFile& file) {
    if (!std::isfinite(file.scale)) {
        fail(ErrorKind::MalformedMetadata, "head scale is not finite");
    }
    ClassifierHead head;
    head.scale = file.scale;
    head.origin = HeadOrigin::Imported;
    head.weights = Matrix(file.classes, file.dim);
    for (std::size_t c = 0; c < file.classes; ++c) {
        auto row = head.weights.row(c);
        for (std::size_t d = 0; d < file.dim; ++d) {
            row[d] = file.rows[c * file.dim + d];
        }
        const double n = norm2(row);
        if (!(n >= kDegenerateNorm) || !std::isfinite(n)) {
            fail(ErrorKind::NormViolation, "head row " + std::to_string(c) + " has degenerate norm");
        }
        for (auto& x : row) {
            x /= n;
        }
    }
    return head;
}

ClassifierHead import_head(const std::filesystem::path& path) {
    return head_from_file(decode_head_file(binio::read_file(path), path.string()));
}

void export_head(const ClassifierHead& head, const std::filesystem::path& path) {
    binio::write_file(path, encode_head_file(to_head_file(head)));
}

} // namespace sadapt
