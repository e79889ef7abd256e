#include "sadapt/dataio.hpp"

#include "sadapt/binio.hpp"
#include "sadapt/error.hpp"
#include "sadapt/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace sadapt {

namespace {

constexpr std::string_view kContainerMagic = "SADP";
constexpr std::uint32_t kContainerVersion = 1;

std::string sample_ref(std::size_t sample, std::size_t view) {
    return "sample " + std::to_string(sample) + " view " + std::to_string(view);
}

} // namespace

EmbeddingSet::EmbeddingSet(std::size_t dim, std::size_t views, std::size_t classes,
                           std::vector<std::uint32_t> labels, std::vector<float> features)
    : m_dim(dim), m_views(views), m_classes(classes), m_labels(std::move(labels)),
      m_raw(std::move(features)) {
    if (m_dim == 0 || m_views == 0 || m_classes == 0 || m_labels.empty()) {
        fail(ErrorKind::ShapeMismatch, "embedding set needs D, N, V, C > 0");
    }
    if (m_raw.size() != m_labels.size() * m_views * m_dim) {
        fail(ErrorKind::ShapeMismatch, "feature length does not equal N*V*D");
    }
    for (std::size_t i = 0; i < m_labels.size(); ++i) {
        if (m_labels[i] >= m_classes) {
            fail(ErrorKind::MalformedMetadata, "label " + std::to_string(m_labels[i]) + " of sample " +
                                                   std::to_string(i) + " out of range");
        }
    }
    m_unit.resize(m_raw.size());
    for (std::size_t i = 0; i < m_labels.size(); ++i) {
        for (std::size_t v = 0; v < m_views; ++v) {
            const std::size_t off = (i * m_views + v) * m_dim;
            double sq = 0.0;
            for (std::size_t d = 0; d < m_dim; ++d) {
                const double x = m_raw[off + d];
                sq += x * x;
            }
            const double n = std::sqrt(sq);
            if (!(std::abs(n - 1.0) <= kLoadNormTolerance)) {
                fail(ErrorKind::NormViolation,
                     sample_ref(i, v) + " has norm " + std::to_string(n) + " (tolerance 1e-4)");
            }
            for (std::size_t d = 0; d < m_dim; ++d) {
                m_unit[off + d] = static_cast<double>(m_raw[off + d]) / n;
            }
        }
    }
}

EmbeddingSet EmbeddingSet::subset(std::span<const std::uint32_t> samples) const {
    std::vector<std::uint32_t> labels;
    std::vector<float> feats;
    labels.reserve(samples.size());
    feats.reserve(samples.size() * m_views * m_dim);
    for (auto s : samples) {
        if (s >= count()) {
            fail(ErrorKind::InvalidArgument, "subset index " + std::to_string(s) + " out of range");
        }
        labels.push_back(m_labels[s]);
        const auto begin = m_raw.begin() + static_cast<std::ptrdiff_t>(s * m_views * m_dim);
        feats.insert(feats.end(), begin, begin + static_cast<std::ptrdiff_t>(m_views * m_dim));
    }
    return EmbeddingSet(m_dim, m_views, m_classes, std::move(labels), std::move(feats));
}

std::vector<unsigned char> encode_container(const EmbeddingSet& set) {
    binio::Writer w;
    w.magic(kContainerMagic);
    w.u32(kContainerVersion);
    w.u32(static_cast<std::uint32_t>(set.dim()));
    w.u32(static_cast<std::uint32_t>(set.count()));
    w.u32(static_cast<std::uint32_t>(set.views()));
    w.u32(static_cast<std::uint32_t>(set.classes()));
    for (auto label : set.labels()) {
        w.u32(label);
    }
    for (float x : set.raw_features()) {
        w.f32(x);
    }
    return w.buffer();
}

EmbeddingSet decode_container(std::span<const unsigned char> bytes, const std::string& context) {
    binio::Reader r(bytes, context);
    r.expect_magic(kContainerMagic);
    const auto version = r.u32();
    if (version != kContainerVersion) {
        fail(ErrorKind::VersionUnsupported, context + ": version " + std::to_string(version));
    }
    const std::uint64_t dim = r.u32();
    const std::uint64_t count = r.u32();
    const std::uint64_t views = r.u32();
    const std::uint64_t classes = r.u32();
    if (dim == 0 || count == 0 || views == 0 || classes == 0) {
        fail(ErrorKind::CorruptLength, context + ": header declares an empty dimension");
    }
    // u32 factors: count*views*dim fits in 96 bits, so check before multiplying.
    const std::uint64_t max_elems = std::numeric_limits<std::uint64_t>::max() / 4;
    if (count * views > max_elems / dim) {
        fail(ErrorKind::CorruptLength, context + ": declared size overflows");
    }
    const std::uint64_t elems = count * views * dim;
    const std::uint64_t expected = count * 4 + elems * 4;
    if (r.remaining() != expected) {
        fail(ErrorKind::CorruptLength, context + ": payload is " + std::to_string(r.remaining()) +
                                           " bytes, header implies " + std::to_string(expected));
    }
    std::vector<std::uint32_t> labels(count);
    for (auto& l : labels) {
        l = r.u32();
    }
    std::vector<float> feats(elems);
    for (auto& x : feats) {
        x = r.f32();
    }
    return EmbeddingSet(dim, views, classes, std::move(labels), std::move(feats));
}

EmbeddingSet read_container(const std::filesystem::path& path) {
    const auto bytes = binio::read_file(path);
    return decode_container(bytes, path.string());
}

void write_container(const EmbeddingSet& set, const std::filesystem::path& path) {
    binio::write_file(path, encode_container(set));
}

std::filesystem::path manifest_path_for(const std::filesystem::path& container) {
    auto p = container;
    p.replace_extension(".json");
    return p;
}

Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorKind::IoFailure, "cannot open manifest " + path.string());
    }
    Manifest m;
    try {
        const auto j = nlohmann::json::parse(in);
        m.dataset = j.at("dataset").get<std::string>();
        m.classes = j.at("classes").get<std::vector<std::string>>();
        m.splits = j.at("splits").get<std::map<std::string, std::vector<std::uint32_t>>>();
        m.model = j.at("model").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::MalformedMetadata, path.string() + ": " + e.what());
    }
    return m;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
    nlohmann::json j;
    j["dataset"] = manifest.dataset;
    j["classes"] = manifest.classes;
    j["splits"] = manifest.splits;
    j["model"] = manifest.model;
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        fail(ErrorKind::IoFailure, "cannot write manifest " + path.string());
    }
    out << j.dump(2) << '\n';
}

void validate_manifest(const Manifest& manifest, const EmbeddingSet& set) {
    if (manifest.classes.size() != set.classes()) {
        fail(ErrorKind::ClassSetMismatch, "manifest lists " + std::to_string(manifest.classes.size()) +
                                              " classes, container has " + std::to_string(set.classes()));
    }
    for (const auto& [name, indices] : manifest.splits) {
        for (auto i : indices) {
            if (i >= set.count()) {
                fail(ErrorKind::MalformedMetadata,
                     "split \"" + name + "\" index " + std::to_string(i) + " out of range");
            }
        }
    }
}

std::vector<std::uint32_t> all_indices(const EmbeddingSet& set) {
    std::vector<std::uint32_t> idx(set.count());
    std::iota(idx.begin(), idx.end(), std::uint32_t{0});
    return idx;
}

std::vector<std::uint32_t> FewShotSelection::flattened() const {
    std::vector<std::uint32_t> out;
    for (const auto& cls : per_class) {
        out.insert(out.end(), cls.begin(), cls.end());
    }
    return out;
}

FewShotSelection sample_few_shot(const EmbeddingSet& set, std::span<const std::uint32_t> split,
                                 std::size_t shots, std::uint64_t seed) {
    if (shots == 0) {
        fail(ErrorKind::InvalidArgument, "shots must be at least 1");
    }
    std::vector<std::vector<std::uint32_t>> members(set.classes());
    for (auto i : split) {
        if (i >= set.count()) {
            fail(ErrorKind::InvalidArgument, "split index " + std::to_string(i) + " out of range");
        }
        members[set.label(i)].push_back(i);
    }

    FewShotSelection sel;
    sel.shots = shots;
    sel.seed = seed;
    sel.per_class.resize(set.classes());
    for (std::size_t c = 0; c < set.classes(); ++c) {
        auto& cand = members[c];
        std::sort(cand.begin(), cand.end());
        cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
        if (cand.size() < shots) {
            throw InsufficientShotsError(c, cand.size(), shots);
        }
        Rng rng(seed, "fewshot", c);
        for (std::size_t i = 0; i < shots; ++i) {
            const auto j = i + static_cast<std::size_t>(rng.below(cand.size() - i));
            std::swap(cand[i], cand[j]);
        }
        cand.resize(shots);
        std::sort(cand.begin(), cand.end());
        sel.per_class[c] = std::move(cand);
    }
    return sel;
}

std::vector<double> rotate_pairs(std::span<const double> v, double angle) {
    std::vector<double> out(v.begin(), v.end());
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    for (std::size_t i = 0; i + 1 < v.size(); i += 2) {
        out[i] = c * v[i] - s * v[i + 1];
        out[i + 1] = s * v[i] + c * v[i + 1];
    }
    return out;
}

namespace {

EmbeddingSet sample_around(const Matrix& means, const SynthConfig& cfg, std::string_view stream) {
    const std::size_t dim = cfg.dim;
    const std::size_t nuisance = cfg.nuisance_dims > 0 ? std::min(cfg.nuisance_dims, dim)
                                                       : std::max<std::size_t>(1, dim / 8);
    std::vector<double> sigma(dim);
    for (std::size_t d = 0; d < dim; ++d) {
        sigma[d] = cfg.noise * (d < nuisance ? cfg.nuisance_gain : cfg.base_gain);
    }

    Rng rng(cfg.seed, stream);
    std::vector<std::uint32_t> labels;
    std::vector<float> feats;
    labels.reserve(cfg.classes * cfg.per_class);
    feats.reserve(cfg.classes * cfg.per_class * cfg.views * dim);
    std::vector<double> x(dim);
    for (std::size_t c = 0; c < cfg.classes; ++c) {
        const auto mean = means.row(c);
        for (std::size_t k = 0; k < cfg.per_class; ++k) {
            labels.push_back(static_cast<std::uint32_t>(c));
            std::vector<double> clean;
            for (;;) {
                for (std::size_t d = 0; d < dim; ++d) {
                    x[d] = mean[d] + (sigma[d] > 0.0 ? sigma[d] * rng.normal() : 0.0);
                }
                if (norm2(x) >= 1e-6) {
                    break;
                }
            }
            clean = normalized(x);
            for (double v : clean) {
                feats.push_back(static_cast<float>(v));
            }
            for (std::size_t v = 1; v < cfg.views; ++v) {
                for (std::size_t d = 0; d < dim; ++d) {
                    x[d] = clean[d] + cfg.view_jitter * rng.normal();
                }
                for (double e : normalized(x)) {
                    feats.push_back(static_cast<float>(e));
                }
            }
        }
    }
    return EmbeddingSet(dim, cfg.views, cfg.classes, std::move(labels), std::move(feats));
}

} // namespace

SyntheticBenchmark generate_synthetic(const SynthConfig& cfg) {
    if (cfg.dim < 2 || cfg.classes < 2) {
        fail(ErrorKind::InvalidArgument, "synthetic benchmark needs D >= 2 and C >= 2");
    }
    if (cfg.per_class == 0 || cfg.views == 0) {
        fail(ErrorKind::InvalidArgument, "synthetic benchmark needs per_class >= 1 and views >= 1");
    }
    SyntheticBenchmark out;
    out.means = Matrix(cfg.classes, cfg.dim);
    out.shifted_means = Matrix(cfg.classes, cfg.dim);
    Rng mean_rng(cfg.seed, "synth-means");
    for (std::size_t c = 0; c < cfg.classes; ++c) {
        const auto m = mean_rng.unit_vector(cfg.dim);
        std::copy(m.begin(), m.end(), out.means.row(c).begin());
        const auto shifted = cfg.shift_angle == 0.0 ? m : normalized(rotate_pairs(m, cfg.shift_angle));
        std::copy(shifted.begin(), shifted.end(), out.shifted_means.row(c).begin());
    }
    out.train = sample_around(out.means, cfg, "synth-train");
    out.id_test = sample_around(out.means, cfg, "synth-id");
    out.ood_test = sample_around(out.shifted_means, cfg, "synth-ood");
    return out;
}

} // namespace sadapt
