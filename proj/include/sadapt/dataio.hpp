#pragma once

#include "sadapt/numerics.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace sadapt {

inline constexpr double kLoadNormTolerance = 1e-4;

/// N samples, V views each, of unit-norm D-dim features with labels in [0, C).
///
/// Features are kept as stored (32-bit) and as a 64-bit re-normalized copy.
/// View 0 is the clean view; views 1..V-1 are augmented embeddings.
class EmbeddingSet {
public:
    EmbeddingSet() = default;

    /// Validates shapes, labels and unit norms (tolerance 1e-4). Throws
    /// NormViolation naming the first offending sample/view.
    EmbeddingSet(std::size_t dim, std::size_t views, std::size_t classes,
                 std::vector<std::uint32_t> labels, std::vector<float> features);

    std::size_t dim() const noexcept { return m_dim; }
    std::size_t count() const noexcept { return m_labels.size(); }
    std::size_t views() const noexcept { return m_views; }
    std::size_t classes() const noexcept { return m_classes; }

    std::uint32_t label(std::size_t sample) const noexcept { return m_labels[sample]; }
    const std::vector<std::uint32_t>& labels() const noexcept { return m_labels; }

    std::span<const float> raw(std::size_t sample, std::size_t view = 0) const noexcept {
        return {m_raw.data() + (sample * m_views + view) * m_dim, m_dim};
    }
    std::span<const double> unit(std::size_t sample, std::size_t view = 0) const noexcept {
        return {m_unit.data() + (sample * m_views + view) * m_dim, m_dim};
    }
    const std::vector<float>& raw_features() const noexcept { return m_raw; }

    /// Sub-set holding only the given samples (all views), in the given order.
    EmbeddingSet subset(std::span<const std::uint32_t> samples) const;

private:
    std::size_t m_dim = 0;
    std::size_t m_views = 0;
    std::size_t m_classes = 0;
    std::vector<std::uint32_t> m_labels;
    std::vector<float> m_raw;
    std::vector<double> m_unit;
};

/// Container layout (little-endian): "SADP", u32 version=1, u32 D, N, V, C,
/// N×u32 labels, N×V×D float32 features (sample-major, then view, then dim).
std::vector<unsigned char> encode_container(const EmbeddingSet& set);
EmbeddingSet decode_container(std::span<const unsigned char> bytes, const std::string& context = "container");

EmbeddingSet read_container(const std::filesystem::path& path);
void write_container(const EmbeddingSet& set, const std::filesystem::path& path);

struct Manifest {
    std::string dataset;
    std::vector<std::string> classes;
    std::map<std::string, std::vector<std::uint32_t>> splits;
    std::string model;

    friend bool operator==(const Manifest&, const Manifest&) = default;
};

/// The manifest sits next to its container: "train.sadp" -> "train.json".
std::filesystem::path manifest_path_for(const std::filesystem::path& container);

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

/// Checks class count and split index ranges against the set.
void validate_manifest(const Manifest& manifest, const EmbeddingSet& set);

/// Indices 0..N-1.
std::vector<std::uint32_t> all_indices(const EmbeddingSet& set);

struct FewShotSelection {
    std::size_t shots = 0;
    std::uint64_t seed = 0;
    std::vector<std::vector<std::uint32_t>> per_class; // ascending sample indices

    /// Class-major concatenation of per_class.
    std::vector<std::uint32_t> flattened() const;

    friend bool operator==(const FewShotSelection&, const FewShotSelection&) = default;
};

/// Per class: the split's members of that class in ascending index order, a
/// partial Fisher-Yates draw of `shots` of them from stream
/// (seed, "fewshot", class), then sorted. Depends only on the class's own
/// indices, never on where other classes' samples are stored.
FewShotSelection sample_few_shot(const EmbeddingSet& set, std::span<const std::uint32_t> split,
                                 std::size_t shots, std::uint64_t seed);

struct SynthConfig {
    std::size_t classes = 10;
    std::size_t dim = 32;
    std::size_t per_class = 200;
    double shift_angle = 0.3; // radians
    double noise = 0.3;
    std::uint64_t seed = 0;
    std::size_t views = 1;
    // Noise is anisotropic: the first nuisance_dims coordinates (default
    // max(1, D/8)) get standard deviation noise·nuisance_gain, the rest
    // noise·base_gain. Nearest-prototype scoring is hurt by the high-variance
    // nuisance directions; an adapter can learn to suppress them.
    std::size_t nuisance_dims = 0;
    double nuisance_gain = 3.0;
    double base_gain = 0.5;
    double view_jitter = 0.05; // extra views: normalize(view0 + jitter·N(0, I))
};

struct SyntheticBenchmark {
    EmbeddingSet train;
    EmbeddingSet id_test;
    EmbeddingSet ood_test;
    Matrix means;         // C×D unit rows
    Matrix shifted_means; // means rotated by shift_angle
};

/// Rotation by `angle` in each coordinate plane (0,1), (2,3), ...; every
/// vector in an even dimension is turned by exactly `angle`.
std::vector<double> rotate_pairs(std::span<const double> v, double angle);

SyntheticBenchmark generate_synthetic(const SynthConfig& config);

} // namespace sadapt
