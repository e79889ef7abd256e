#pragma once

#include "sadapt/dataio.hpp"
#include "sadapt/numerics.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace sadapt {

/// ln(100): CLIP-style logit scale; logits are exp(scale)·(W·f).
inline const double kDefaultLogitScale = std::log(100.0);

enum class HeadOrigin { Prototype, Imported };

struct ClassifierHead {
    Matrix weights; // C×D, unit rows
    double scale = kDefaultLogitScale;
    HeadOrigin origin = HeadOrigin::Prototype;

    std::size_t classes() const noexcept { return weights.rows(); }
    std::size_t dim() const noexcept { return weights.cols(); }
};

/// p̃_i = Σ_j prompts[i].row(j) in ascending j; row i = p̃_i / |p̃_i|.
/// Each Matrix holds one class's prompt embeddings as rows.
ClassifierHead build_prototypes(std::span<const Matrix> prompts, double scale = kDefaultLogitScale);

struct ExcludedPrompt {
    std::size_t cls = 0;
    std::size_t index = 0;
};

/// build_prototypes with one prompt left out of its own class's sum. A class
/// with a single prompt keeps its unmasked prototype (and a warning is emitted).
ClassifierHead build_prototypes_masked(std::span<const Matrix> prompts, ExcludedPrompt excluded,
                                       double scale = kDefaultLogitScale);

/// Prompts for prototype heads built from a few-shot selection: the clean
/// (view 0) embeddings of each class's selected samples.
std::vector<Matrix> selection_prompts(const EmbeddingSet& set, const FewShotSelection& selection);

/// Caches the per-class prompt sums so masked prototype rows cost O(D).
class PrototypeCache {
public:
    explicit PrototypeCache(std::span<const Matrix> prompts, double scale = kDefaultLogitScale);

    const ClassifierHead& unmasked() const noexcept { return m_head; }

    /// Unit prototype of `excluded.cls` with that prompt removed; the unmasked
    /// row when the class has a single prompt.
    std::vector<double> masked_row(ExcludedPrompt excluded) const;

private:
    std::vector<Matrix> m_prompts;
    Matrix m_sums;
    ClassifierHead m_head;
};

/// exp(scale)·(W·f).
std::vector<double> head_logits(const ClassifierHead& head, std::span<const double> f);

struct KnnConfig {
    std::size_t k = 10;
    double temperature = 0.1;
};

struct KnnBank {
    Matrix features; // n×D unit rows
    std::vector<std::uint32_t> labels;
    std::size_t classes = 0;

    std::size_t size() const noexcept { return labels.size(); }
};

KnnBank make_knn_bank(const EmbeddingSet& set, std::span<const std::uint32_t> samples);

/// Σ over the k most cosine-similar bank entries of exp(sim/T)·onehot(label).
/// Ties in similarity go to the lower bank index; k is clamped to the bank size.
std::vector<double> knn_logits(const KnnBank& bank, std::span<const double> x, const KnnConfig& cfg);

/// Head file layout (little-endian): "SHED", u32 version=1, u32 C, u32 D,
/// f64 scale, C×D float32 rows.
struct HeadFile {
    std::uint32_t classes = 0;
    std::uint32_t dim = 0;
    double scale = 0.0;
    std::vector<float> rows;

    friend bool operator==(const HeadFile&, const HeadFile&) = default;
};

std::vector<unsigned char> encode_head_file(const HeadFile& file);
HeadFile decode_head_file(std::span<const unsigned char> bytes, const std::string& context = "head");

HeadFile to_head_file(const ClassifierHead& head);

/// Rows re-normalized in 64-bit; a row below 1e-12 norm is a NormViolation.
ClassifierHead head_from_file(const HeadFile& file);

ClassifierHead import_head(const std::filesystem::path& path);
void export_head(const ClassifierHead& head, const std::filesystem::path& path);

} // namespace sadapt
