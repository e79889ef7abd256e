#pragma once

#include "sadapt/dataio.hpp"
#include "sadapt/heads.hpp"
#include "sadapt/numerics.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sadapt {

/// Residual MLP adapter A(x) = W2·gelu(W1·x + b1) + b2.
struct AdapterParams {
    std::size_t dim = 0;
    std::size_t hidden = 0;
    Matrix w1;              // H×D
    std::vector<double> b1; // H
    Matrix w2;              // D×H
    std::vector<double> b2; // D

    AdapterParams() = default;
    AdapterParams(std::size_t dim, std::size_t hidden);

    std::size_t parameter_count() const noexcept { return 2 * dim * hidden + hidden + dim; }
    bool all_finite() const noexcept;

    /// Throws ShapeMismatch unless every array matches (dim, hidden).
    void validate() const;

    friend bool operator==(const AdapterParams&, const AdapterParams&) = default;
};

/// Flat parameter order: W1, b1, W2, b2 (row-major).
std::vector<double> flatten(const AdapterParams& p);
void assign_flat(AdapterParams& p, std::span<const double> flat);

std::vector<double> adapter_forward(const AdapterParams& p, std::span<const double> x);

/// f = (x + r·a)/|x + r·a|. Returns x itself when x + r·a == x (r = 0 or a = 0).
std::vector<double> blend(std::span<const double> x, std::span<const double> a, double r);

struct BackwardResult {
    double loss = 0.0;
    AdapterParams grad;
};

/// Loss and exact parameter gradients for one sample through
/// adapter -> blend(r) -> head logits -> label-smoothed cross-entropy.
BackwardResult adapter_backward(const AdapterParams& p, std::span<const double> x,
                                const ClassifierHead& head, std::size_t target, double eps, double r);

/// Loss only; same path as adapter_backward.
double adapter_loss(const AdapterParams& p, std::span<const double> x, const ClassifierHead& head,
                    std::size_t target, double eps, double r);

inline constexpr std::array<double, 3> kLearningRateGrid{2e-3, 1e-3, 5e-4};
inline constexpr std::array<double, 3> kWeightDecayGrid{1e-3, 1e-2, 5e-2};
inline constexpr std::array<double, 4> kAugStrengthGrid{0.25, 0.5, 0.75, 1.0};
inline constexpr std::uint32_t kRedMin = 2;
inline constexpr std::uint32_t kRedMax = 10;
inline constexpr double kLabelSmoothing = 0.1;
inline constexpr double kAugNoiseSigma = 0.02;

enum class MaskStrategy { NoMask, Mask };
enum class MaskMode { Auto, Mask, NoMask };

/// Auto resolves to no-mask below 8 shots and mask from 8 shots on.
MaskStrategy resolve_mask(MaskMode mode, std::size_t shots) noexcept;

std::string to_string(MaskStrategy m);
MaskStrategy mask_strategy_from_string(const std::string& s);
MaskMode mask_mode_from_string(const std::string& s);

struct HyperConfig {
    std::uint32_t red = 4;
    double lr = 1e-3;
    double weight_decay = 1e-2;
    double aug_strength = 0.5;
    std::uint64_t seed = 0;
    std::size_t epochs = 0;
    std::size_t batch_size = 32;
    double train_r = 1.0;
    MaskStrategy mask = MaskStrategy::NoMask;

    friend bool operator==(const HyperConfig&, const HyperConfig&) = default;
};

struct HyperOverrides {
    std::optional<std::uint32_t> red;
    std::optional<double> lr;
    std::optional<double> weight_decay;
    std::optional<double> aug_strength;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> batch_size;
    std::optional<double> train_r;
    std::optional<MaskStrategy> mask;

    /// Parses "key=value" with key in {red, lr, wd|weight_decay, s|aug_strength,
    /// seed, epochs, batch_size, train_r, mask}.
    void apply(const std::string& assignment);
};

/// Draws red, lr, wd, s and seed (always in that order, always all five) from
/// stream (base_seed, "hyper", component_index); overrides then pin fields.
HyperConfig sample_hyperconfig(std::uint64_t base_seed, std::uint64_t component_index,
                               const HyperOverrides& overrides = {});

/// H = floor(D/red); W1 ~ U(±1/√D), W2 ~ U(±1/√H), zero biases; stream (seed, "init").
AdapterParams init_adapter(std::size_t dim, std::uint32_t red, std::uint64_t seed);

struct TrainRecord {
    HyperConfig config;
    std::optional<double> final_loss;
    std::vector<double> loss_trace; // mean per-sample loss per epoch
    double wall_seconds = 0.0;
};

struct TrainHead {
    enum class Kind { Imported, Prototype };
    Kind kind = Kind::Prototype;
    ClassifierHead imported;                // used when kind == Imported
    double prototype_scale = kDefaultLogitScale;

    static TrainHead from_import(ClassifierHead head) {
        TrainHead h;
        h.kind = Kind::Imported;
        h.imported = std::move(head);
        return h;
    }
    static TrainHead prototypes(double scale = kDefaultLogitScale) {
        TrainHead h;
        h.prototype_scale = scale;
        return h;
    }
};

struct TrainResult {
    AdapterParams params;
    TrainRecord record;
    double scale = kDefaultLogitScale;
};

/// Trains one component on the few-shot selection. Embeddings and the head
/// stay frozen; all randomness comes from streams of cfg.seed.
TrainResult train_component(const EmbeddingSet& set, const FewShotSelection& selection,
                            const TrainHead& head, const HyperConfig& cfg);

} // namespace sadapt
