#include "sadapt/adapter.hpp"

#include "sadapt/error.hpp"
#include "sadapt/rng.hpp"

#include <chrono>
#include <cmath>
#include <optional>

namespace sadapt {

namespace {

struct TrainSample {
    std::uint32_t index;
    std::uint32_t cls;
    std::uint32_t position; // rank within the class's selection (prompt index)
};

// Feature-space stand-in for image augmentation: an augmented view with
// probability s/2 when the set has several, otherwise N(0, (0.02·s)²) noise.
std::vector<double> augmented_input(const EmbeddingSet& set, std::uint32_t sample, double strength,
                                    Rng& rng) {
    if (set.views() > 1) {
        std::size_t view = 0;
        if (rng.uniform() < strength * 0.5) {
            view = 1 + static_cast<std::size_t>(rng.below(set.views() - 1));
        }
        const auto x = set.unit(sample, view);
        return {x.begin(), x.end()};
    }
    const auto clean = set.unit(sample, 0);
    std::vector<double> x(clean.begin(), clean.end());
    const double sigma = kAugNoiseSigma * strength;
    for (auto& v : x) {
        v += sigma * rng.normal();
    }
    return normalized(x);
}

void accumulate(AdapterParams& into, const AdapterParams& g) {
    auto add = [](std::span<double> dst, std::span<const double> src) {
        for (std::size_t i = 0; i < dst.size(); ++i) {
            dst[i] += src[i];
        }
    };
    add(into.w1.values(), g.w1.values());
    add(into.b1, g.b1);
    add(into.w2.values(), g.w2.values());
    add(into.b2, g.b2);
}

void scale_all(AdapterParams& p, double factor) {
    for (auto& v : p.w1.values()) v *= factor;
    for (auto& v : p.b1) v *= factor;
    for (auto& v : p.w2.values()) v *= factor;
    for (auto& v : p.b2) v *= factor;
}

} // namespace

TrainResult train_component(const EmbeddingSet& set, const FewShotSelection& selection,
                            const TrainHead& train_head, const HyperConfig& cfg) {
    const auto started = std::chrono::steady_clock::now();
    if (selection.per_class.size() != set.classes()) {
        fail(ErrorKind::ClassSetMismatch, "selection class count differs from embedding set");
    }
    if (cfg.batch_size == 0) {
        fail(ErrorKind::InvalidArgument, "batch_size must be at least 1");
    }

    TrainResult result;
    result.params = init_adapter(set.dim(), cfg.red, cfg.seed);
    result.record.config = cfg;

    std::vector<TrainSample> samples;
    for (std::size_t c = 0; c < selection.per_class.size(); ++c) {
        const auto& members = selection.per_class[c];
        for (std::size_t j = 0; j < members.size(); ++j) {
            if (members[j] >= set.count() || set.label(members[j]) != c) {
                fail(ErrorKind::InvalidArgument, "selection entry " + std::to_string(members[j]) +
                                                     " does not carry label " + std::to_string(c));
            }
            samples.push_back({members[j], static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(j)});
        }
    }
    if (samples.empty()) {
        fail(ErrorKind::InsufficientShots, "selection is empty");
    }

    // Frozen head. Prototype heads come from the clean views of the selection.
    std::optional<PrototypeCache> cache;
    ClassifierHead head;
    if (train_head.kind == TrainHead::Kind::Imported) {
        head = train_head.imported;
        if (head.dim() != set.dim() || head.classes() != set.classes()) {
            fail(ErrorKind::ClassSetMismatch, "imported head shape does not match the embedding set");
        }
    } else {
        cache.emplace(selection_prompts(set, selection), train_head.prototype_scale);
        head = cache->unmasked();
    }
    result.scale = head.scale;
    const bool masked = cache.has_value() && cfg.mask == MaskStrategy::Mask;

    if (cfg.epochs == 0) {
        result.record.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        return result;
    }

    auto& params = result.params;
    std::array<OptimState, 4> optim{
        OptimState(params.w1.size(), cfg.lr, cfg.weight_decay),
        OptimState(params.b1.size(), cfg.lr, cfg.weight_decay),
        OptimState(params.w2.size(), cfg.lr, cfg.weight_decay),
        OptimState(params.b2.size(), cfg.lr, cfg.weight_decay),
    };

    Rng shuffle_rng(cfg.seed, "shuffle");
    Rng aug_rng(cfg.seed, "augment");
    AdapterParams grad_sum(params.dim, params.hidden);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(samples);
        double epoch_loss = 0.0;
        for (std::size_t begin = 0; begin < samples.size(); begin += cfg.batch_size) {
            const std::size_t end = std::min(samples.size(), begin + cfg.batch_size);
            grad_sum = AdapterParams(params.dim, params.hidden);
            for (std::size_t i = begin; i < end; ++i) {
                const auto& s = samples[i];
                const auto x = augmented_input(set, s.index, cfg.aug_strength, aug_rng);

                std::vector<double> saved_row;
                if (masked) {
                    auto row = head.weights.row(s.cls);
                    saved_row.assign(row.begin(), row.end());
                    const auto m = cache->masked_row({s.cls, s.position});
                    std::copy(m.begin(), m.end(), row.begin());
                }
                const auto bw = adapter_backward(params, x, head, s.cls, kLabelSmoothing, cfg.train_r);
                if (masked) {
                    std::copy(saved_row.begin(), saved_row.end(), head.weights.row(s.cls).begin());
                }
                epoch_loss += bw.loss;
                accumulate(grad_sum, bw.grad);
            }
            scale_all(grad_sum, 1.0 / static_cast<double>(end - begin));
            adamw_step(params.w1.values(), grad_sum.w1.values(), optim[0]);
            adamw_step(params.b1, grad_sum.b1, optim[1]);
            adamw_step(params.w2.values(), grad_sum.w2.values(), optim[2]);
            adamw_step(params.b2, grad_sum.b2, optim[3]);
        }
        epoch_loss /= static_cast<double>(samples.size());
        if (!std::isfinite(epoch_loss) || !params.all_finite()) {
            fail(ErrorKind::NumericalFailure, "training diverged in epoch " + std::to_string(epoch));
        }
        result.record.loss_trace.push_back(epoch_loss);
    }
    result.record.final_loss = result.record.loss_trace.back();
    result.record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

} // namespace sadapt
