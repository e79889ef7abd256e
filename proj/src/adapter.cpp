#include "sadapt/adapter.hpp"

#include "sadapt/error.hpp"
#include "sadapt/rng.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sadapt {

AdapterParams::AdapterParams(std::size_t dim_, std::size_t hidden_)
    : dim(dim_), hidden(hidden_), w1(hidden_, dim_), b1(hidden_, 0.0), w2(dim_, hidden_), b2(dim_, 0.0) {}

bool AdapterParams::all_finite() const noexcept {
    const auto finite = [](double v) { return std::isfinite(v); };
    return w1.all_finite() && w2.all_finite() && std::all_of(b1.begin(), b1.end(), finite) &&
           std::all_of(b2.begin(), b2.end(), finite);
}

void AdapterParams::validate() const {
    if (hidden == 0 || dim == 0 || w1.rows() != hidden || w1.cols() != dim || b1.size() != hidden ||
        w2.rows() != dim || w2.cols() != hidden || b2.size() != dim) {
        fail(ErrorKind::ShapeMismatch, "adapter arrays do not match D=" + std::to_string(dim) +
                                           ", H=" + std::to_string(hidden));
    }
}

std::vector<double> flatten(const AdapterParams& p) {
    std::vector<double> flat;
    flat.reserve(p.parameter_count());
    flat.insert(flat.end(), p.w1.values().begin(), p.w1.values().end());
    flat.insert(flat.end(), p.b1.begin(), p.b1.end());
    flat.insert(flat.end(), p.w2.values().begin(), p.w2.values().end());
    flat.insert(flat.end(), p.b2.begin(), p.b2.end());
    return flat;
}

void assign_flat(AdapterParams& p, std::span<const double> flat) {
    if (flat.size() != p.parameter_count()) {
        fail(ErrorKind::ShapeMismatch, "flat parameter vector has wrong length");
    }
    auto it = flat.begin();
    const auto take = [&it](std::span<double> dst) {
        std::copy(it, it + static_cast<std::ptrdiff_t>(dst.size()), dst.begin());
        it += static_cast<std::ptrdiff_t>(dst.size());
    };
    take(p.w1.values());
    take(p.b1);
    take(p.w2.values());
    take(p.b2);
}

namespace {

struct ForwardTrace {
    std::vector<double> pre;    // W1·x + b1
    std::vector<double> hidden; // gelu(pre)
    std::vector<double> out;    // a
};

ForwardTrace forward_trace(const AdapterParams& p, std::span<const double> x) {
    if (x.size() != p.dim) {
        fail(ErrorKind::ShapeMismatch, "input has dimension " + std::to_string(x.size()) +
                                           ", adapter expects " + std::to_string(p.dim));
    }
    ForwardTrace t;
    t.pre = matvec(p.w1, x);
    t.hidden.resize(p.hidden);
    for (std::size_t j = 0; j < p.hidden; ++j) {
        t.pre[j] += p.b1[j];
        t.hidden[j] = gelu(t.pre[j]);
    }
    t.out = matvec(p.w2, t.hidden);
    for (std::size_t d = 0; d < p.dim; ++d) {
        t.out[d] += p.b2[d];
    }
    return t;
}

} // namespace

std::vector<double> adapter_forward(const AdapterParams& p, std::span<const double> x) {
    return forward_trace(p, x).out;
}

std::vector<double> blend(std::span<const double> x, std::span<const double> a, double r) {
    if (x.size() != a.size()) {
        fail(ErrorKind::ShapeMismatch, "blend: feature and adapter output dimensions differ");
    }
    std::vector<double> u(x.size());
    bool unchanged = true;
    for (std::size_t d = 0; d < x.size(); ++d) {
        u[d] = x[d] + r * a[d];
        unchanged = unchanged && u[d] == x[d];
    }
    if (unchanged) {
        return {x.begin(), x.end()};
    }
    return normalized(u);
}

BackwardResult adapter_backward(const AdapterParams& p, std::span<const double> x,
                                const ClassifierHead& head, std::size_t target, double eps, double r) {
    if (head.dim() != p.dim) {
        fail(ErrorKind::ShapeMismatch, "head dimension differs from adapter dimension");
    }
    const ForwardTrace t = forward_trace(p, x);

    std::vector<double> u(p.dim);
    for (std::size_t d = 0; d < p.dim; ++d) {
        u[d] = x[d] + r * t.out[d];
    }
    const double u_norm = norm2(u);
    const auto f = blend(x, t.out, r);

    const auto logits = head_logits(head, f);
    auto ce = cross_entropy_label_smoothing(logits, target, eps);

    BackwardResult res;
    res.loss = ce.loss;
    res.grad = AdapterParams(p.dim, p.hidden);

    // dL/df = exp(scale)·Wᵀ·(softmax - q)
    auto g_f = matvec_transposed(head.weights, ce.grad);
    const double s = std::exp(head.scale);
    for (auto& v : g_f) {
        v *= s;
    }
    // Normalization Jacobian: dL/du = (I - f fᵀ)·dL/df / |u|; dL/da = r·dL/du.
    const double radial = dot(f, g_f);
    std::vector<double> g_a(p.dim);
    for (std::size_t d = 0; d < p.dim; ++d) {
        g_a[d] = r * (g_f[d] - f[d] * radial) / u_norm;
    }

    for (std::size_t d = 0; d < p.dim; ++d) {
        auto row = res.grad.w2.row(d);
        for (std::size_t j = 0; j < p.hidden; ++j) {
            row[j] = g_a[d] * t.hidden[j];
        }
    }
    res.grad.b2 = g_a;

    auto g_z = matvec_transposed(p.w2, g_a);
    for (std::size_t j = 0; j < p.hidden; ++j) {
        g_z[j] *= gelu_derivative(t.pre[j]);
        auto row = res.grad.w1.row(j);
        for (std::size_t d = 0; d < p.dim; ++d) {
            row[d] = g_z[j] * x[d];
        }
    }
    res.grad.b1 = std::move(g_z);
    return res;
}

double adapter_loss(const AdapterParams& p, std::span<const double> x, const ClassifierHead& head,
                    std::size_t target, double eps, double r) {
    const auto f = blend(x, adapter_forward(p, x), r);
    return cross_entropy_label_smoothing(head_logits(head, f), target, eps).loss;
}

MaskStrategy resolve_mask(MaskMode mode, std::size_t shots) noexcept {
    switch (mode) {
    case MaskMode::Mask: return MaskStrategy::Mask;
    case MaskMode::NoMask: return MaskStrategy::NoMask;
    case MaskMode::Auto: break;
    }
    return shots < 8 ? MaskStrategy::NoMask : MaskStrategy::Mask;
}

std::string to_string(MaskStrategy m) {
    return m == MaskStrategy::Mask ? "mask" : "no-mask";
}

MaskStrategy mask_strategy_from_string(const std::string& s) {
    if (s == "mask") {
        return MaskStrategy::Mask;
    }
    if (s == "no-mask") {
        return MaskStrategy::NoMask;
    }
    fail(ErrorKind::InvalidArgument, "mask strategy must be mask or no-mask, got \"" + s + "\"");
}

MaskMode mask_mode_from_string(const std::string& s) {
    if (s == "auto") {
        return MaskMode::Auto;
    }
    return mask_strategy_from_string(s) == MaskStrategy::Mask ? MaskMode::Mask : MaskMode::NoMask;
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    std::istringstream is(text);
    is.imbue(std::locale::classic());
    T value{};
    is >> value;
    if (is.fail() || !is.eof()) {
        fail(ErrorKind::InvalidArgument, "override " + key + ": cannot parse \"" + text + "\"");
    }
    return value;
}

} // namespace

void HyperOverrides::apply(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        fail(ErrorKind::InvalidArgument, "override must look like key=value, got \"" + assignment + "\"");
    }
    const std::string key = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);
    if (key == "red") {
        red = parse_number<std::uint32_t>(key, value);
    } else if (key == "lr") {
        lr = parse_number<double>(key, value);
    } else if (key == "wd" || key == "weight_decay") {
        weight_decay = parse_number<double>(key, value);
    } else if (key == "s" || key == "aug_strength") {
        aug_strength = parse_number<double>(key, value);
    } else if (key == "seed") {
        seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "epochs") {
        epochs = parse_number<std::size_t>(key, value);
    } else if (key == "batch_size") {
        batch_size = parse_number<std::size_t>(key, value);
    } else if (key == "train_r") {
        train_r = parse_number<double>(key, value);
    } else if (key == "mask") {
        mask = mask_strategy_from_string(value);
    } else {
        fail(ErrorKind::InvalidArgument, "unknown override key \"" + key + "\"");
    }
}

HyperConfig sample_hyperconfig(std::uint64_t base_seed, std::uint64_t component_index,
                               const HyperOverrides& overrides) {
    Rng rng(base_seed, "hyper", component_index);
    HyperConfig cfg;
    cfg.red = kRedMin + static_cast<std::uint32_t>(rng.below(kRedMax - kRedMin + 1));
    cfg.lr = kLearningRateGrid[rng.below(kLearningRateGrid.size())];
    cfg.weight_decay = kWeightDecayGrid[rng.below(kWeightDecayGrid.size())];
    cfg.aug_strength = kAugStrengthGrid[rng.below(kAugStrengthGrid.size())];
    cfg.seed = rng.next_u64();

    cfg.red = overrides.red.value_or(cfg.red);
    cfg.lr = overrides.lr.value_or(cfg.lr);
    cfg.weight_decay = overrides.weight_decay.value_or(cfg.weight_decay);
    cfg.aug_strength = overrides.aug_strength.value_or(cfg.aug_strength);
    cfg.seed = overrides.seed.value_or(cfg.seed);
    cfg.epochs = overrides.epochs.value_or(cfg.epochs);
    cfg.batch_size = overrides.batch_size.value_or(cfg.batch_size);
    cfg.train_r = overrides.train_r.value_or(cfg.train_r);
    cfg.mask = overrides.mask.value_or(cfg.mask);
    return cfg;
}

AdapterParams init_adapter(std::size_t dim, std::uint32_t red, std::uint64_t seed) {
    if (red == 0 || dim / red < 1) {
        fail(ErrorKind::RedTooLarge, "red=" + std::to_string(red) + " leaves no hidden units for D=" +
                                         std::to_string(dim));
    }
    AdapterParams p(dim, dim / red);
    Rng rng(seed, "init");
    const double bound1 = 1.0 / std::sqrt(static_cast<double>(dim));
    const double bound2 = 1.0 / std::sqrt(static_cast<double>(p.hidden));
    for (auto& w : p.w1.values()) {
        w = rng.uniform(-bound1, bound1);
    }
    for (auto& w : p.w2.values()) {
        w = rng.uniform(-bound2, bound2);
    }
    return p;
}

} // namespace sadapt
