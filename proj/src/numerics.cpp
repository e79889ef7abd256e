#include "sadapt/numerics.hpp"

#include "sadapt/error.hpp"
#include "sadapt/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

namespace sadapt {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : m_rows(rows), m_cols(cols), m_data(std::move(data)) {
    if (m_data.size() != rows * cols) {
        fail(ErrorKind::ShapeMismatch, "matrix data length " + std::to_string(m_data.size()) +
                                           " != " + std::to_string(rows) + "x" + std::to_string(cols));
    }
}

bool Matrix::all_finite() const noexcept {
    return std::all_of(m_data.begin(), m_data.end(), [](double x) { return std::isfinite(x); });
}

double dot(std::span<const double> a, std::span<const double> b) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

double norm2(std::span<const double> v) noexcept {
    return std::sqrt(dot(v, v));
}

std::vector<double> matvec(const Matrix& m, std::span<const double> x) {
    if (x.size() != m.cols()) {
        fail(ErrorKind::ShapeMismatch, "matvec: vector length " + std::to_string(x.size()) +
                                           " != cols " + std::to_string(m.cols()));
    }
    std::vector<double> y(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        y[r] = dot(m.row(r), x);
    }
    return y;
}

std::vector<double> matvec_transposed(const Matrix& m, std::span<const double> x) {
    if (x.size() != m.rows()) {
        fail(ErrorKind::ShapeMismatch, "matvec_transposed: vector length " + std::to_string(x.size()) +
                                           " != rows " + std::to_string(m.rows()));
    }
    std::vector<double> y(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto row = m.row(r);
        for (std::size_t c = 0; c < m.cols(); ++c) {
            y[c] += row[c] * x[r];
        }
    }
    return y;
}

std::vector<double> normalized(std::span<const double> v) {
    const double n = norm2(v);
    if (!(n >= kDegenerateNorm)) {
        fail(ErrorKind::DegenerateVector, "vector norm below 1e-12");
    }
    std::vector<double> out(v.begin(), v.end());
    for (auto& x : out) {
        x /= n;
    }
    return out;
}

Matrix normalize_rows(const Matrix& m) {
    Matrix out = m;
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = out.row(r);
        const double n = norm2(row);
        if (!(n >= kDegenerateNorm)) {
            fail(ErrorKind::DegenerateVector, "row " + std::to_string(r) + " has norm below 1e-12");
        }
        for (auto& x : row) {
            x /= n;
        }
    }
    return out;
}

double gelu(double x) noexcept {
    return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 * 0.5));
}

double gelu_derivative(double x) noexcept {
    const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 * 0.5));
    const double pdf = std::exp(-0.5 * x * x) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
    return cdf + x * pdf;
}

std::vector<double> softmax(std::span<const double> z) {
    std::vector<double> p(z.size());
    if (z.empty()) {
        return p;
    }
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        p[i] = std::exp(z[i] - mx);
        sum += p[i];
    }
    for (auto& x : p) {
        x /= sum;
    }
    return p;
}

std::size_t argmax(std::span<const double> v) noexcept {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) {
            best = i;
        }
    }
    return best;
}

LossGrad cross_entropy_label_smoothing(std::span<const double> logits, std::size_t target, double eps) {
    const std::size_t m = logits.size();
    if (target >= m) {
        fail(ErrorKind::InvalidArgument, "target " + std::to_string(target) + " out of range");
    }
    if (!(eps >= 0.0 && eps < 1.0)) {
        fail(ErrorKind::InvalidArgument, "label smoothing must lie in [0, 1)");
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) {
        sum += std::exp(z - mx);
    }
    const double log_norm = mx + std::log(sum);

    const double q_other = eps / static_cast<double>(m);
    const double q_target = 1.0 - eps + q_other;

    LossGrad out;
    out.grad.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double log_p = logits[i] - log_norm;
        const double q = (i == target) ? q_target : q_other;
        out.loss -= q * log_p;
        out.grad[i] = std::exp(log_p) - q;
    }
    return out;
}

void adamw_step(std::span<double> params, std::span<const double> grads, OptimState& state) {
    if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
        state.second_moment.size() != params.size()) {
        fail(ErrorKind::ShapeMismatch, "adamw: parameter, gradient and state sizes differ");
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(state.beta1, t);
    const double correction2 = 1.0 - std::pow(state.beta2, t);
    const double shrink = 1.0 - state.lr * state.weight_decay;

    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g * g;
        const double m_hat = m / correction1;
        const double v_hat = v / correction2;
        params[i] = params[i] * shrink - state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
}

FdResult finite_difference_check(const std::function<double(std::span<const double>)>& loss,
                                 std::span<const double> params,
                                 std::span<const double> analytic_grad,
                                 const FdOptions& options) {
    if (params.size() != analytic_grad.size()) {
        fail(ErrorKind::ShapeMismatch, "finite_difference_check: gradient length differs from params");
    }
    std::vector<std::size_t> indices(params.size());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    if (indices.size() > options.subset) {
        Rng rng(options.seed, "fdcheck");
        rng.shuffle(indices);
        indices.resize(options.subset);
        std::sort(indices.begin(), indices.end());
    }

    std::vector<double> probe(params.begin(), params.end());
    FdResult result;
    for (std::size_t idx : indices) {
        const double saved = probe[idx];
        probe[idx] = saved + options.step;
        const double up = loss(probe);
        probe[idx] = saved - options.step;
        const double down = loss(probe);
        probe[idx] = saved;

        const double numeric = (up - down) / (2.0 * options.step);
        const double analytic = analytic_grad[idx];
        const double denom = std::max({std::abs(analytic), std::abs(numeric), options.abs_floor});
        const double rel = std::abs(analytic - numeric) / denom;
        if (result.checked == 0 || rel > result.max_rel_error) {
            result.max_rel_error = rel;
            result.worst_index = idx;
        }
        ++result.checked;
    }
    return result;
}

} // namespace sadapt
