#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace sadapt {

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : m_rows(rows), m_cols(cols), m_data(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    std::size_t rows() const noexcept { return m_rows; }
    std::size_t cols() const noexcept { return m_cols; }
    std::size_t size() const noexcept { return m_data.size(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return m_data[r * m_cols + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return m_data[r * m_cols + c]; }

    std::span<double> row(std::size_t r) noexcept { return {m_data.data() + r * m_cols, m_cols}; }
    std::span<const double> row(std::size_t r) const noexcept { return {m_data.data() + r * m_cols, m_cols}; }

    std::span<double> values() noexcept { return m_data; }
    std::span<const double> values() const noexcept { return m_data; }

    bool all_finite() const noexcept;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t m_rows = 0;
    std::size_t m_cols = 0;
    std::vector<double> m_data;
};

inline constexpr double kDegenerateNorm = 1e-12;

double dot(std::span<const double> a, std::span<const double> b) noexcept;
double norm2(std::span<const double> v) noexcept;

/// y = M·x
std::vector<double> matvec(const Matrix& m, std::span<const double> x);
/// y = Mᵀ·x
std::vector<double> matvec_transposed(const Matrix& m, std::span<const double> x);

/// v/|v|; throws DegenerateVector when |v| < 1e-12.
std::vector<double> normalized(std::span<const double> v);
Matrix normalize_rows(const Matrix& m);

/// Exact GELU, 0.5·x·(1 + erf(x/√2)).
double gelu(double x) noexcept;
/// d/dx gelu(x) = Φ(x) + x·φ(x).
double gelu_derivative(double x) noexcept;

std::vector<double> softmax(std::span<const double> z);

/// Index of the largest entry; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> v) noexcept;

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad; // d loss / d logits
};

/// Cross-entropy against the smoothed target q (q_t = 1-eps+eps/m, q_i = eps/m).
LossGrad cross_entropy_label_smoothing(std::span<const double> logits, std::size_t target, double eps);

struct OptimState {
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    std::uint64_t step = 0;
    double lr = 1e-3;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    OptimState() = default;
    OptimState(std::size_t parameter_count, double learning_rate, double decay)
        : first_moment(parameter_count, 0.0), second_moment(parameter_count, 0.0),
          lr(learning_rate), weight_decay(decay) {}
};

/// AdamW with decoupled weight decay: params are first scaled by (1 - lr·wd),
/// then moved by the bias-corrected Adam direction.
void adamw_step(std::span<double> params, std::span<const double> grads, OptimState& state);

struct FdOptions {
    double step = 1e-5;
    std::size_t subset = 50;   // parameters probed; all of them when fewer exist
    std::uint64_t seed = 0;
    double abs_floor = 1e-6;   // denominator floor for near-zero gradients
};

struct FdResult {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    std::size_t checked = 0;

    bool within(double tolerance) const noexcept { return max_rel_error <= tolerance; }
};

/// Compares an analytic gradient against central differences on a random
/// subset of parameters. Relative error is |a - n| / max(|a|, |n|, abs_floor).
FdResult finite_difference_check(const std::function<double(std::span<const double>)>& loss,
                                 std::span<const double> params,
                                 std::span<const double> analytic_grad,
                                 const FdOptions& options = {});

} // namespace sadapt
