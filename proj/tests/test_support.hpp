#pragma once

#include "sadapt/adapter.hpp"
#include "sadapt/error.hpp"
#include "sadapt/heads.hpp"
#include "sadapt/log.hpp"
#include "sadapt/rng.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <span>
#include <unistd.h>
#include <string>
#include <vector>

namespace sadapt::testing {

/// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        m_path = std::filesystem::temp_directory_path() /
                 ("sadapt_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(m_path);
        std::filesystem::create_directories(m_path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(m_path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return m_path; }
    std::filesystem::path operator/(const std::string& name) const { return m_path / name; }

private:
    std::filesystem::path m_path;
};

inline AdapterParams random_adapter(Rng& rng, std::size_t dim, std::size_t hidden, double spread = 0.5) {
    AdapterParams p(dim, hidden);
    for (auto& v : p.w1.values()) v = rng.uniform(-spread, spread);
    for (auto& v : p.b1) v = rng.uniform(-spread, spread);
    for (auto& v : p.w2.values()) v = rng.uniform(-spread, spread);
    for (auto& v : p.b2) v = rng.uniform(-spread, spread);
    return p;
}

inline ClassifierHead random_head(Rng& rng, std::size_t classes, std::size_t dim, double scale) {
    ClassifierHead h;
    h.weights = Matrix(classes, dim);
    for (std::size_t c = 0; c < classes; ++c) {
        const auto row = rng.unit_vector(dim);
        std::copy(row.begin(), row.end(), h.weights.row(c).begin());
    }
    h.scale = scale;
    return h;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a[i] - b[i]));
    }
    return worst;
}

/// Kind of the sadapt::Error thrown by fn, or nullopt when nothing is thrown.
template <typename Fn>
std::optional<ErrorKind> error_kind(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    return std::nullopt;
}

/// Collects warnings for the lifetime of the object.
class WarningCapture {
public:
    WarningCapture() {
        set_warning_sink([this](const std::string& m) { messages.push_back(m); });
    }
    ~WarningCapture() { set_warning_sink({}); }

    std::vector<std::string> messages;
};

} // namespace sadapt::testing
