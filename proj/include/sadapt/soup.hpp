#pragma once

#include "sadapt/adapter.hpp"
#include "sadapt/checkpoint.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace sadapt {

/// K independently trained adapters sharing D; hidden widths may differ.
class Soup {
public:
    /// Throws ShapeMismatch when empty or when the components disagree on D.
    explicit Soup(std::vector<AdapterParams> components);

    std::size_t size() const noexcept { return m_components.size(); }
    std::size_t dim() const noexcept { return m_components.front().dim; }
    const std::vector<AdapterParams>& components() const noexcept { return m_components; }
    const AdapterParams& operator[](std::size_t j) const noexcept { return m_components[j]; }

private:
    std::vector<AdapterParams> m_components;
};

/// (1/K)·Σ_j A_j(x), summed in ascending component order.
std::vector<double> soup_forward(const Soup& soup, std::span<const double> x);

/// One adapter equal to the soup: W1 and b1 stacked, W2 = (1/K)[W2^1 … W2^K],
/// b2 = (1/K)Σ b2^j, hidden width Σ H_j.
AdapterParams reparameterize(const Soup& soup);

/// Σ_j (2·H_j·D + H_j) + D.
std::size_t reparameterized_parameter_count(const Soup& soup) noexcept;

/// Max over `trials` seeded random unit inputs of max_d |merged(x)_d − soup(x)_d|.
/// Throws EquivalenceViolationError above `tolerance`.
double verify_equivalence(const Soup& soup, const AdapterParams& merged, std::size_t trials,
                          double tolerance, std::uint64_t seed = 0);
/// Same, against reparameterize(soup) in 64-bit.
double verify_equivalence(const Soup& soup, std::size_t trials, double tolerance, std::uint64_t seed = 0);

struct SoupSource {
    Soup soup;
    std::vector<std::filesystem::path> paths;  // load order
    std::vector<std::string> checksums;        // per source file
    double scale = kDefaultLogitScale;         // scale recorded by the first component
};

/// Loads components in the given order. DimensionMismatch names the first file
/// whose D differs from the first component's.
SoupSource soup_from_checkpoints(std::span<const std::filesystem::path> paths);

/// Reparameterized checkpoint; the trailer records K, the source checksums and
/// the per-component hidden widths.
Checkpoint merged_checkpoint(const SoupSource& source, const AdapterParams& merged);

} // namespace sadapt
