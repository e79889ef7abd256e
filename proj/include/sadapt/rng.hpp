#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace sadapt {

inline constexpr std::uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ULL;

/// SplitMix64 finalizer (Steele, Lea & Flood). Constants 0xbf58476d1ce4e5b9
/// and 0x94d049bb133111eb, shifts 30/27/31.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// FNV-1a 64-bit over raw bytes.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes) noexcept;
std::uint64_t fnv1a64(std::string_view text) noexcept;

/// Seed of an independent per-purpose stream: mix(base_seed, purpose_tag, index).
///
///   s = mix64(base + gamma)
///   s = mix64(s ^ fnv1a64(tag))
///   s = mix64(s + (index + 1) * gamma)
std::uint64_t stream_seed(std::uint64_t base_seed, std::string_view tag, std::uint64_t index) noexcept;

/// Counter-based SplitMix64 generator. Every draw is a pure function of the
/// seed and the number of prior draws, so sequences are identical on every
/// platform. Only integer arithmetic is used except in normal(), which relies
/// on std::log/std::cos/std::sqrt.
class Rng {
public:
    explicit Rng(std::uint64_t seed) noexcept : m_state(seed) {}
    Rng(std::uint64_t base_seed, std::string_view tag, std::uint64_t index = 0) noexcept
        : m_state(stream_seed(base_seed, tag, index)) {}

    std::uint64_t next_u64() noexcept {
        m_state += kGoldenGamma;
        return mix64(m_state);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n); unbiased by rejection. n must be > 0.
    std::uint64_t below(std::uint64_t n) noexcept;

    /// Standard normal via Box-Muller (one value per call).
    double normal() noexcept;

    template <typename T>
    void shuffle(std::vector<T>& items) noexcept {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    /// Uniformly random point on the unit sphere S^{dim-1}.
    std::vector<double> unit_vector(std::size_t dim);

private:
    std::uint64_t m_state;
};

} // namespace sadapt
