#include "sadapt/rng.hpp"

#include <cmath>
#include <numbers>

namespace sadapt {

std::uint64_t fnv1a64(std::span<const unsigned char> bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a64(std::string_view text) noexcept {
    return fnv1a64(std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

std::uint64_t stream_seed(std::uint64_t base_seed, std::string_view tag, std::uint64_t index) noexcept {
    std::uint64_t s = mix64(base_seed + kGoldenGamma);
    s = mix64(s ^ fnv1a64(tag));
    return mix64(s + (index + 1) * kGoldenGamma);
}

std::uint64_t Rng::below(std::uint64_t n) noexcept {
    // Reject the low 2^64 mod n values so the remainder is exactly uniform.
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
        const std::uint64_t r = next_u64();
        if (r >= threshold) {
            return r % n;
        }
    }
}

double Rng::normal() noexcept {
    const double u1 = 1.0 - uniform(); // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<double> Rng::unit_vector(std::size_t dim) {
    std::vector<double> v(dim);
    for (;;) {
        double sq = 0.0;
        for (auto& x : v) {
            x = normal();
            sq += x * x;
        }
        if (sq > 1e-24) {
            const double inv = 1.0 / std::sqrt(sq);
            for (auto& x : v) {
                x *= inv;
            }
            return v;
        }
    }
}

} // namespace sadapt
