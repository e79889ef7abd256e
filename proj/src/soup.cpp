#include "sadapt/soup.hpp"

#include "sadapt/binio.hpp"
#include "sadapt/error.hpp"
#include "sadapt/rng.hpp"

#include <algorithm>
#include <cmath>

namespace sadapt {

Soup::Soup(std::vector<AdapterParams> components) : m_components(std::move(components)) {
    if (m_components.empty()) {
        fail(ErrorKind::ShapeMismatch, "a soup needs at least one component");
    }
    for (std::size_t j = 0; j < m_components.size(); ++j) {
        m_components[j].validate();
        if (m_components[j].dim != m_components.front().dim) {
            fail(ErrorKind::ShapeMismatch, "component " + std::to_string(j) + " has D=" +
                                               std::to_string(m_components[j].dim) + ", expected " +
                                               std::to_string(m_components.front().dim));
        }
    }
}

std::vector<double> soup_forward(const Soup& soup, std::span<const double> x) {
    std::vector<double> mean(soup.dim(), 0.0);
    for (const auto& c : soup.components()) {
        const auto a = adapter_forward(c, x);
        for (std::size_t d = 0; d < mean.size(); ++d) {
            mean[d] += a[d];
        }
    }
    const double k = static_cast<double>(soup.size());
    for (auto& v : mean) {
        v /= k;
    }
    return mean;
}

AdapterParams reparameterize(const Soup& soup) {
    const std::size_t dim = soup.dim();
    std::size_t hidden = 0;
    for (const auto& c : soup.components()) {
        hidden += c.hidden;
    }
    const double k = static_cast<double>(soup.size());

    AdapterParams out(dim, hidden);
    std::size_t offset = 0;
    for (const auto& c : soup.components()) {
        for (std::size_t j = 0; j < c.hidden; ++j) {
            const auto src = c.w1.row(j);
            std::copy(src.begin(), src.end(), out.w1.row(offset + j).begin());
            out.b1[offset + j] = c.b1[j];
        }
        for (std::size_t d = 0; d < dim; ++d) {
            for (std::size_t j = 0; j < c.hidden; ++j) {
                out.w2(d, offset + j) = c.w2(d, j) / k;
            }
        }
        offset += c.hidden;
    }
    for (std::size_t d = 0; d < dim; ++d) {
        double sum = 0.0;
        for (const auto& c : soup.components()) {
            sum += c.b2[d];
        }
        out.b2[d] = sum / k;
    }
    return out;
}

std::size_t reparameterized_parameter_count(const Soup& soup) noexcept {
    std::size_t count = soup.dim();
    for (const auto& c : soup.components()) {
        count += 2 * c.hidden * c.dim + c.hidden;
    }
    return count;
}

double verify_equivalence(const Soup& soup, const AdapterParams& merged, std::size_t trials,
                          double tolerance, std::uint64_t seed) {
    if (trials == 0) {
        fail(ErrorKind::InvalidArgument, "verify_equivalence needs at least one trial");
    }
    if (merged.dim != soup.dim()) {
        fail(ErrorKind::ShapeMismatch, "merged adapter dimension differs from the soup");
    }
    Rng rng(seed, "equivalence");
    double worst = 0.0;
    std::size_t worst_index = 0;
    for (std::size_t t = 0; t < trials; ++t) {
        const auto x = rng.unit_vector(soup.dim());
        const auto a = soup_forward(soup, x);
        const auto b = adapter_forward(merged, x);
        for (std::size_t d = 0; d < a.size(); ++d) {
            const double dev = std::abs(a[d] - b[d]);
            if (!(dev <= worst)) { // also catches NaN
                worst = std::isnan(dev) ? INFINITY : dev;
                worst_index = t;
            }
        }
    }
    if (!(worst <= tolerance)) {
        throw EquivalenceViolationError(worst, worst_index, tolerance);
    }
    return worst;
}

double verify_equivalence(const Soup& soup, std::size_t trials, double tolerance, std::uint64_t seed) {
    return verify_equivalence(soup, reparameterize(soup), trials, tolerance, seed);
}

SoupSource soup_from_checkpoints(std::span<const std::filesystem::path> paths) {
    if (paths.empty()) {
        fail(ErrorKind::InvalidArgument, "no component checkpoints given");
    }
    std::vector<AdapterParams> components;
    std::vector<std::string> checksums;
    double scale = kDefaultLogitScale;
    for (std::size_t j = 0; j < paths.size(); ++j) {
        const auto bytes = binio::read_file(paths[j]);
        auto ckpt = decode_checkpoint(bytes, paths[j].string());
        if (j == 0) {
            scale = ckpt.scale;
        } else if (ckpt.params.dim != components.front().dim) {
            fail(ErrorKind::DimensionMismatch, paths[j].string() + " has D=" + std::to_string(ckpt.params.dim) +
                                                   ", expected " + std::to_string(components.front().dim));
        }
        checksums.push_back(checksum_hex(bytes));
        components.push_back(std::move(ckpt.params));
    }
    return SoupSource{Soup(std::move(components)), {paths.begin(), paths.end()}, std::move(checksums), scale};
}

Checkpoint merged_checkpoint(const SoupSource& source, const AdapterParams& merged) {
    Checkpoint ckpt;
    ckpt.params = merged;
    ckpt.scale = source.scale;
    std::vector<std::size_t> widths;
    for (const auto& c : source.soup.components()) {
        widths.push_back(c.hidden);
    }
    ckpt.meta = {
        {"kind", "reparameterized"},
        {"K", source.soup.size()},
        {"source_checksums", source.checksums},
        {"hidden_widths", widths},
    };
    return ckpt;
}

} // namespace sadapt
