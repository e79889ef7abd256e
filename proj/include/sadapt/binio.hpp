#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sadapt::binio {

/// Appends little-endian encoded values to an in-memory buffer.
class Writer {
public:
    void magic(std::string_view four_cc);
    void u32(std::uint32_t v);
    void f32(float v);
    void f64(double v);
    void bytes(std::span<const unsigned char> data);

    const std::vector<unsigned char>& buffer() const noexcept { return m_buf; }

private:
    std::vector<unsigned char> m_buf;
};

/// Bounds-checked little-endian cursor; running past the end throws CorruptLength.
class Reader {
public:
    Reader(std::span<const unsigned char> data, std::string context)
        : m_data(data), m_context(std::move(context)) {}

    /// Throws BadMagic if the next four bytes differ from four_cc.
    void expect_magic(std::string_view four_cc);
    std::uint32_t u32();
    float f32();
    double f64();
    std::span<const unsigned char> bytes(std::size_t count);

    std::size_t remaining() const noexcept { return m_data.size() - m_pos; }
    std::size_t position() const noexcept { return m_pos; }
    const std::string& context() const noexcept { return m_context; }

    /// Throws CorruptLength unless at least `count` bytes remain.
    void require(std::size_t count, std::string_view what) const;

private:
    std::span<const unsigned char> m_data;
    std::size_t m_pos = 0;
    std::string m_context;
};

std::vector<unsigned char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const unsigned char> data);

} // namespace sadapt::binio
