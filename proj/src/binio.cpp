#include "sadapt/binio.hpp"

#include "sadapt/error.hpp"

#include <bit>
#include <fstream>
#include <iterator>

namespace sadapt::binio {

void Writer::magic(std::string_view four_cc) {
    for (char c : four_cc.substr(0, 4)) {
        m_buf.push_back(static_cast<unsigned char>(c));
    }
}

void Writer::u32(std::uint32_t v) {
    for (int shift = 0; shift < 32; shift += 8) {
        m_buf.push_back(static_cast<unsigned char>((v >> shift) & 0xffu));
    }
}

void Writer::f32(float v) {
    u32(std::bit_cast<std::uint32_t>(v));
}

void Writer::f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    u32(static_cast<std::uint32_t>(bits & 0xffffffffu));
    u32(static_cast<std::uint32_t>(bits >> 32));
}

void Writer::bytes(std::span<const unsigned char> data) {
    m_buf.insert(m_buf.end(), data.begin(), data.end());
}

void Reader::require(std::size_t count, std::string_view what) const {
    if (remaining() < count) {
        fail(ErrorKind::CorruptLength, m_context + ": truncated while reading " + std::string(what) +
                                           " (need " + std::to_string(count) + " bytes at offset " +
                                           std::to_string(m_pos) + ", " + std::to_string(remaining()) +
                                           " left)");
    }
}

void Reader::expect_magic(std::string_view four_cc) {
    if (remaining() < 4) {
        fail(ErrorKind::BadMagic, m_context + ": file too short for magic");
    }
    const auto got = m_data.subspan(m_pos, 4);
    for (std::size_t i = 0; i < 4; ++i) {
        if (got[i] != static_cast<unsigned char>(four_cc[i])) {
            fail(ErrorKind::BadMagic, m_context + ": expected magic \"" + std::string(four_cc) + "\"");
        }
    }
    m_pos += 4;
}

std::uint32_t Reader::u32() {
    require(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(m_data[m_pos + i]) << (8 * i);
    }
    m_pos += 4;
    return v;
}

float Reader::f32() {
    return std::bit_cast<float>(u32());
}

double Reader::f64() {
    require(8, "f64");
    const std::uint64_t lo = u32();
    const std::uint64_t hi = u32();
    return std::bit_cast<double>(lo | (hi << 32));
}

std::span<const unsigned char> Reader::bytes(std::size_t count) {
    require(count, "bytes");
    auto out = m_data.subspan(m_pos, count);
    m_pos += count;
    return out;
}

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorKind::IoFailure, "cannot open " + path.string());
    }
    std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) {
        fail(ErrorKind::IoFailure, "read error on " + path.string());
    }
    return data;
}

void write_file(const std::filesystem::path& path, std::span<const unsigned char> data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        fail(ErrorKind::IoFailure, "cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) {
        fail(ErrorKind::IoFailure, "write error on " + path.string());
    }
}

} // namespace sadapt::binio
