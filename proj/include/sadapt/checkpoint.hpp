#pragma once

#include "sadapt/adapter.hpp"

#include "json.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace sadapt {

/// Adapter checkpoint (little-endian): "SADA", u32 version=1, u32 D, u32 H,
/// f64 scale-used, float32 W1 (H×D), b1 (H), W2 (D×H), b2 (D), then a u32
/// length-prefixed UTF-8 JSON trailer.
struct Checkpoint {
    AdapterParams params;
    double scale = kDefaultLogitScale;
    nlohmann::json meta = nlohmann::json::object();
};

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const unsigned char> bytes, const std::string& context = "checkpoint");

Checkpoint read_checkpoint(const std::filesystem::path& path);
void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

/// Rounds every parameter through float32, i.e. what a checkpoint round-trip keeps.
AdapterParams round_to_f32(const AdapterParams& p);

/// "fnv1a64:" followed by 16 lowercase hex digits.
std::string checksum_hex(std::span<const unsigned char> bytes);

nlohmann::json to_json(const HyperConfig& cfg);
HyperConfig hyperconfig_from_json(const nlohmann::json& j);

/// Wall time is left out unless requested, so checkpoints stay byte-reproducible.
nlohmann::json to_json(const TrainRecord& record, bool include_wall_time);

} // namespace sadapt
