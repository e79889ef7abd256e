#include "sadapt/checkpoint.hpp"

#include "sadapt/binio.hpp"
#include "sadapt/error.hpp"
#include "sadapt/rng.hpp"

#include <cstdio>

namespace sadapt {

namespace {

constexpr std::string_view kCheckpointMagic = "SADA";
constexpr std::uint32_t kCheckpointVersion = 1;

void write_f32s(binio::Writer& w, std::span<const double> values) {
    for (double v : values) {
        w.f32(static_cast<float>(v));
    }
}

void read_f32s(binio::Reader& r, std::span<double> values) {
    for (auto& v : values) {
        v = r.f32();
    }
}

} // namespace

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt) {
    const auto& p = ckpt.params;
    p.validate();
    binio::Writer w;
    w.magic(kCheckpointMagic);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(p.dim));
    w.u32(static_cast<std::uint32_t>(p.hidden));
    w.f64(ckpt.scale);
    write_f32s(w, p.w1.values());
    write_f32s(w, p.b1);
    write_f32s(w, p.w2.values());
    write_f32s(w, p.b2);
    const std::string trailer = ckpt.meta.is_null() ? std::string("{}") : ckpt.meta.dump();
    w.u32(static_cast<std::uint32_t>(trailer.size()));
    w.bytes(std::span(reinterpret_cast<const unsigned char*>(trailer.data()), trailer.size()));
    return w.buffer();
}

Checkpoint decode_checkpoint(std::span<const unsigned char> bytes, const std::string& context) {
    binio::Reader r(bytes, context);
    r.expect_magic(kCheckpointMagic);
    const auto version = r.u32();
    if (version != kCheckpointVersion) {
        fail(ErrorKind::VersionUnsupported, context + ": version " + std::to_string(version));
    }
    const std::uint64_t dim = r.u32();
    const std::uint64_t hidden = r.u32();
    if (dim == 0 || hidden == 0) {
        fail(ErrorKind::CorruptLength, context + ": header declares an empty dimension");
    }
    const double scale = r.f64();
    const std::uint64_t weights = 2 * dim * hidden + hidden + dim;
    r.require(weights * 4 + 4, "adapter weights");

    Checkpoint ckpt;
    ckpt.scale = scale;
    ckpt.params = AdapterParams(dim, hidden);
    read_f32s(r, ckpt.params.w1.values());
    read_f32s(r, ckpt.params.b1);
    read_f32s(r, ckpt.params.w2.values());
    read_f32s(r, ckpt.params.b2);

    const auto trailer_len = r.u32();
    if (r.remaining() != trailer_len) {
        fail(ErrorKind::CorruptLength, context + ": trailer declares " + std::to_string(trailer_len) +
                                           " bytes, " + std::to_string(r.remaining()) + " present");
    }
    const auto trailer = r.bytes(trailer_len);
    try {
        ckpt.meta = nlohmann::json::parse(trailer.begin(), trailer.end());
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::MalformedMetadata, context + ": trailer is not valid JSON (" + e.what() + ")");
    }
    if (!ckpt.meta.is_object()) {
        fail(ErrorKind::MalformedMetadata, context + ": trailer must be a JSON object");
    }
    if (!ckpt.params.all_finite()) {
        fail(ErrorKind::NumericalFailure, context + ": non-finite weights");
    }
    return ckpt;
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(binio::read_file(path), path.string());
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    binio::write_file(path, encode_checkpoint(ckpt));
}

AdapterParams round_to_f32(const AdapterParams& p) {
    AdapterParams out = p;
    const auto round = [](std::span<double> values) {
        for (auto& v : values) {
            v = static_cast<float>(v);
        }
    };
    round(out.w1.values());
    round(out.b1);
    round(out.w2.values());
    round(out.b2);
    return out;
}

std::string checksum_hex(std::span<const unsigned char> bytes) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
    return std::string("fnv1a64:") + buf;
}

nlohmann::json to_json(const HyperConfig& cfg) {
    return {
        {"red", cfg.red},
        {"lr", cfg.lr},
        {"weight_decay", cfg.weight_decay},
        {"aug_strength", cfg.aug_strength},
        {"seed", cfg.seed},
        {"epochs", cfg.epochs},
        {"batch_size", cfg.batch_size},
        {"train_r", cfg.train_r},
        {"mask_strategy", to_string(cfg.mask)},
    };
}

HyperConfig hyperconfig_from_json(const nlohmann::json& j) {
    try {
        HyperConfig cfg;
        cfg.red = j.at("red").get<std::uint32_t>();
        cfg.lr = j.at("lr").get<double>();
        cfg.weight_decay = j.at("weight_decay").get<double>();
        cfg.aug_strength = j.at("aug_strength").get<double>();
        cfg.seed = j.at("seed").get<std::uint64_t>();
        cfg.epochs = j.at("epochs").get<std::size_t>();
        cfg.batch_size = j.at("batch_size").get<std::size_t>();
        cfg.train_r = j.at("train_r").get<double>();
        cfg.mask = mask_strategy_from_string(j.at("mask_strategy").get<std::string>());
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::MalformedMetadata, std::string("hyperconfig: ") + e.what());
    }
}

nlohmann::json to_json(const TrainRecord& record, bool include_wall_time) {
    nlohmann::json j;
    j["config"] = to_json(record.config);
    j["final_loss"] = record.final_loss ? nlohmann::json(*record.final_loss) : nlohmann::json(nullptr);
    j["loss_trace"] = record.loss_trace;
    if (include_wall_time) {
        j["wall_seconds"] = record.wall_seconds;
    }
    return j;
}

} // namespace sadapt
