// SPDX-License-Identifier: Apache-2.0
#include "distilla/core/persistence.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "distilla/core/error.hpp"

namespace distilla {
namespace fs = std::filesystem;

namespace {

std::vector<unsigned char> slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), Errc::io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const fs::path& path, const std::vector<unsigned char>& bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), Errc::io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), Errc::io, "short write to " + path.string());
}

template <class U>
void put_le(std::vector<unsigned char>& bytes, U word) {
    for (std::size_t b = 0; b < sizeof(U); ++b) bytes.push_back(static_cast<unsigned char>(word >> (8 * b)));
}

template <class U>
U get_le(const unsigned char* p) {
    U word = 0;
    for (std::size_t b = 0; b < sizeof(U); ++b) word |= static_cast<U>(p[b]) << (8 * b);
    return word;
}

}  // namespace

void write_f32(const fs::path& path, std::span<const double> values) {
    std::vector<unsigned char> bytes;
    bytes.reserve(values.size() * 4);
    for (const double v : values) put_le(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    dump(path, bytes);
}

std::vector<double> read_f32(const fs::path& path) {
    const auto bytes = slurp(path);
    require(bytes.size() % 4 == 0, Errc::format, path.string() + " is not a whole number of f32 values");
    std::vector<double> values(bytes.size() / 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] = static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(bytes.data() + 4 * i)));
    }
    return values;
}

void write_i64(const fs::path& path, std::span<const std::int64_t> values) {
    std::vector<unsigned char> bytes;
    bytes.reserve(values.size() * 8);
    for (const auto v : values) put_le(bytes, static_cast<std::uint64_t>(v));
    dump(path, bytes);
}

std::vector<std::int64_t> read_i64(const fs::path& path) {
    const auto bytes = slurp(path);
    require(bytes.size() % 8 == 0, Errc::format, path.string() + " is not a whole number of i64 values");
    std::vector<std::int64_t> values(bytes.size() / 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] = static_cast<std::int64_t>(get_le<std::uint64_t>(bytes.data() + 8 * i));
    }
    return values;
}

void write_json(const fs::path& path, const Json& value) {
    const std::string text = value.dump(2) + "\n";
    dump(path, std::vector<unsigned char>(text.begin(), text.end()));
}

Json read_json(const fs::path& path) {
    const auto bytes = slurp(path);
    try {
        return Json::parse(bytes.begin(), bytes.end());
    } catch (const Json::exception& e) {
        throw Error(Errc::format, path.string() + ": " + e.what());
    }
}

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (const char ch : bytes) {
        hash ^= static_cast<unsigned char>(ch);
        hash *= 0x100000001b3ULL;
    }
    char buffer[17];
    std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(hash));
    return buffer;
}

void save_stage_sequence(const StageSequence& seq, const fs::path& dir) {
    seq.validate();
    fs::create_directories(dir);
    Json ipc = Json::array();
    Json lrs = Json::array();
    Json counts = Json::array();
    Json inits = Json::array();
    for (std::size_t i = 0; i < seq.stages.size(); ++i) {
        const auto& stage = seq.stages[i];
        ipc.push_back(stage.ipc);
        lrs.push_back(stage.learned_lr ? Json(*stage.learned_lr) : Json(nullptr));
        counts.push_back(stage.size());
        inits.push_back(std::string(to_string(stage.init_mode)));

        std::vector<double> clamped(stage.images);
        for (double& v : clamped) v = std::clamp(v, 0.0, 1.0);
        const fs::path stage_dir = dir / ("stage_" + std::to_string(i + 1));
        write_f32(stage_dir / "images.f32", clamped);
        write_i64(stage_dir / "labels.i64", stage.labels);
    }
    Json manifest = {
        {"version", kStageSequenceVersion},
        {"dataset_name", seq.dataset_name},
        {"class_count", seq.class_count},
        {"image_shape", {seq.shape.channels, seq.shape.height, seq.shape.width}},
        {"stage_count", seq.stages.size()},
        {"ipc", ipc},
        {"learned_lr", lrs},
        {"counts", counts},
        {"init_mode", inits},
        {"config_digest", seq.config_digest},
    };
    write_json(dir / "manifest.json", manifest);
}

StageSequence load_stage_sequence(const fs::path& dir) {
    require(fs::is_directory(dir), Errc::io, "sequence directory " + dir.string() + " does not exist");
    const Json manifest = read_json(dir / "manifest.json");
    StageSequence seq;
    std::size_t stage_count = 0;
    try {
        require(manifest.at("version").get<int>() == kStageSequenceVersion, Errc::format,
                "unsupported manifest version");
        seq.dataset_name = manifest.at("dataset_name").get<std::string>();
        seq.class_count = manifest.at("class_count").get<std::size_t>();
        const auto shape = manifest.at("image_shape").get<std::vector<std::size_t>>();
        require(shape.size() == 3, Errc::format, "image_shape must have three entries");
        seq.shape = {shape[0], shape[1], shape[2]};
        seq.config_digest = manifest.at("config_digest").get<std::string>();
        stage_count = manifest.at("stage_count").get<std::size_t>();
        for (const char* key : {"ipc", "learned_lr", "counts", "init_mode"}) {
            require(manifest.at(key).size() == stage_count, Errc::format,
                    std::string("manifest list '") + key + "' does not have stage_count entries");
        }
    } catch (const Json::exception& e) {
        throw Error(Errc::format, "malformed manifest in " + dir.string() + ": " + e.what());
    }

    for (std::size_t i = 0; i < stage_count; ++i) {
        const fs::path stage_dir = dir / ("stage_" + std::to_string(i + 1));
        require(fs::is_directory(stage_dir), Errc::missing_stage,
                "manifest declares " + std::to_string(stage_count) + " stages but " + stage_dir.string() +
                    " is missing");
        SyntheticSet stage;
        stage.shape = seq.shape;
        stage.class_count = seq.class_count;
        stage.stage_index = i + 1;
        stage.ipc = manifest["ipc"][i].get<std::size_t>();
        if (!manifest["learned_lr"][i].is_null()) stage.learned_lr = manifest["learned_lr"][i].get<double>();
        stage.init_mode = parse_init_mode(manifest["init_mode"][i].get<std::string>());
        stage.images = read_f32(stage_dir / "images.f32");
        stage.labels = read_i64(stage_dir / "labels.i64");
        const auto count = manifest["counts"][i].get<std::size_t>();
        require(stage.labels.size() == count && stage.images.size() == count * seq.shape.size(),
                Errc::shape_mismatch,
                "stage " + std::to_string(i + 1) + " arrays do not match the manifest shape");
        seq.stages.push_back(std::move(stage));
    }
    seq.validate();
    return seq;
}

}  // namespace distilla
