// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "distilla/core/synthetic.hpp"

namespace distilla {

using Json = nlohmann::json;

// Raw arrays are little-endian regardless of host byte order.
void write_f32(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_f32(const std::filesystem::path& path);
void write_i64(const std::filesystem::path& path, std::span<const std::int64_t> values);
std::vector<std::int64_t> read_i64(const std::filesystem::path& path);

/// Pretty-printed with a trailing newline; keys come out sorted so output is canonical.
void write_json(const std::filesystem::path& path, const Json& value);
Json read_json(const std::filesystem::path& path);

/// 64-bit FNV-1a rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

inline constexpr int kStageSequenceVersion = 1;

/// Writes manifest.json plus stage_<i>/images.f32 and stage_<i>/labels.i64.
void save_stage_sequence(const StageSequence& seq, const std::filesystem::path& dir);
StageSequence load_stage_sequence(const std::filesystem::path& dir);

}  // namespace distilla
