// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "distilla/core/dataset.hpp"
#include "distilla/core/persistence.hpp"

namespace distilla::nn {

enum class Family { convnet, mlp };
enum class Norm { instance, batch, none };

std::string_view to_string(Family family) noexcept;
std::string_view to_string(Norm norm) noexcept;
Family parse_family(std::string_view text);
Norm parse_norm(std::string_view text);

/// ConvNet: depth blocks of conv3x3(width) -> norm -> ReLU -> avgpool2x2, then a
/// linear classifier. MLP: depth hidden layers of width units with ReLU, then a
/// linear classifier; the norm field does not apply to MLPs.
struct ModelSpec {
    Family family = Family::convnet;
    std::size_t depth = 2;
    std::size_t width = 8;
    Norm norm = Norm::instance;
    ImageShape input;
    std::size_t class_count = 2;

    void validate() const;
    [[nodiscard]] std::string name() const;
    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

Json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const Json& j);

struct LayerInfo {
    std::string name;
    std::size_t offset = 0;
    std::vector<std::size_t> shape;

    [[nodiscard]] std::size_t size() const noexcept;
    friend bool operator==(const LayerInfo&, const LayerInfo&) = default;
};

using LayerMap = std::vector<LayerInfo>;

/// Deterministic layer order for a spec.
LayerMap layer_map(const ModelSpec& spec);
std::size_t parameter_count(const ModelSpec& spec);

/// Flat parameters plus the layer map that slices them.
struct ParameterVector {
    std::vector<double> values;
    LayerMap layout;

    ParameterVector() = default;
    ParameterVector(std::vector<double> v, LayerMap map);
    /// Zero vector with the given layout.
    static ParameterVector zeros_like(const ParameterVector& other);

    [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
    [[nodiscard]] bool same_layout(const ParameterVector& other) const { return layout == other.layout; }
    void require_same_layout(const ParameterVector& other) const;
    /// Rounds every value to 32-bit float precision, the persisted precision.
    void round_to_f32();
};

/// Fan-in scaled uniform weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)); zero biases;
/// unit norm scales.
ParameterVector init_params(const ModelSpec& spec, std::uint64_t seed);

/// Squared Euclidean distance over the flat vectors.
double param_distance_sq(const ParameterVector& a, const ParameterVector& b);

Json to_json(const LayerMap& layout);
LayerMap layer_map_from_json(const Json& j);

/// params.f32 + layout.json inside dir.
void save_params(const ParameterVector& params, const std::filesystem::path& dir);
ParameterVector load_params(const std::filesystem::path& dir);

}  // namespace distilla::nn
