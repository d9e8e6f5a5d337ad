// SPDX-License-Identifier: Apache-2.0
#include "distilla/nn/model.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "distilla/core/error.hpp"
#include "distilla/core/rng.hpp"
#include "distilla/core/synthetic.hpp"

namespace distilla::nn {

std::string_view to_string(Family family) noexcept { return family == Family::convnet ? "convnet" : "mlp"; }

std::string_view to_string(Norm norm) noexcept {
    switch (norm) {
        case Norm::instance: return "instance";
        case Norm::batch: return "batch";
        case Norm::none: return "none";
    }
    return "none";
}

Family parse_family(std::string_view text) {
    if (text == "convnet") return Family::convnet;
    if (text == "mlp") return Family::mlp;
    throw Error(Errc::invalid_argument, "unknown model family '" + std::string(text) + "'");
}

Norm parse_norm(std::string_view text) {
    if (text == "instance") return Norm::instance;
    if (text == "batch") return Norm::batch;
    if (text == "none") return Norm::none;
    throw Error(Errc::invalid_argument, "unknown norm '" + std::string(text) + "'");
}

void ModelSpec::validate() const {
    require(depth >= 1, Errc::invalid_argument, "model depth must be at least 1");
    require(width >= 1, Errc::invalid_argument, "model width must be at least 1");
    require(input.size() > 0, Errc::invalid_argument, "model input shape has a zero dimension");
    require(class_count >= 2, Errc::invalid_argument, "model needs at least two classes");
    if (family == Family::convnet) {
        std::size_t h = input.height;
        std::size_t w = input.width;
        for (std::size_t b = 0; b < depth; ++b) {
            require(h >= 2 && w >= 2, Errc::invalid_argument,
                    "convnet depth " + std::to_string(depth) + " pools the input below 1x1");
            h /= 2;
            w /= 2;
        }
    }
}

std::string ModelSpec::name() const {
    std::string out = std::string(to_string(family)) + "-d" + std::to_string(depth) + "-w" + std::to_string(width);
    if (family == Family::convnet) out += "-" + std::string(to_string(norm));
    return out;
}

Json to_json(const ModelSpec& spec) {
    return {{"family", std::string(to_string(spec.family))},
            {"depth", spec.depth},
            {"width", spec.width},
            {"norm", std::string(to_string(spec.norm))},
            {"input_shape", {spec.input.channels, spec.input.height, spec.input.width}},
            {"class_count", spec.class_count}};
}

ModelSpec model_spec_from_json(const Json& j) {
    ModelSpec spec;
    try {
        spec.family = parse_family(j.at("family").get<std::string>());
        spec.depth = j.at("depth").get<std::size_t>();
        spec.width = j.at("width").get<std::size_t>();
        spec.norm = parse_norm(j.at("norm").get<std::string>());
        const auto shape = j.at("input_shape").get<std::vector<std::size_t>>();
        require(shape.size() == 3, Errc::format, "input_shape must have three entries");
        spec.input = {shape[0], shape[1], shape[2]};
        spec.class_count = j.at("class_count").get<std::size_t>();
    } catch (const Json::exception& e) {
        throw Error(Errc::format, std::string("malformed model spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

std::size_t LayerInfo::size() const noexcept {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

LayerMap layer_map(const ModelSpec& spec) {
    spec.validate();
    LayerMap map;
    std::size_t offset = 0;
    auto add = [&](std::string name, std::vector<std::size_t> shape) {
        LayerInfo layer{std::move(name), offset, std::move(shape)};
        offset += layer.size();
        map.push_back(std::move(layer));
    };
    std::size_t features = 0;
    if (spec.family == Family::convnet) {
        std::size_t channels = spec.input.channels;
        std::size_t h = spec.input.height;
        std::size_t w = spec.input.width;
        for (std::size_t b = 0; b < spec.depth; ++b) {
            const std::string prefix = "block" + std::to_string(b);
            add(prefix + ".conv.weight", {spec.width, channels, 3, 3});
            add(prefix + ".conv.bias", {spec.width});
            if (spec.norm != Norm::none) {
                add(prefix + ".norm.weight", {spec.width});
                add(prefix + ".norm.bias", {spec.width});
            }
            channels = spec.width;
            h /= 2;
            w /= 2;
        }
        features = channels * h * w;
    } else {
        std::size_t in = spec.input.size();
        for (std::size_t l = 0; l < spec.depth; ++l) {
            const std::string prefix = "layer" + std::to_string(l);
            add(prefix + ".weight", {spec.width, in});
            add(prefix + ".bias", {spec.width});
            in = spec.width;
        }
        features = in;
    }
    add("classifier.weight", {spec.class_count, features});
    add("classifier.bias", {spec.class_count});
    return map;
}

std::size_t parameter_count(const ModelSpec& spec) {
    const auto map = layer_map(spec);
    return map.back().offset + map.back().size();
}

ParameterVector::ParameterVector(std::vector<double> v, LayerMap map) : values(std::move(v)), layout(std::move(map)) {
    const std::size_t expected = layout.empty() ? 0 : layout.back().offset + layout.back().size();
    require(values.size() == expected, Errc::layout_mismatch,
            "parameter vector has " + std::to_string(values.size()) + " values but layout covers " +
                std::to_string(expected));
}

ParameterVector ParameterVector::zeros_like(const ParameterVector& other) {
    return ParameterVector(std::vector<double>(other.size(), 0.0), other.layout);
}

void ParameterVector::require_same_layout(const ParameterVector& other) const {
    require(same_layout(other) && values.size() == other.values.size(), Errc::layout_mismatch,
            "parameter layouts differ");
}

void ParameterVector::round_to_f32() {
    for (double& v : values) v = distilla::round_to_f32(v);
}

ParameterVector init_params(const ModelSpec& spec, std::uint64_t seed) {
    auto map = layer_map(spec);
    std::vector<double> values(map.back().offset + map.back().size(), 0.0);
    Rng rng(derive_seed(seed, stream::init));
    for (const auto& layer : map) {
        const bool is_weight = layer.name.ends_with(".weight");
        const bool is_norm = layer.name.find(".norm.") != std::string::npos;
        if (!is_weight) continue;
        if (is_norm) {
            std::fill_n(values.begin() + static_cast<std::ptrdiff_t>(layer.offset), layer.size(), 1.0);
            continue;
        }
        const std::size_t fan_in = layer.size() / layer.shape[0];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t i = 0; i < layer.size(); ++i) values[layer.offset + i] = rng.uniform(-bound, bound);
    }
    return ParameterVector(std::move(values), std::move(map));
}

double param_distance_sq(const ParameterVector& a, const ParameterVector& b) {
    a.require_same_layout(b);
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.values[i] - b.values[i];
        sum += d * d;
    }
    return sum;
}

Json to_json(const LayerMap& layout) {
    Json out = Json::array();
    for (const auto& layer : layout) {
        out.push_back({{"name", layer.name}, {"offset", layer.offset}, {"shape", layer.shape}});
    }
    return out;
}

LayerMap layer_map_from_json(const Json& j) {
    LayerMap map;
    try {
        for (const auto& entry : j) {
            map.push_back({entry.at("name").get<std::string>(), entry.at("offset").get<std::size_t>(),
                           entry.at("shape").get<std::vector<std::size_t>>()});
        }
    } catch (const Json::exception& e) {
        throw Error(Errc::format, std::string("malformed layout: ") + e.what());
    }
    std::size_t offset = 0;
    for (const auto& layer : map) {
        require(layer.offset == offset, Errc::format, "layout offsets are not contiguous at " + layer.name);
        offset += layer.size();
    }
    return map;
}

void save_params(const ParameterVector& params, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_f32(dir / "params.f32", params.values);
    write_json(dir / "layout.json", to_json(params.layout));
}

ParameterVector load_params(const std::filesystem::path& dir) {
    auto layout = layer_map_from_json(read_json(dir / "layout.json"));
    return ParameterVector(read_f32(dir / "params.f32"), std::move(layout));
}

}  // namespace distilla::nn
