// SPDX-License-Identifier: Apache-2.0
#include "distilla/core/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "distilla/core/error.hpp"
#include "distilla/core/rng.hpp"

namespace distilla {

std::string_view to_string(Errc code) noexcept {
    switch (code) {
        case Errc::invalid_argument: return "invalid-argument";
        case Errc::format: return "format-error";
        case Errc::consistency: return "consistency-error";
        case Errc::insufficient_data: return "insufficient-data";
        case Errc::layout_mismatch: return "layout-mismatch";
        case Errc::shape_mismatch: return "shape-mismatch";
        case Errc::out_of_range: return "out-of-range";
        case Errc::missing_stage: return "missing-stage";
        case Errc::degenerate_trajectory: return "degenerate-trajectory";
        case Errc::anchor_span: return "anchor-span";
        case Errc::empty_bin: return "empty-bin";
        case Errc::config: return "config-error";
        case Errc::io: return "io-error";
    }
    return "error";
}

void TrainingData::append(const DataView& batch, std::span<const SampleSource> batch_sources) {
    if (empty() && images.empty()) shape = batch.shape;
    require(batch.shape == shape, Errc::shape_mismatch, "appending images of a different shape");
    require(batch_sources.empty() || batch_sources.size() == batch.size(), Errc::consistency,
            "source list does not match batch size");
    images.insert(images.end(), batch.images.begin(), batch.images.end());
    labels.insert(labels.end(), batch.labels.begin(), batch.labels.end());
    if (batch_sources.empty()) {
        for (std::size_t i = 0; i < batch.size(); ++i) sources.push_back({0, i});
    } else {
        sources.insert(sources.end(), batch_sources.begin(), batch_sources.end());
    }
}

LabeledDataset::LabeledDataset(std::string name, std::size_t class_count, ImageShape shape,
                               std::vector<double> images, std::vector<std::int64_t> labels,
                               std::vector<std::size_t> origin)
    : name_(std::move(name)),
      class_count_(class_count),
      shape_(shape),
      images_(std::move(images)),
      labels_(std::move(labels)),
      origin_(std::move(origin)) {
    require(class_count_ >= 1, Errc::invalid_argument, "dataset needs at least one class");
    require(shape_.size() > 0, Errc::invalid_argument, "image shape has a zero dimension");
    require(images_.size() == labels_.size() * shape_.size(), Errc::consistency,
            "image count does not match label count");
    for (const auto label : labels_) {
        require(label >= 0 && static_cast<std::size_t>(label) < class_count_, Errc::invalid_argument,
                "label " + std::to_string(label) + " outside [0, " + std::to_string(class_count_) + ")");
    }
    for (const double v : images_) {
        require(v >= 0.0 && v <= 1.0, Errc::invalid_argument, "pixel value outside [0, 1]");
    }
    if (origin_.empty()) {
        origin_.resize(labels_.size());
        for (std::size_t i = 0; i < origin_.size(); ++i) origin_[i] = i;
    }
    require(origin_.size() == labels_.size(), Errc::consistency, "origin list does not match count");
}

std::vector<std::vector<std::size_t>> LabeledDataset::indices_by_class() const {
    std::vector<std::vector<std::size_t>> by_class(class_count_);
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        by_class[static_cast<std::size_t>(labels_[i])].push_back(i);
    }
    return by_class;
}

std::vector<std::int64_t> LabeledDataset::present_classes() const {
    std::vector<bool> seen(class_count_, false);
    for (const auto label : labels_) seen[static_cast<std::size_t>(label)] = true;
    std::vector<std::int64_t> classes;
    for (std::size_t c = 0; c < class_count_; ++c) {
        if (seen[c]) classes.push_back(static_cast<std::int64_t>(c));
    }
    return classes;
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices, std::string name) const {
    const std::size_t stride = shape_.size();
    std::vector<double> images;
    std::vector<std::int64_t> labels;
    std::vector<std::size_t> origin;
    images.reserve(indices.size() * stride);
    labels.reserve(indices.size());
    origin.reserve(indices.size());
    for (const std::size_t i : indices) {
        require(i < size(), Errc::out_of_range, "subset index out of range");
        const auto img = image(i);
        images.insert(images.end(), img.begin(), img.end());
        labels.push_back(labels_[i]);
        origin.push_back(origin_[i]);
    }
    return LabeledDataset(name.empty() ? name_ : std::move(name), class_count_, shape_,
                          std::move(images), std::move(labels), std::move(origin));
}

TrainingData gather(const DataView& data, std::span<const std::size_t> indices,
                    std::size_t source_stage) {
    TrainingData out;
    out.shape = data.shape;
    const std::size_t stride = data.shape.size();
    out.images.reserve(indices.size() * stride);
    out.labels.reserve(indices.size());
    out.sources.reserve(indices.size());
    for (const std::size_t i : indices) {
        require(i < data.size(), Errc::out_of_range, "gather index out of range");
        const auto img = data.image(i);
        out.images.insert(out.images.end(), img.begin(), img.end());
        out.labels.push_back(data.labels[i]);
        out.sources.push_back({source_stage, i});
    }
    return out;
}

LabeledDataset make_blobs_dataset(std::uint64_t seed, std::size_t classes, std::size_t per_class,
                                  std::size_t side, double noise) {
    require(classes >= 2, Errc::invalid_argument, "blobs need at least two classes");
    require(per_class >= 1, Errc::invalid_argument, "blobs need at least one example per class");
    require(side >= 4, Errc::invalid_argument, "blob images must be at least 4x4");
    require(noise >= 0.0 && std::isfinite(noise), Errc::invalid_argument, "noise must be nonnegative");

    // Class centres sit on a circle around the image centre; they depend only on
    // (classes, side) so train and test draws share one distribution.
    const double mid = (static_cast<double>(side) - 1.0) / 2.0;
    const double radius = static_cast<double>(side) / 4.0;
    const double sigma = std::max(static_cast<double>(side) / 8.0, 0.75);
    constexpr double background = 0.2;
    constexpr double amplitude = 0.6;

    std::vector<std::vector<double>> templates(classes, std::vector<double>(side * side));
    for (std::size_t c = 0; c < classes; ++c) {
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(classes);
        const double cy = mid + radius * std::sin(angle);
        const double cx = mid + radius * std::cos(angle);
        for (std::size_t y = 0; y < side; ++y) {
            for (std::size_t x = 0; x < side; ++x) {
                const double dy = static_cast<double>(y) - cy;
                const double dx = static_cast<double>(x) - cx;
                templates[c][y * side + x] =
                    background + amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            }
        }
    }

    const std::size_t count = classes * per_class;
    std::vector<double> images(count * side * side);
    std::vector<std::int64_t> labels(count);
    Rng rng(derive_seed(seed, stream::blobs));
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t c = i % classes;
        labels[i] = static_cast<std::int64_t>(c);
        double* out = images.data() + i * side * side;
        for (std::size_t p = 0; p < side * side; ++p) {
            const double jitter = noise > 0.0 ? noise * rng.normal() : 0.0;
            out[p] = std::clamp(templates[c][p] + jitter, 0.0, 1.0);
        }
    }
    return LabeledDataset("blobs", classes, ImageShape{1, side, side}, std::move(images), std::move(labels));
}

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), Errc::io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset) {
    require(offset + 4 <= bytes.size(), Errc::format, "truncated IDX header");
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace

LabeledDataset load_idx_dataset(const std::filesystem::path& image_path,
                                const std::filesystem::path& label_path, std::size_t class_count) {
    const auto image_bytes = read_file(image_path);
    const auto label_bytes = read_file(label_path);

    const std::uint32_t image_magic = read_be32(image_bytes, 0);
    require(image_magic == 0x00000803 || image_magic == 0x00000804, Errc::format,
            "bad IDX image magic in " + image_path.string());
    const std::size_t ndims = image_magic & 0xff;
    std::vector<std::size_t> dims(ndims);
    for (std::size_t d = 0; d < ndims; ++d) dims[d] = read_be32(image_bytes, 4 + 4 * d);
    const ImageShape shape = ndims == 3 ? ImageShape{1, dims[1], dims[2]}
                                        : ImageShape{dims[1], dims[2], dims[3]};
    const std::size_t image_count = dims[0];
    const std::size_t image_header = 4 + 4 * ndims;
    require(image_bytes.size() == image_header + image_count * shape.size(), Errc::format,
            "IDX image payload size does not match its header");

    require(read_be32(label_bytes, 0) == 0x00000801, Errc::format,
            "bad IDX label magic in " + label_path.string());
    const std::size_t label_count = read_be32(label_bytes, 4);
    require(label_bytes.size() == 8 + label_count, Errc::format,
            "IDX label payload size does not match its header");
    require(image_count == label_count, Errc::consistency,
            "IDX image count " + std::to_string(image_count) + " differs from label count " +
                std::to_string(label_count));

    std::vector<double> images(image_count * shape.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        images[i] = static_cast<double>(image_bytes[image_header + i]) / 255.0;
    }
    std::vector<std::int64_t> labels(label_count);
    std::size_t max_label = 0;
    for (std::size_t i = 0; i < label_count; ++i) {
        labels[i] = label_bytes[8 + i];
        max_label = std::max<std::size_t>(max_label, label_bytes[8 + i]);
    }
    if (class_count == 0) class_count = max_label + 1;
    return LabeledDataset(image_path.stem().string(), class_count, shape, std::move(images),
                          std::move(labels));
}

}  // namespace distilla
