// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace distilla {

struct ImageShape {
    std::size_t channels = 1;
    std::size_t height = 1;
    std::size_t width = 1;

    [[nodiscard]] constexpr std::size_t size() const noexcept { return channels * height * width; }
    friend constexpr bool operator==(const ImageShape&, const ImageShape&) = default;
};

/// Non-owning view over a contiguous batch of images and their labels.
struct DataView {
    ImageShape shape;
    std::span<const double> images;
    std::span<const std::int64_t> labels;

    [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
    [[nodiscard]] bool empty() const noexcept { return labels.empty(); }
    [[nodiscard]] std::span<const double> image(std::size_t i) const {
        return images.subspan(i * shape.size(), shape.size());
    }
};

/// Where a training sample came from: stage 0 is real data, stage i >= 1 a synthetic stage.
struct SampleSource {
    std::size_t stage = 0;
    std::size_t index = 0;
    friend constexpr bool operator==(const SampleSource&, const SampleSource&) = default;
};

/// Owning batch with provenance. Produced by unions, subsets and gathers.
struct TrainingData {
    ImageShape shape;
    std::vector<double> images;
    std::vector<std::int64_t> labels;
    std::vector<SampleSource> sources;

    [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
    [[nodiscard]] bool empty() const noexcept { return labels.empty(); }
    [[nodiscard]] DataView view() const { return {shape, images, labels}; }

    void append(const DataView& batch, std::span<const SampleSource> batch_sources = {});
};

/// Immutable labelled images, values in [0, 1].
class LabeledDataset {
public:
    LabeledDataset() = default;
    LabeledDataset(std::string name, std::size_t class_count, ImageShape shape,
                   std::vector<double> images, std::vector<std::int64_t> labels,
                   std::vector<std::size_t> origin = {});

    [[nodiscard]] const std::string& name() const noexcept { return name_; }
    [[nodiscard]] std::size_t class_count() const noexcept { return class_count_; }
    [[nodiscard]] const ImageShape& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t size() const noexcept { return labels_.size(); }
    [[nodiscard]] bool empty() const noexcept { return labels_.empty(); }
    [[nodiscard]] std::span<const double> images() const noexcept { return images_; }
    [[nodiscard]] std::span<const std::int64_t> labels() const noexcept { return labels_; }
    [[nodiscard]] std::span<const double> image(std::size_t i) const {
        return std::span<const double>(images_).subspan(i * shape_.size(), shape_.size());
    }
    /// Index of each example in the dataset this one was cut from (identity for roots).
    [[nodiscard]] std::span<const std::size_t> origin() const noexcept { return origin_; }
    [[nodiscard]] DataView view() const { return {shape_, images_, labels_}; }

    /// Indices of the examples carrying each label, indexed by class.
    [[nodiscard]] std::vector<std::vector<std::size_t>> indices_by_class() const;
    /// Classes with at least one example, ascending.
    [[nodiscard]] std::vector<std::int64_t> present_classes() const;

    [[nodiscard]] LabeledDataset subset(std::span<const std::size_t> indices,
                                        std::string name = {}) const;

private:
    std::string name_;
    std::size_t class_count_ = 0;
    ImageShape shape_;
    std::vector<double> images_;
    std::vector<std::int64_t> labels_;
    std::vector<std::size_t> origin_;
};

/// Copies the selected rows of a view into a fresh batch.
TrainingData gather(const DataView& data, std::span<const std::size_t> indices,
                    std::size_t source_stage = 0);

/// Grayscale Gaussian bumps at class-specific positions plus pixel noise, clamped to [0, 1].
LabeledDataset make_blobs_dataset(std::uint64_t seed, std::size_t classes, std::size_t per_class,
                                  std::size_t side, double noise);

/// Reads an IDX image file (magic 0x0803 or 0x0804) and an IDX label file (0x0801).
LabeledDataset load_idx_dataset(const std::filesystem::path& image_path,
                                const std::filesystem::path& label_path,
                                std::size_t class_count = 0);

}  // namespace distilla
