// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "distilla/core/dataset.hpp"
#include "distilla/core/rng.hpp"

namespace distilla::distill {

enum class AugmentOp { flip, shift, cutout };

std::string_view to_string(AugmentOp op) noexcept;
AugmentOp parse_augment_op(std::string_view text);

/// One concrete, linear pixel transform applied to every image of a batch.
struct AugmentTransform {
    enum class Kind { identity, flip, shift, cutout } kind = Kind::identity;
    int dy = 0;  // shift offsets; output(y, x) = input(y - dy, x - dx), zero outside
    int dx = 0;
    std::size_t top = 0;  // cutout window
    std::size_t left = 0;
    std::size_t extent = 0;
};

/// Picks one op uniformly from `ops`, then its parameters: shifts of up to
/// max(1, side / 8) pixels per axis, cutout squares of side / 2.
AugmentTransform sample_transform(std::span<const AugmentOp> ops, const ImageShape& shape, Rng& rng);

std::vector<double> apply_transform(const AugmentTransform& t, const ImageShape& shape,
                                    std::span<const double> images);

/// Transpose of apply_transform, used to pull pixel gradients back through it.
std::vector<double> transform_adjoint(const AugmentTransform& t, const ImageShape& shape,
                                      std::span<const double> grad);

struct AugmentedPair {
    std::vector<double> real;
    std::vector<double> synth;
    AugmentTransform transform;
};

/// Samples one transform from `seed` and applies it to both batches.
AugmentedPair paired_augment(const DataView& real_batch, const DataView& synth_batch,
                             std::span<const AugmentOp> ops, std::uint64_t seed);

}  // namespace distilla::distill
