// SPDX-License-Identifier: Apache-2.0
#include "distilla/distill/augment.hpp"

#include <algorithm>
#include <string>

#include "distilla/core/error.hpp"

namespace distilla::distill {

std::string_view to_string(AugmentOp op) noexcept {
    switch (op) {
        case AugmentOp::flip: return "flip";
        case AugmentOp::shift: return "shift";
        case AugmentOp::cutout: return "cutout";
    }
    return "flip";
}

AugmentOp parse_augment_op(std::string_view text) {
    if (text == "flip") return AugmentOp::flip;
    if (text == "shift") return AugmentOp::shift;
    if (text == "cutout") return AugmentOp::cutout;
    throw Error(Errc::invalid_argument, "unknown augmentation '" + std::string(text) + "'");
}

AugmentTransform sample_transform(std::span<const AugmentOp> ops, const ImageShape& shape, Rng& rng) {
    AugmentTransform t;
    if (ops.empty()) return t;
    switch (ops[rng.below(ops.size())]) {
        case AugmentOp::flip:
            t.kind = AugmentTransform::Kind::flip;
            break;
        case AugmentOp::shift: {
            t.kind = AugmentTransform::Kind::shift;
            const auto reach = [&](std::size_t side) { return static_cast<int>(std::max<std::size_t>(1, side / 8)); };
            const int ry = reach(shape.height);
            const int rx = reach(shape.width);
            t.dy = static_cast<int>(rng.below(static_cast<std::size_t>(2 * ry + 1))) - ry;
            t.dx = static_cast<int>(rng.below(static_cast<std::size_t>(2 * rx + 1))) - rx;
            break;
        }
        case AugmentOp::cutout: {
            t.kind = AugmentTransform::Kind::cutout;
            t.extent = std::max<std::size_t>(1, std::min(shape.height, shape.width) / 2);
            t.top = rng.below(shape.height - t.extent + 1);
            t.left = rng.below(shape.width - t.extent + 1);
            break;
        }
    }
    return t;
}

namespace {

// Every transform here maps output pixel (y, x) to at most one input pixel.
// Returns false when the output pixel is zero.
bool source_pixel(const AugmentTransform& t, const ImageShape& s, std::size_t y, std::size_t x, std::size_t& sy,
                  std::size_t& sx) {
    using Kind = AugmentTransform::Kind;
    sy = y;
    sx = x;
    switch (t.kind) {
        case Kind::identity:
            return true;
        case Kind::flip:
            sx = s.width - 1 - x;
            return true;
        case Kind::shift: {
            const long yy = static_cast<long>(y) - t.dy;
            const long xx = static_cast<long>(x) - t.dx;
            if (yy < 0 || xx < 0 || yy >= static_cast<long>(s.height) || xx >= static_cast<long>(s.width)) return false;
            sy = static_cast<std::size_t>(yy);
            sx = static_cast<std::size_t>(xx);
            return true;
        }
        case Kind::cutout:
            return !(y >= t.top && y < t.top + t.extent && x >= t.left && x < t.left + t.extent);
    }
    return true;
}

template <bool Adjoint>
std::vector<double> map_pixels(const AugmentTransform& t, const ImageShape& s, std::span<const double> in) {
    std::vector<double> out(in.size(), 0.0);
    const std::size_t plane = s.height * s.width;
    const std::size_t planes = in.size() / plane;
    for (std::size_t p = 0; p < planes; ++p) {
        const std::size_t base = p * plane;
        for (std::size_t y = 0; y < s.height; ++y) {
            for (std::size_t x = 0; x < s.width; ++x) {
                std::size_t sy = 0, sx = 0;
                if (!source_pixel(t, s, y, x, sy, sx)) continue;
                const std::size_t dst = base + y * s.width + x;
                const std::size_t src = base + sy * s.width + sx;
                if constexpr (Adjoint)
                    out[src] += in[dst];
                else
                    out[dst] = in[src];
            }
        }
    }
    return out;
}

}  // namespace

std::vector<double> apply_transform(const AugmentTransform& t, const ImageShape& shape,
                                    std::span<const double> images) {
    require(images.size() % shape.size() == 0, Errc::shape_mismatch, "pixel buffer is not a whole number of images");
    if (t.kind == AugmentTransform::Kind::identity) return {images.begin(), images.end()};
    return map_pixels<false>(t, shape, images);
}

std::vector<double> transform_adjoint(const AugmentTransform& t, const ImageShape& shape,
                                      std::span<const double> grad) {
    require(grad.size() % shape.size() == 0, Errc::shape_mismatch, "pixel buffer is not a whole number of images");
    if (t.kind == AugmentTransform::Kind::identity) return {grad.begin(), grad.end()};
    return map_pixels<true>(t, shape, grad);
}

AugmentedPair paired_augment(const DataView& real_batch, const DataView& synth_batch,
                             std::span<const AugmentOp> ops, std::uint64_t seed) {
    require(real_batch.shape == synth_batch.shape, Errc::shape_mismatch, "paired batches differ in image shape");
    Rng rng(derive_seed(seed, stream::augment));
    AugmentedPair out;
    out.transform = sample_transform(ops, real_batch.shape, rng);
    out.real = apply_transform(out.transform, real_batch.shape, real_batch.images);
    out.synth = apply_transform(out.transform, synth_batch.shape, synth_batch.images);
    return out;
}

}  // namespace distilla::distill
