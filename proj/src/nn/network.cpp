// SPDX-License-Identifier: Apache-2.0
#include "distilla/nn/network.hpp"

#include <algorithm>
#include <cmath>

#include "distilla/core/error.hpp"
#include "distilla/nn/dual.hpp"

namespace distilla::nn {
namespace {

constexpr double kNormEps = 1e-5;

// ---- primitive layers, all buffers row-major --------------------------------

template <class T>
void linear_forward(const T* in, std::size_t n, std::size_t k, const T* weight, const T* bias, std::size_t m,
                    T* out) {
    for (std::size_t s = 0; s < n; ++s) {
        const T* x = in + s * k;
        for (std::size_t j = 0; j < m; ++j) {
            const T* w = weight + j * k;
            T acc = bias[j];
            for (std::size_t i = 0; i < k; ++i) acc += w[i] * x[i];
            out[s * m + j] = acc;
        }
    }
}

template <class T>
void linear_backward(const T* in, std::size_t n, std::size_t k, const T* weight, std::size_t m, const T* dout,
                     T* dweight, T* dbias, T* din) {
    for (std::size_t s = 0; s < n; ++s) {
        const T* x = in + s * k;
        const T* g = dout + s * m;
        for (std::size_t j = 0; j < m; ++j) {
            const T gj = g[j];
            dbias[j] += gj;
            T* dw = dweight + j * k;
            for (std::size_t i = 0; i < k; ++i) dw[i] += gj * x[i];
        }
        if (din != nullptr) {
            T* dx = din + s * k;
            for (std::size_t j = 0; j < m; ++j) {
                const T gj = g[j];
                const T* w = weight + j * k;
                for (std::size_t i = 0; i < k; ++i) dx[i] += gj * w[i];
            }
        }
    }
}

struct Plane {
    std::size_t channels;
    std::size_t height;
    std::size_t width;
    [[nodiscard]] std::size_t area() const { return height * width; }
    [[nodiscard]] std::size_t size() const { return channels * height * width; }
};

// 3x3 convolution, stride 1, zero padding 1.
template <class T>
void conv_forward(const T* in, std::size_t n, Plane p, const T* weight, const T* bias, std::size_t cout, T* out) {
    const std::size_t h = p.height;
    const std::size_t w = p.width;
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t o = 0; o < cout; ++o) {
            T* y = out + (s * cout + o) * h * w;
            for (std::size_t q = 0; q < h * w; ++q) y[q] = bias[o];
            for (std::size_t c = 0; c < p.channels; ++c) {
                const T* x = in + (s * p.channels + c) * h * w;
                const T* k = weight + (o * p.channels + c) * 9;
                for (std::size_t ky = 0; ky < 3; ++ky) {
                    const std::size_t y0 = ky == 0 ? 1 : 0;
                    const std::size_t y1 = ky == 2 ? h - 1 : h;
                    for (std::size_t kx = 0; kx < 3; ++kx) {
                        const T kv = k[ky * 3 + kx];
                        const std::size_t x0 = kx == 0 ? 1 : 0;
                        const std::size_t x1 = kx == 2 ? w - 1 : w;
                        for (std::size_t yy = y0; yy < y1; ++yy) {
                            const T* xr = x + (yy + ky - 1) * w + (kx - 1);
                            T* yr = y + yy * w;
                            for (std::size_t xx = x0; xx < x1; ++xx) yr[xx] += kv * xr[xx];
                        }
                    }
                }
            }
        }
    }
}

template <class T>
void conv_backward(const T* in, std::size_t n, Plane p, const T* weight, std::size_t cout, const T* dout,
                   T* dweight, T* dbias, T* din) {
    const std::size_t h = p.height;
    const std::size_t w = p.width;
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t o = 0; o < cout; ++o) {
            const T* g = dout + (s * cout + o) * h * w;
            T bsum = T(0.0);
            for (std::size_t q = 0; q < h * w; ++q) bsum += g[q];
            dbias[o] += bsum;
            for (std::size_t c = 0; c < p.channels; ++c) {
                const T* x = in + (s * p.channels + c) * h * w;
                const T* k = weight + (o * p.channels + c) * 9;
                T* dk = dweight + (o * p.channels + c) * 9;
                T* dx = din != nullptr ? din + (s * p.channels + c) * h * w : nullptr;
                for (std::size_t ky = 0; ky < 3; ++ky) {
                    const std::size_t y0 = ky == 0 ? 1 : 0;
                    const std::size_t y1 = ky == 2 ? h - 1 : h;
                    for (std::size_t kx = 0; kx < 3; ++kx) {
                        const std::size_t x0 = kx == 0 ? 1 : 0;
                        const std::size_t x1 = kx == 2 ? w - 1 : w;
                        const T kv = k[ky * 3 + kx];
                        T acc = T(0.0);
                        for (std::size_t yy = y0; yy < y1; ++yy) {
                            const std::size_t row = (yy + ky - 1) * w + (kx - 1);
                            const T* xr = x + row;
                            const T* gr = g + yy * w;
                            for (std::size_t xx = x0; xx < x1; ++xx) acc += gr[xx] * xr[xx];
                            if (dx != nullptr) {
                                T* dxr = dx + row;
                                for (std::size_t xx = x0; xx < x1; ++xx) dxr[xx] += kv * gr[xx];
                            }
                        }
                        dk[ky * 3 + kx] += acc;
                    }
                }
            }
        }
    }
}

// Normalization over groups. Instance norm: one group per (sample, channel)
// spanning the plane. Batch norm: one group per channel spanning the batch.
template <class T>
struct NormState {
    std::vector<T> xhat;
    std::vector<T> inv_std;
};

template <class T>
void norm_forward(const T* in, std::size_t n, std::size_t channels, std::size_t area, bool per_instance,
                  const T* gamma, const T* beta, T* out, NormState<T>& st) {
    st.xhat.assign(n * channels * area, T(0.0));
    st.inv_std.assign(per_instance ? n * channels : channels, T(0.0));
    auto index = [&](std::size_t s, std::size_t c, std::size_t q) { return (s * channels + c) * area + q; };
    if (per_instance) {
        const double count = static_cast<double>(area);
        for (std::size_t s = 0; s < n; ++s) {
            for (std::size_t c = 0; c < channels; ++c) {
                const T* x = in + index(s, c, 0);
                T mean = T(0.0);
                for (std::size_t q = 0; q < area; ++q) mean += x[q];
                mean = mean / T(count);
                T var = T(0.0);
                for (std::size_t q = 0; q < area; ++q) {
                    const T dev = x[q] - mean;
                    var += dev * dev;
                }
                var = var / T(count);
                using std::sqrt;
                const T inv = T(1.0) / sqrt(var + T(kNormEps));
                st.inv_std[s * channels + c] = inv;
                for (std::size_t q = 0; q < area; ++q) {
                    const T xh = (x[q] - mean) * inv;
                    st.xhat[index(s, c, q)] = xh;
                    out[index(s, c, q)] = gamma[c] * xh + beta[c];
                }
            }
        }
    } else {
        const double count = static_cast<double>(n * area);
        for (std::size_t c = 0; c < channels; ++c) {
            T mean = T(0.0);
            for (std::size_t s = 0; s < n; ++s)
                for (std::size_t q = 0; q < area; ++q) mean += in[index(s, c, q)];
            mean = mean / T(count);
            T var = T(0.0);
            for (std::size_t s = 0; s < n; ++s)
                for (std::size_t q = 0; q < area; ++q) {
                    const T dev = in[index(s, c, q)] - mean;
                    var += dev * dev;
                }
            var = var / T(count);
            using std::sqrt;
            const T inv = T(1.0) / sqrt(var + T(kNormEps));
            st.inv_std[c] = inv;
            for (std::size_t s = 0; s < n; ++s)
                for (std::size_t q = 0; q < area; ++q) {
                    const T xh = (in[index(s, c, q)] - mean) * inv;
                    st.xhat[index(s, c, q)] = xh;
                    out[index(s, c, q)] = gamma[c] * xh + beta[c];
                }
        }
    }
}

template <class T>
void norm_backward(std::size_t n, std::size_t channels, std::size_t area, bool per_instance, const T* gamma,
                   const NormState<T>& st, const T* dout, T* dgamma, T* dbeta, T* din) {
    auto index = [&](std::size_t s, std::size_t c, std::size_t q) { return (s * channels + c) * area + q; };
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t q = 0; q < area; ++q) {
                const std::size_t i = index(s, c, q);
                dgamma[c] += dout[i] * st.xhat[i];
                dbeta[c] += dout[i];
            }
    // dx = inv/N * (N*dxh - sum(dxh) - xh * sum(dxh*xh)), dxh = dout * gamma
    auto finish_group = [&](auto&& for_each_index, std::size_t count, const T& inv, std::size_t c) {
        T sum = T(0.0);
        T sum_x = T(0.0);
        for_each_index([&](std::size_t i) {
            const T dxh = dout[i] * gamma[c];
            sum += dxh;
            sum_x += dxh * st.xhat[i];
        });
        const T scale = inv / T(static_cast<double>(count));
        const T big_n = T(static_cast<double>(count));
        for_each_index([&](std::size_t i) {
            const T dxh = dout[i] * gamma[c];
            din[i] += scale * (big_n * dxh - sum - st.xhat[i] * sum_x);
        });
    };
    if (per_instance) {
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t c = 0; c < channels; ++c) {
                finish_group(
                    [&](auto&& f) {
                        for (std::size_t q = 0; q < area; ++q) f(index(s, c, q));
                    },
                    area, st.inv_std[s * channels + c], c);
            }
    } else {
        for (std::size_t c = 0; c < channels; ++c) {
            finish_group(
                [&](auto&& f) {
                    for (std::size_t s = 0; s < n; ++s)
                        for (std::size_t q = 0; q < area; ++q) f(index(s, c, q));
                },
                n * area, st.inv_std[c], c);
        }
    }
}

template <class T>
void avgpool_forward(const T* in, std::size_t n, Plane p, T* out) {
    const std::size_t oh = p.height / 2;
    const std::size_t ow = p.width / 2;
    for (std::size_t g = 0; g < n * p.channels; ++g) {
        const T* x = in + g * p.area();
        T* y = out + g * oh * ow;
        for (std::size_t yy = 0; yy < oh; ++yy)
            for (std::size_t xx = 0; xx < ow; ++xx) {
                const T* r0 = x + (2 * yy) * p.width + 2 * xx;
                const T* r1 = r0 + p.width;
                y[yy * ow + xx] = (r0[0] + r0[1] + r1[0] + r1[1]) * T(0.25);
            }
    }
}

template <class T>
void avgpool_backward(std::size_t n, Plane p, const T* dout, T* din) {
    const std::size_t oh = p.height / 2;
    const std::size_t ow = p.width / 2;
    for (std::size_t g = 0; g < n * p.channels; ++g) {
        T* dx = din + g * p.area();
        const T* dy = dout + g * oh * ow;
        for (std::size_t yy = 0; yy < oh; ++yy)
            for (std::size_t xx = 0; xx < ow; ++xx) {
                const T v = dy[yy * ow + xx] * T(0.25);
                T* r0 = dx + (2 * yy) * p.width + 2 * xx;
                T* r1 = r0 + p.width;
                r0[0] += v;
                r0[1] += v;
                r1[0] += v;
                r1[1] += v;
            }
    }
}

// ---- whole-network pass -----------------------------------------------------

template <class T>
struct BlockCache {
    Plane in_plane;
    std::vector<T> input;   // block input
    std::vector<T> conv;    // conv output (pre-norm)
    std::vector<T> normed;  // pre-activation
    NormState<T> norm;
};

/// Forward (and optional backward) pass. Returns mean cross-entropy when labels
/// are given. grad_params / grad_images are accumulated into when non-null.
template <class T>
T run_network(const ModelSpec& spec, const LayerMap& map, const T* params, const T* images, std::size_t n,
              const std::int64_t* labels, T* grad_params, T* grad_images, std::vector<T>* logits_out) {
    const bool backward = grad_params != nullptr || grad_images != nullptr;
    std::vector<T> scratch_grad;
    if (backward && grad_params == nullptr) {
        scratch_grad.assign(map.back().offset + map.back().size(), T(0.0));
        grad_params = scratch_grad.data();
    }
    std::size_t layer_cursor = 0;
    auto next_layer = [&]() -> const LayerInfo& { return map[layer_cursor++]; };

    std::vector<BlockCache<T>> blocks;
    std::vector<std::vector<T>> mlp_inputs;
    std::vector<T> act(images, images + n * spec.input.size());
    std::size_t features = 0;

    if (spec.family == Family::convnet) {
        Plane plane{spec.input.channels, spec.input.height, spec.input.width};
        for (std::size_t b = 0; b < spec.depth; ++b) {
            BlockCache<T> cache;
            cache.in_plane = plane;
            const auto& wl = next_layer();
            const auto& bl = next_layer();
            const Plane out_plane{spec.width, plane.height, plane.width};
            cache.conv.assign(n * out_plane.size(), T(0.0));
            conv_forward(act.data(), n, plane, params + wl.offset, params + bl.offset, spec.width, cache.conv.data());
            if (spec.norm != Norm::none) {
                const auto& gl = next_layer();
                const auto& betal = next_layer();
                cache.normed.assign(cache.conv.size(), T(0.0));
                norm_forward(cache.conv.data(), n, spec.width, out_plane.area(), spec.norm == Norm::instance,
                             params + gl.offset, params + betal.offset, cache.normed.data(), cache.norm);
            } else {
                cache.normed = cache.conv;
            }
            std::vector<T> relu(cache.normed.size());
            for (std::size_t i = 0; i < relu.size(); ++i) relu[i] = cache.normed[i] > T(0.0) ? cache.normed[i] : T(0.0);
            const Plane pooled{spec.width, plane.height / 2, plane.width / 2};
            std::vector<T> pooled_act(n * pooled.size());
            avgpool_forward(relu.data(), n, out_plane, pooled_act.data());
            cache.input = std::move(act);
            act = std::move(pooled_act);
            blocks.push_back(std::move(cache));
            plane = pooled;
        }
        features = plane.size();
    } else {
        std::size_t in = spec.input.size();
        for (std::size_t l = 0; l < spec.depth; ++l) {
            const auto& wl = next_layer();
            const auto& bl = next_layer();
            std::vector<T> pre(n * spec.width);
            linear_forward(act.data(), n, in, params + wl.offset, params + bl.offset, spec.width, pre.data());
            mlp_inputs.push_back(std::move(act));
            mlp_inputs.push_back(pre);  // pre-activation, for the ReLU mask
            for (auto& v : pre) v = v > T(0.0) ? v : T(0.0);
            act = std::move(pre);
            in = spec.width;
        }
        features = in;
    }

    const auto& cw = next_layer();
    const auto& cb = next_layer();
    const std::size_t classes = spec.class_count;
    std::vector<T> logits(n * classes);
    linear_forward(act.data(), n, features, params + cw.offset, params + cb.offset, classes, logits.data());
    if (logits_out != nullptr) *logits_out = logits;
    if (labels == nullptr) return T(0.0);

    // Softmax cross-entropy, mean over the batch.
    T total = T(0.0);
    std::vector<T> dlogits(backward ? n * classes : 0);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t s = 0; s < n; ++s) {
        const T* z = logits.data() + s * classes;
        T zmax = z[0];
        for (std::size_t c = 1; c < classes; ++c) if (z[c] > zmax) zmax = z[c];
        T sum = T(0.0);
        using std::exp;
        using std::log;
        for (std::size_t c = 0; c < classes; ++c) sum += exp(z[c] - zmax);
        const T lse = zmax + log(sum);
        const auto y = static_cast<std::size_t>(labels[s]);
        total += lse - z[y];
        if (backward) {
            for (std::size_t c = 0; c < classes; ++c) {
                T p = exp(z[c] - lse);
                if (c == y) p -= T(1.0);
                dlogits[s * classes + c] = p * T(inv_n);
            }
        }
    }
    const T mean_loss = total * T(inv_n);
    if (!backward) return mean_loss;

    std::vector<T> dact(n * features, T(0.0));
    linear_backward(act.data(), n, features, params + cw.offset, classes, dlogits.data(), grad_params + cw.offset,
                    grad_params + cb.offset, dact.data());

    if (spec.family == Family::convnet) {
        std::size_t cursor = 0;
        // Layer indices per block for the backward walk.
        std::vector<std::size_t> block_first(spec.depth);
        for (std::size_t b = 0; b < spec.depth; ++b) {
            block_first[b] = cursor;
            cursor += spec.norm != Norm::none ? 4 : 2;
        }
        for (std::size_t b = spec.depth; b-- > 0;) {
            auto& cache = blocks[b];
            const Plane plane = cache.in_plane;
            const Plane out_plane{spec.width, plane.height, plane.width};
            std::vector<T> drelu(n * out_plane.size(), T(0.0));
            avgpool_backward(n, out_plane, dact.data(), drelu.data());
            for (std::size_t i = 0; i < drelu.size(); ++i)
                if (!(cache.normed[i] > T(0.0))) drelu[i] = T(0.0);
            const auto& wl = map[block_first[b]];
            const auto& bl = map[block_first[b] + 1];
            std::vector<T> dconv;
            if (spec.norm != Norm::none) {
                const auto& gl = map[block_first[b] + 2];
                const auto& betal = map[block_first[b] + 3];
                dconv.assign(drelu.size(), T(0.0));
                norm_backward(n, spec.width, out_plane.area(), spec.norm == Norm::instance, params + gl.offset,
                              cache.norm, drelu.data(), grad_params + gl.offset, grad_params + betal.offset,
                              dconv.data());
            } else {
                dconv = std::move(drelu);
            }
            const bool need_input = b > 0 || grad_images != nullptr;
            std::vector<T> din(need_input ? n * plane.size() : 0, T(0.0));
            conv_backward(cache.input.data(), n, plane, params + wl.offset, spec.width, dconv.data(),
                          grad_params + wl.offset, grad_params + bl.offset, need_input ? din.data() : nullptr);
            dact = std::move(din);
        }
    } else {
        for (std::size_t l = spec.depth; l-- > 0;) {
            const auto& wl = map[2 * l];
            const auto& bl = map[2 * l + 1];
            const auto& input = mlp_inputs[2 * l];
            const auto& pre = mlp_inputs[2 * l + 1];
            for (std::size_t i = 0; i < dact.size(); ++i)
                if (!(pre[i] > T(0.0))) dact[i] = T(0.0);
            const std::size_t in = l == 0 ? spec.input.size() : spec.width;
            const bool need_input = l > 0 || grad_images != nullptr;
            std::vector<T> din(need_input ? n * in : 0, T(0.0));
            linear_backward(input.data(), n, in, params + wl.offset, spec.width, dact.data(), grad_params + wl.offset,
                            grad_params + bl.offset, need_input ? din.data() : nullptr);
            dact = std::move(din);
        }
    }
    if (grad_images != nullptr) {
        for (std::size_t i = 0; i < dact.size(); ++i) grad_images[i] += dact[i];
    }
    return mean_loss;
}

void check_batch(const ModelSpec& spec, const ParameterVector& params, const DataView& batch) {
    require(!batch.empty(), Errc::invalid_argument, "batch is empty");
    require(batch.shape == spec.input, Errc::shape_mismatch, "batch image shape does not match the model input");
    require(batch.images.size() == batch.size() * spec.input.size(), Errc::shape_mismatch,
            "batch image buffer does not match its label count");
    require(params.layout == layer_map(spec), Errc::layout_mismatch, "parameters do not match the model spec");
    for (const auto label : batch.labels) {
        require(label >= 0 && static_cast<std::size_t>(label) < spec.class_count, Errc::invalid_argument,
                "label outside the model's class range");
    }
}

}  // namespace

LossAndGrad loss_and_grad(const ModelSpec& spec, const ParameterVector& params, const DataView& batch) {
    check_batch(spec, params, batch);
    LossAndGrad out{0.0, ParameterVector::zeros_like(params)};
    out.loss = run_network<double>(spec, params.layout, params.values.data(), batch.images.data(), batch.size(),
                                   batch.labels.data(), out.grad.values.data(), nullptr, nullptr);
    return out;
}

double loss(const ModelSpec& spec, const ParameterVector& params, const DataView& batch) {
    check_batch(spec, params, batch);
    return run_network<double>(spec, params.layout, params.values.data(), batch.images.data(), batch.size(),
                               batch.labels.data(), nullptr, nullptr, nullptr);
}

FullGradients loss_and_full_grad(const ModelSpec& spec, const ParameterVector& params, const DataView& batch) {
    check_batch(spec, params, batch);
    FullGradients out;
    out.grad.assign(params.size(), 0.0);
    out.input_grad.assign(batch.images.size(), 0.0);
    out.loss = run_network<double>(spec, params.layout, params.values.data(), batch.images.data(), batch.size(),
                                   batch.labels.data(), out.grad.data(), out.input_grad.data(), nullptr);
    return out;
}

DirectionalDerivatives directional_derivatives(const ModelSpec& spec, const ParameterVector& params,
                                               const DataView& batch, std::span<const double> direction) {
    check_batch(spec, params, batch);
    require(direction.size() == params.size(), Errc::layout_mismatch, "direction does not match parameter count");
    std::vector<Dual> p(params.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = Dual(params.values[i], direction[i]);
    std::vector<Dual> x(batch.images.begin(), batch.images.end());
    std::vector<Dual> gp(params.size());
    std::vector<Dual> gx(x.size());
    const Dual l = run_network<Dual>(spec, params.layout, p.data(), x.data(), batch.size(), batch.labels.data(),
                                     gp.data(), gx.data(), nullptr);
    DirectionalDerivatives out;
    out.loss = l.v;
    out.grad.resize(gp.size());
    out.hvp.resize(gp.size());
    for (std::size_t i = 0; i < gp.size(); ++i) {
        out.grad[i] = gp[i].v;
        out.hvp[i] = gp[i].d;
    }
    out.input_grad.resize(gx.size());
    out.input_vjp.resize(gx.size());
    for (std::size_t i = 0; i < gx.size(); ++i) {
        out.input_grad[i] = gx[i].v;
        out.input_vjp[i] = gx[i].d;
    }
    return out;
}

std::vector<double> logits(const ModelSpec& spec, const ParameterVector& params, const DataView& batch) {
    require(batch.shape == spec.input, Errc::shape_mismatch, "batch image shape does not match the model input");
    require(params.layout == layer_map(spec), Errc::layout_mismatch, "parameters do not match the model spec");
    std::vector<double> out;
    if (batch.empty()) return out;
    run_network<double>(spec, params.layout, params.values.data(), batch.images.data(), batch.size(), nullptr,
                        nullptr, nullptr, &out);
    return out;
}

}  // namespace distilla::nn
