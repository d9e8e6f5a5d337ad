// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>

#include "doctest.h"

#include "distilla/core/error.hpp"
#include "distilla/core/rng.hpp"
#include "distilla/nn/model.hpp"
#include "distilla/nn/network.hpp"
#include "distilla/nn/train.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

using namespace distilla;
using namespace distilla::nn;
using distilla::testing::central_differences;
using distilla::testing::max_relative_error;

namespace {

ModelSpec mlp_spec(ImageShape input, std::size_t width, std::size_t classes, std::size_t depth = 1) {
    return ModelSpec{Family::mlp, depth, width, Norm::none, input, classes};
}

ModelSpec conv_spec(ImageShape input, std::size_t width, std::size_t classes, Norm norm, std::size_t depth = 1) {
    return ModelSpec{Family::convnet, depth, width, norm, input, classes};
}

struct Batch {
    ImageShape shape;
    std::vector<double> images;
    std::vector<std::int64_t> labels;
    [[nodiscard]] DataView view() const { return {shape, images, labels}; }
};

Batch random_batch(ImageShape shape, std::size_t n, std::size_t classes, std::uint64_t seed) {
    Rng rng(seed);
    Batch b{shape, std::vector<double>(n * shape.size()), std::vector<std::int64_t>(n)};
    for (auto& v : b.images) v = rng.uniform();
    for (std::size_t i = 0; i < n; ++i) b.labels[i] = static_cast<std::int64_t>(i % classes);
    return b;
}

void check_param_gradient(const ModelSpec& spec, std::uint64_t seed, double tol) {
    const auto params = init_params(spec, seed);
    const auto batch = random_batch(spec.input, 6, spec.class_count, seed + 1);
    const auto analytic = loss_and_grad(spec, params, batch.view());
    const auto numeric = central_differences(
        [&](std::span<const double> x) {
            return loss(spec, ParameterVector({x.begin(), x.end()}, params.layout), batch.view());
        },
        params.values, distilla::testing::all_coords(params.size()));
    CHECK(max_relative_error(analytic.grad.values, numeric) <= tol);
}

}  // namespace

TEST_CASE("init_params: determinism, seed sensitivity and parameter count") {
    const auto spec = mlp_spec({1, 4, 4}, 5, 3);
    CHECK(init_params(spec, 9).values == init_params(spec, 9).values);
    CHECK(init_params(spec, 9).values != init_params(spec, 10).values);
    const std::size_t d = 16, w = 5, c = 3;
    CHECK(parameter_count(spec) == d * w + w + w * c + c);

    const auto conv = conv_spec({1, 8, 8}, 4, 2, Norm::instance, 2);
    const auto layout = layer_map(conv);
    CHECK(layout.front().name == "block0.conv.weight");
    CHECK(layout.back().name == "classifier.bias");
    CHECK(layout == layer_map(conv));
    const auto p = init_params(conv, 1);
    for (const auto& layer : layout) {
        if (layer.name.ends_with("bias")) {
            for (std::size_t i = 0; i < layer.size(); ++i) CHECK(p.values[layer.offset + i] == 0.0);
        }
    }
}

TEST_CASE("model spec validation") {
    CHECK_THROWS_AS(layer_map(conv_spec({1, 4, 4}, 2, 2, Norm::none, 3)), Error);
    CHECK_THROWS_AS(layer_map(mlp_spec({1, 4, 4}, 0, 2)), Error);
    const auto spec = conv_spec({3, 8, 8}, 4, 5, Norm::batch, 2);
    CHECK(model_spec_from_json(to_json(spec)) == spec);
}

TEST_CASE("loss: uniform logits give ln(C)") {
    for (const std::size_t classes : {2u, 3u, 10u}) {
        const auto spec = mlp_spec({1, 3, 3}, 4, classes);
        auto params = init_params(spec, 1);
        std::fill(params.values.begin(), params.values.end(), 0.0);
        const auto batch = random_batch(spec.input, 7, classes, 3);
        CHECK(loss(spec, params, batch.view()) == doctest::Approx(std::log(static_cast<double>(classes))).epsilon(1e-14));
    }
}

TEST_CASE("loss_and_grad matches central finite differences") {
    SUBCASE("two-layer mlp") { check_param_gradient(mlp_spec({1, 3, 3}, 6, 3), 4, 1e-4); }
    SUBCASE("deeper mlp") { check_param_gradient(mlp_spec({1, 2, 3}, 5, 2, 2), 5, 1e-4); }
    SUBCASE("convnet instance norm") { check_param_gradient(conv_spec({1, 4, 4}, 2, 2, Norm::instance), 6, 1e-4); }
    SUBCASE("convnet batch norm") { check_param_gradient(conv_spec({1, 4, 4}, 2, 3, Norm::batch), 7, 1e-4); }
    SUBCASE("convnet no norm, two blocks") { check_param_gradient(conv_spec({2, 4, 4}, 2, 2, Norm::none, 2), 8, 1e-4); }
}

TEST_CASE("input gradient and second-order products match finite differences") {
    for (const auto& spec : {conv_spec({1, 4, 4}, 2, 2, Norm::instance), mlp_spec({1, 3, 3}, 5, 3)}) {
        const auto params = init_params(spec, 12);
        const auto batch = random_batch(spec.input, 4, spec.class_count, 13);
        Rng rng(14);
        std::vector<double> direction(params.size());
        for (auto& v : direction) v = rng.uniform(-1.0, 1.0);

        const auto dd = directional_derivatives(spec, params, batch.view(), direction);
        const auto full = loss_and_full_grad(spec, params, batch.view());
        CHECK(max_relative_error(dd.grad, full.grad) <= 1e-12);
        CHECK(dd.loss == doctest::Approx(full.loss).epsilon(1e-14));

        auto pixel_loss = [&](std::span<const double> x) {
            return loss(spec, params, DataView{spec.input, x, batch.labels});
        };
        const auto numeric_x = central_differences(pixel_loss, batch.images,
                                                   distilla::testing::all_coords(batch.images.size()));
        CHECK(max_relative_error(full.input_grad, numeric_x) <= 1e-4);

        // d/dx (v . grad_theta L)
        auto directional = [&](std::span<const double> x) {
            const auto g = loss_and_grad(spec, params, DataView{spec.input, x, batch.labels});
            double dot = 0.0;
            for (std::size_t i = 0; i < direction.size(); ++i) dot += direction[i] * g.grad.values[i];
            return dot;
        };
        const auto numeric_vjp = central_differences(directional, batch.images,
                                                     distilla::testing::all_coords(batch.images.size()));
        CHECK(max_relative_error(dd.input_vjp, numeric_vjp) <= 1e-4);

        // H v via finite differences of the gradient along v.
        const double h = 1e-5;
        auto shifted = [&](double t) {
            auto p = params;
            for (std::size_t i = 0; i < p.size(); ++i) p.values[i] += t * direction[i];
            return loss_and_grad(spec, p, batch.view()).grad.values;
        };
        const auto up = shifted(h);
        const auto down = shifted(-h);
        std::vector<double> numeric_hvp(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) numeric_hvp[i] = (up[i] - down[i]) / (2.0 * h);
        CHECK(max_relative_error(dd.hvp, numeric_hvp) <= 1e-4);
    }
}

TEST_CASE("loss_and_grad: duplicating the batch leaves loss and gradient unchanged") {
    const auto spec = conv_spec({1, 4, 4}, 3, 3, Norm::instance);
    const auto params = init_params(spec, 2);
    const auto batch = random_batch(spec.input, 5, 3, 8);
    Batch doubled = batch;
    doubled.images.insert(doubled.images.end(), batch.images.begin(), batch.images.end());
    doubled.labels.insert(doubled.labels.end(), batch.labels.begin(), batch.labels.end());
    const auto a = loss_and_grad(spec, params, batch.view());
    const auto b = loss_and_grad(spec, params, doubled.view());
    CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-13));
    CHECK(max_relative_error(a.grad.values, b.grad.values, 1e-12) <= 1e-10);
}

TEST_CASE("loss_and_grad: shape errors") {
    const auto spec = mlp_spec({1, 3, 3}, 4, 2);
    const auto params = init_params(spec, 1);
    const auto wrong = random_batch({1, 4, 4}, 2, 2, 1);
    CHECK_THROWS_AS(loss_and_grad(spec, params, wrong.view()), Error);
    const auto empty = random_batch({1, 3, 3}, 0, 2, 1);
    CHECK_THROWS_AS(loss_and_grad(spec, params, empty.view()), Error);
    const auto other = init_params(mlp_spec({1, 3, 3}, 5, 2), 1);
    CHECK_THROWS_AS(loss_and_grad(spec, other, random_batch({1, 3, 3}, 2, 2, 1).view()), Error);
}

TEST_CASE("sgd_step: formula instances") {
    const LayerMap one{{"w", 0, {1}}};
    TrainConfig cfg;
    cfg.lr = 0.1;
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.0;

    ParameterVector p({1.0}, one);
    std::vector<double> v;
    sgd_step(p, ParameterVector({0.0}, one), v, cfg);
    CHECK(p.values[0] == 1.0);

    sgd_step(p, ParameterVector({2.0}, one), v, cfg);
    CHECK(p.values[0] == doctest::Approx(0.8).epsilon(1e-15));

    cfg.momentum = 0.9;
    ParameterVector q({0.0}, one);
    std::vector<double> vq;
    const double g = 3.0;
    sgd_step(q, ParameterVector({g}, one), vq, cfg);
    const double after_first = q.values[0];
    sgd_step(q, ParameterVector({g}, one), vq, cfg);
    CHECK(std::abs(q.values[0] - after_first) == doctest::Approx(cfg.lr * 1.9 * g).epsilon(1e-14));

    std::vector<double> bad(3);
    CHECK_THROWS_AS(sgd_step(q, ParameterVector({g}, one), bad, cfg), Error);
    CHECK_THROWS_AS(sgd_step(q, ParameterVector({1.0, 2.0}, LayerMap{{"w", 0, {2}}}), vq, cfg), Error);
}

TEST_CASE("train: degenerate configurations leave parameters untouched") {
    const auto data = make_blobs_dataset(1, 2, 10, 6, 0.2);
    const auto spec = mlp_spec(data.shape(), 8, 2);
    const auto p0 = init_params(spec, 3);
    TrainConfig cfg;
    cfg.epochs = 0;
    cfg.snapshot_every = 5;
    const auto none = train(spec, p0, data.view(), cfg);
    CHECK(none.params.values == p0.values);
    REQUIRE(none.snapshots.size() == 1);
    CHECK(none.snapshots[0].step == 0);
    CHECK(none.snapshots[0].params.values == p0.values);

    cfg.epochs = 3;
    cfg.lr = 0.0;
    cfg.weight_decay = 0.0;
    CHECK(train(spec, p0, data.view(), cfg).params.values == p0.values);
}

TEST_CASE("train: reaches high accuracy on easy blobs, deterministically") {
    const auto data = make_blobs_dataset(21, 2, 50, 8, 0.2);
    const auto spec = mlp_spec(data.shape(), 32, 2);
    TrainConfig cfg;
    cfg.lr = 0.05;
    cfg.batch_size = 16;
    cfg.epochs = 30;
    cfg.seed = 4;
    cfg.snapshot_every = 7;
    const auto p0 = init_params(spec, 5);
    const auto result = train(spec, p0, data.view(), cfg);
    CHECK(evaluate_accuracy(spec, result.params, data.view()) >= 0.95);
    CHECK(result.epoch_losses.back() < result.epoch_losses.front());
    CHECK(result.snapshots.front().params.values == p0.values);
    CHECK(result.snapshots.back().params.values == result.params.values);
    CHECK(result.snapshots.back().step == result.steps);
    CHECK(result.steps == 30 * 7);
    CHECK(train(spec, p0, data.view(), cfg).params.values == result.params.values);
}

TEST_CASE("train: convnet loss decreases on blobs") {
    const auto data = make_blobs_dataset(22, 4, 40, 8, 0.3);
    const auto spec = conv_spec(data.shape(), 6, 4, Norm::instance, 2);
    TrainConfig cfg;
    cfg.lr = 0.02;
    cfg.batch_size = 32;
    cfg.epochs = 8;
    const auto result = train(spec, init_params(spec, 1), data.view(), cfg);
    CHECK(result.epoch_losses.back() < result.epoch_losses.front());
}

TEST_CASE("train: hooks see every example once per epoch") {
    const auto data = make_blobs_dataset(1, 2, 9, 6, 0.2);
    const auto spec = mlp_spec(data.shape(), 4, 2);
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.epochs = 2;
    std::vector<std::size_t> seen(data.size(), 0);
    std::size_t steps = 0;
    TrainHooks hooks;
    hooks.on_batch = [&](std::size_t, std::span<const std::size_t> batch) {
        for (const auto i : batch) ++seen[i];
    };
    hooks.on_step = [&](std::size_t, const ParameterVector&) { ++steps; };
    train(spec, init_params(spec, 1), data.view(), cfg, &hooks);
    for (const auto count : seen) CHECK(count == 2);
    CHECK(steps == 2 * 5);
}

TEST_CASE("evaluate_accuracy: perfect, constant and random predictors") {
    const auto data = make_blobs_dataset(3, 4, 25, 8, 0.2);
    const auto spec = mlp_spec(data.shape(), 8, 4);
    const auto params = init_params(spec, 2);

    const auto predictions = predict(spec, params, data.view());
    CHECK(evaluate_accuracy(spec, params, DataView{data.shape(), data.images(), predictions}) == 1.0);

    auto zero = params;
    std::fill(zero.values.begin(), zero.values.end(), 0.0);
    CHECK(evaluate_accuracy(spec, zero, data.view()) == doctest::Approx(0.25));
    for (const auto p : predict(spec, zero, data.view())) CHECK(p == 0);

    const auto conv = conv_spec(data.shape(), 4, 4, Norm::instance, 2);
    double mean = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) mean += evaluate_accuracy(conv, init_params(conv, seed), data.view()) / 5.0;
    CHECK(mean >= 0.05);
    CHECK(mean <= 0.55);
    const auto empty = data.subset(std::vector<std::size_t>{});
    CHECK_THROWS_AS(evaluate_accuracy(spec, params, empty.view()), Error);
}

TEST_CASE("param_distance_sq") {
    const LayerMap two{{"w", 0, {2}}};
    const ParameterVector a({1.0, 0.0}, two);
    const ParameterVector b({0.0, 1.0}, two);
    CHECK(param_distance_sq(a, a) == 0.0);
    CHECK(param_distance_sq(a, b) == 2.0);
    const ParameterVector a3({3.0, 0.0}, two);
    const ParameterVector b3({0.0, 3.0}, two);
    CHECK(param_distance_sq(a3, b3) == doctest::Approx(9.0 * param_distance_sq(a, b)));
    CHECK_THROWS_AS(param_distance_sq(a, ParameterVector({1.0}, LayerMap{{"w", 0, {1}}})), Error);
}

TEST_CASE("parameter persistence round-trips") {
    distilla::testing::TempDir dir;
    const auto spec = conv_spec({1, 6, 6}, 3, 3, Norm::instance, 2);
    auto params = init_params(spec, 8);
    params.round_to_f32();
    save_params(params, dir / "p");
    const auto loaded = load_params(dir / "p");
    CHECK(loaded.values == params.values);
    CHECK(loaded.layout == params.layout);
    save_params(loaded, dir / "q");
    CHECK(distilla::testing::tree_bytes(dir / "p") == distilla::testing::tree_bytes(dir / "q"));
}
