#include <catch2/catch_amalgamated.hpp>

#include "fabulight/model.hpp"
#include "helpers.hpp"

using namespace fabulight;
using testutil::random_tensor;

namespace {

WeightStore<double> tiny_store(Mode mode, std::uint64_t seed = 7, bool trainable = false) {
    ModelConfig cfg;
    cfg.mode = mode;
    cfg.body = BodyVariant::upper;
    cfg.face_size = 16;
    return init_weights<double>(cfg, seed, trainable);
}

ModelInputs<double> tiny_inputs(Rng& rng, std::size_t frames) {
    ModelInputs<double> in;
    in.faces = random_tensor<double>({1, 16, 16, frames}, rng);
    in.mfcc = random_tensor<double>({1, 13, 4 * frames}, rng);
    in.poses = random_tensor<double>({3, 11, frames}, rng);
    return in;
}

}  // namespace

TEST_CASE("fuse is the element-wise sum") {
    Rng rng(91);
    TensorD a = random_tensor<double>({128, 4}, rng);
    TensorD b = random_tensor<double>({128, 4}, rng);
    TensorD c = random_tensor<double>({128, 4}, rng);

    CHECK(testutil::max_abs_diff(fuse<double>({a}), a) == 0.0);
    TensorD with_zero = fuse<double>({a, TensorD::zeros({128, 4})});
    CHECK(testutil::max_abs_diff(with_zero, a) == 0.0);
    TensorD abc = fuse<double>({a, b, c});
    TensorD cab = fuse<double>({c, a, b});
    CHECK(testutil::max_abs_diff(abc, cab) == 0.0);

    CHECK_THROWS_AS(fuse<double>({a, random_tensor<double>({128, 5}, rng)}), dimension_error);
    CHECK_THROWS_AS(fuse<double>(std::vector<TensorD>{}), dimension_error);
}

TEST_CASE("classify produces T x 2 scores and zero weights give zero scores") {
    Rng rng(92);
    auto store = tiny_store(Mode::lightasd);
    TensorD feat = random_tensor<double>({128, 5}, rng);
    CHECK(classify(feat, store, "main").shape() == Shape{5, 2});

    for (const auto& name : store.param_order)
        if (name.rfind("head.main", 0) == 0)
            std::fill(store.param(name).value().begin(), store.param(name).value().end(), 0.0);
    TensorD scores = classify(feat, store, "main");
    for (double v : scores.value()) CHECK(v == 0.0);

    CHECK_THROWS_AS(classify(TensorD::zeros({128, 0}), store, "main"), input_error);
}

TEST_CASE("classification context spans the whole clip") {
    Rng rng(93);
    auto store = tiny_store(Mode::lightasd, 11);
    TensorD feat = random_tensor<double>({128, 8}, rng);
    TensorD base = classify(feat, store, "main");

    TensorD poked(feat.shape(), feat.value());
    for (std::size_t c = 0; c < 128; ++c) poked.at({c, 0}) += rng.uniform(0.5, 1.0);
    TensorD moved = classify(poked, store, "main");
    double last_frame_diff = 0.0;
    for (std::size_t k = 0; k < 2; ++k)
        last_frame_diff = std::max(last_frame_diff, std::abs(base.at({7, k}) - moved.at({7, k})));
    CHECK(last_frame_diff > 0.0);
}

TEST_CASE("predict follows the temperature-scaled softmax") {
    TensorD equal({3, 2}, {0.4, 0.4, -1.0, -1.0, 7.5, 7.5});
    for (double tau : {0.25, 1.0, 2.0}) {
        TensorD p = predict(equal, tau);
        for (double v : p.value()) CHECK(v == Catch::Approx(0.5).margin(1e-12));
    }

    TensorD scores({1, 2}, {0.3, 1.1});  // (silent, speaking)
    const double p1 = predict(scores, 1.0).item();
    const double direct = std::exp(1.1) / (std::exp(1.1) + std::exp(0.3));
    CHECK(p1 == Catch::Approx(direct).margin(1e-12));

    TensorD two({1, 2}, {0.0, 2.0});
    CHECK(predict(two, 0.5).item() == Catch::Approx(1.0 / (1.0 + std::exp(-4.0))).margin(1e-6));  // ~0.98201

    CHECK_THROWS_AS(predict(two, 0.0), config_error);
    CHECK_THROWS_AS(predict(two, -1.0), config_error);
}

TEST_CASE("predict is invariant to score shifts and preserves the argmax") {
    Rng rng(94);
    for (int trial = 0; trial < 200; ++trial) {
        const double sil = rng.uniform(-3.0, 3.0), spk = rng.uniform(-3.0, 3.0);
        const double tau = rng.uniform(0.1, 3.0), shift = rng.uniform(-5.0, 5.0);
        TensorD s({1, 2}, {sil, spk});
        TensorD shifted({1, 2}, {sil + shift, spk + shift});
        const double p = predict(s, tau).item();
        CHECK(predict(shifted, tau).item() == Catch::Approx(p).margin(1e-12));
        if (spk > sil) CHECK(p > 0.5);
        if (spk < sil) CHECK(p < 0.5);
    }
}

TEST_CASE("temperature schedule matches the stated formula") {
    CHECK(temperature(1, true) == Catch::Approx(1.28).margin(1e-12));
    CHECK(temperature(15, true) == Catch::Approx(1.00).margin(1e-12));
    CHECK(temperature(30, true) == Catch::Approx(0.70).margin(1e-12));
    for (int epoch : {1, 15, 30}) CHECK(temperature(epoch, false) == 1.0);
    CHECK_THROWS_AS(temperature(0, true), schedule_error);
    CHECK_THROWS_AS(temperature(31, true), schedule_error);
}

TEST_CASE("head loss reproduces the hand-computed cases") {
    TensorD perfect({2}, {1.0, 0.0});
    CHECK(head_loss(perfect, {1, 0}).item() == Catch::Approx(0.0).margin(1e-5));

    TensorD half({4}, {0.5, 0.5, 0.5, 0.5});
    CHECK(head_loss(half, {1, 0, 1, 0}).item() == Catch::Approx(std::log(2.0)).margin(1e-12));

    TensorD probs({2}, {0.9, 0.2});
    const double expected = -(std::log(0.9) + std::log(0.8)) / 2.0;  // ~0.164252
    CHECK(head_loss(probs, {1, 0}).item() == Catch::Approx(expected).margin(1e-9));

    CHECK_THROWS_AS(head_loss(probs, {1, 2}), data_error);
    CHECK_THROWS_AS(head_loss(probs, {1}), dimension_error);
}

TEST_CASE("head loss is non-negative on random inputs") {
    Rng rng(95);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t frames = 1 + static_cast<std::size_t>(rng.uniform_int(0, 6));
        std::vector<double> p(frames);
        std::vector<int> g(frames);
        for (std::size_t t = 0; t < frames; ++t) {
            p[t] = rng.uniform();
            g[t] = rng.uniform() < 0.5 ? 0 : 1;
        }
        CHECK(head_loss(TensorD({frames}, p), g).item() >= 0.0);
    }
}

TEST_CASE("total loss applies the mode weights") {
    HeadLosses<double> unit{TensorD::scalar(1.0), TensorD::scalar(1.0), TensorD::scalar(1.0)};
    CHECK(total_loss(Mode::fabulight, unit).item() == Catch::Approx(1.5).margin(1e-12));

    HeadLosses<double> light{TensorD::scalar(1.0), TensorD::scalar(1.0), {}};
    CHECK(total_loss(Mode::lightasd, light).item() == Catch::Approx(1.5).margin(1e-12));

    HeadLosses<double> no_aux{TensorD::scalar(0.37), TensorD::scalar(0.0), TensorD::scalar(0.0)};
    CHECK(total_loss(Mode::fabulight, no_aux).item() == Catch::Approx(0.37).margin(1e-12));

    HeadLosses<double> missing{TensorD::scalar(1.0), TensorD::scalar(1.0), {}};
    CHECK_THROWS_AS(total_loss(Mode::fabulight, missing), config_error);
    CHECK_THROWS_AS(total_loss(Mode::lightasd, unit), config_error);
}

TEST_CASE("head registry is main+face+body with a body stream, main+face without") {
    Rng rng(96);
    auto fab = tiny_store(Mode::fabulight);
    auto in = tiny_inputs(rng, 3);
    auto fab_scores = forward_scores(fab, in, true);
    REQUIRE(fab_scores.size() == 3);
    CHECK(fab_scores.count("main") == 1);
    CHECK(fab_scores.count("face") == 1);
    CHECK(fab_scores.count("body") == 1);
    CHECK(fab_scores.count("audio") == 0);

    auto light = tiny_store(Mode::lightasd);
    auto light_scores = forward_scores(light, in, true);
    REQUIRE(light_scores.size() == 2);
    CHECK(light_scores.count("main") == 1);
    CHECK(light_scores.count("face") == 1);

    for (const auto& name : light.param_order) CHECK(name.rfind("body.", 0) != 0);
    CHECK(light.params.count("head.body.fc.w") == 0);
}

TEST_CASE("body parameters get gradients in fabulight mode only") {
    Rng rng(97);
    auto store = tiny_store(Mode::fabulight, 13, true);
    auto in = tiny_inputs(rng, 3);
    auto breakdown = compute_losses(store, in, {1, 0, 1}, 1.1);
    breakdown.total.backward();
    double body_grad = 0.0;
    for (const auto& name : store.param_order)
        if (name.rfind("body.", 0) == 0 && store.param(name).has_grad())
            for (double g : store.param(name).grad()) body_grad = std::max(body_grad, std::abs(g));
    CHECK(body_grad > 0.0);
}

TEST_CASE("losses stay finite and positive through the full model") {
    Rng rng(98);
    for (Mode mode : {Mode::fabulight, Mode::lightasd}) {
        auto store = tiny_store(mode, 17, false);
        auto in = tiny_inputs(rng, 4);
        auto breakdown = compute_losses(store, in, {1, 0, 0, 1}, 1.28);
        CHECK(breakdown.total.item() >= 0.0);
        CHECK(std::isfinite(breakdown.total.item()));
        CHECK(breakdown.per_head.count("main") == 1);
    }
}

TEST_CASE("misaligned modality extents are rejected") {
    Rng rng(99);
    auto store = tiny_store(Mode::fabulight);
    auto in = tiny_inputs(rng, 3);
    in.mfcc = random_tensor<double>({1, 13, 16}, rng);  // 4 frames worth
    CHECK_THROWS_AS(forward_scores(store, in, true), dimension_error);
}
