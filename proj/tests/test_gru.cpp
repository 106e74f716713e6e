#include <catch2/catch_amalgamated.hpp>

#include "fabulight/gru.hpp"
#include "helpers.hpp"

using namespace fabulight;
using testutil::random_tensor;

namespace {

GruParams<double> zero_params(std::size_t hidden, std::size_t input) {
    GruParams<double> p;
    p.w_xz = TensorD::zeros({hidden, input});
    p.w_xr = TensorD::zeros({hidden, input});
    p.w_xn = TensorD::zeros({hidden, input});
    p.w_hz = TensorD::zeros({hidden, hidden});
    p.w_hr = TensorD::zeros({hidden, hidden});
    p.w_hn = TensorD::zeros({hidden, hidden});
    p.b_xz = TensorD::zeros({hidden});
    p.b_xr = TensorD::zeros({hidden});
    p.b_xn = TensorD::zeros({hidden});
    p.b_hz = TensorD::zeros({hidden});
    p.b_hr = TensorD::zeros({hidden});
    p.b_hn = TensorD::zeros({hidden});
    return p;
}

GruParams<double> random_params(std::size_t hidden, std::size_t input, Rng& rng, double scale = 0.5,
                                bool requires_grad = false) {
    GruParams<double> p;
    p.w_xz = random_tensor<double>({hidden, input}, rng, -scale, scale, requires_grad);
    p.w_xr = random_tensor<double>({hidden, input}, rng, -scale, scale, requires_grad);
    p.w_xn = random_tensor<double>({hidden, input}, rng, -scale, scale, requires_grad);
    p.w_hz = random_tensor<double>({hidden, hidden}, rng, -scale, scale, requires_grad);
    p.w_hr = random_tensor<double>({hidden, hidden}, rng, -scale, scale, requires_grad);
    p.w_hn = random_tensor<double>({hidden, hidden}, rng, -scale, scale, requires_grad);
    p.b_xz = random_tensor<double>({hidden}, rng, -scale, scale, requires_grad);
    p.b_xr = random_tensor<double>({hidden}, rng, -scale, scale, requires_grad);
    p.b_xn = random_tensor<double>({hidden}, rng, -scale, scale, requires_grad);
    p.b_hz = random_tensor<double>({hidden}, rng, -scale, scale, requires_grad);
    p.b_hr = random_tensor<double>({hidden}, rng, -scale, scale, requires_grad);
    p.b_hn = random_tensor<double>({hidden}, rng, -scale, scale, requires_grad);
    return p;
}

std::vector<TensorD> all_params(GruParams<double>& p) {
    return {p.w_xz, p.w_xr, p.w_xn, p.w_hz, p.w_hr, p.w_hn,
            p.b_xz, p.b_xr, p.b_xn, p.b_hz, p.b_hr, p.b_hn};
}

}  // namespace

TEST_CASE("gru with all-zero parameters keeps the hidden state at zero") {
    // Hand evaluation for two steps: gates z=r=logistic(0)=0.5, candidate
    // n=tanh(0)=0, so h1 = 0.5*0 + 0.5*0 = 0 and likewise h2 = 0.
    Rng rng(41);
    TensorD x = random_tensor<double>({2, 3}, rng);
    auto p = zero_params(4, 3);
    TensorD y = gru_forward(x, p);
    REQUIRE(y.shape() == Shape{2, 4});
    for (double v : y.value()) CHECK(v == 0.0);
    TensorD yb = bigru_forward(x, p, p);
    for (double v : yb.value()) CHECK(v == 0.0);
}

TEST_CASE("single-frame sequences make both directions identical") {
    Rng rng(42);
    TensorD x = random_tensor<double>({1, 3}, rng);
    auto p = random_params(4, 3, rng);
    TensorD fwd = gru_forward(x, p, false);
    TensorD bwd = gru_forward(x, p, true);
    for (std::size_t i = 0; i < fwd.size(); ++i) CHECK(fwd.data()[i] == bwd.data()[i]);
}

TEST_CASE("time reversal with swapped directions reverses the output") {
    Rng rng(43);
    const std::size_t steps = 6, dim = 3, hidden = 4;
    TensorD x = random_tensor<double>({steps, dim}, rng);
    auto pf = random_params(hidden, dim, rng);
    auto pb = random_params(hidden, dim, rng);

    std::vector<double> rev(x.size());
    for (std::size_t t = 0; t < steps; ++t)
        for (std::size_t d = 0; d < dim; ++d) rev[(steps - 1 - t) * dim + d] = x.at({t, d});
    TensorD x_rev({steps, dim}, rev);

    TensorD y = bigru_forward(x, pf, pb);
    TensorD y_swapped = bigru_forward(x_rev, pb, pf);
    for (std::size_t t = 0; t < steps; ++t)
        for (std::size_t h = 0; h < hidden; ++h)
            CHECK(y.at({t, h}) == y_swapped.at({steps - 1 - t, h}));
}

TEST_CASE("hidden states stay inside the tanh range") {
    Rng rng(44);
    TensorD x = random_tensor<double>({12, 5}, rng, -3.0, 3.0);
    auto pf = random_params(6, 5, rng, 1.5);
    auto pb = random_params(6, 5, rng, 1.5);
    TensorD one_dir = gru_forward(x, pf);
    for (double v : one_dir.value()) {
        CHECK(v > -1.0);
        CHECK(v < 1.0);
    }
    TensorD both = bigru_forward(x, pf, pb);
    for (double v : both.value()) {
        CHECK(v > -2.0);
        CHECK(v < 2.0);
    }
}

TEST_CASE("empty sequences are rejected") {
    auto p = zero_params(4, 3);
    TensorD x({0, 3}, std::vector<double>{});
    CHECK_THROWS_AS(gru_forward(x, p), input_error);
}

TEST_CASE("gru gradients match central finite differences") {
    Rng rng(45);
    TensorD x = random_tensor<double>({4, 3}, rng, -1.0, 1.0, true);
    auto pf = random_params(3, 3, rng, 0.7, true);
    auto pb = random_params(3, 3, rng, 0.7, true);
    std::vector<double> mask(4 * 3);
    for (auto& v : mask) v = rng.uniform(-1.0, 1.0);
    auto f = [&] { return dot_const(bigru_forward(x, pf, pb), std::vector<double>(mask)); };
    std::vector<TensorD> params = all_params(pf);
    auto more = all_params(pb);
    params.insert(params.end(), more.begin(), more.end());
    params.push_back(x);
    auto res = finite_diff_check<double>(f, params, 1e-5, 6, rng);
    CHECK(res.coords_checked >= 100);
    CHECK(res.max_rel_error <= 1e-4);
}
