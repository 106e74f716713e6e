#include <catch2/catch_amalgamated.hpp>

#include "fabulight/ops.hpp"
#include "helpers.hpp"

using namespace fabulight;

TEST_CASE("tensor shape and data length must agree") {
    CHECK_NOTHROW(TensorD({2, 3}, std::vector<double>(6, 0.0)));
    CHECK_THROWS_AS(TensorD({2, 3}, std::vector<double>(5, 0.0)), dimension_error);
    TensorD t({2, 3, 4});
    CHECK(t.size() == 24);
    CHECK(t.at({1, 2, 3}) == 0.0);
    t.at({1, 2, 3}) = 7.0;
    CHECK(t.data()[23] == 7.0);
}

TEST_CASE("grad of sum is all ones") {
    TensorD x = TensorD::full({3, 4}, 2.5);
    x.set_requires_grad(true);
    sum(x).backward();
    for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("grad of half squared norm is the input") {
    Rng rng(7);
    TensorD x = testutil::random_tensor<double>({5}, rng, -2.0, 2.0, true);
    TensorD loss = affine(sum(mul(x, x)), 0.5, 0.0);
    loss.backward();
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(x.grad()[i] == Catch::Approx(x.data()[i]).epsilon(1e-12));
}

TEST_CASE("repeated backward calls accumulate into leaf grads") {
    TensorD x = TensorD::full({4}, 1.0);
    x.set_requires_grad(true);
    sum(x).backward();
    sum(mul(x, x)).backward();
    for (double g : x.grad()) CHECK(g == Catch::Approx(3.0));  // 1 + 2*x at x=1
}

TEST_CASE("backward requires a scalar loss") {
    TensorD x = TensorD::full({3}, 1.0);
    x.set_requires_grad(true);
    TensorD y = mul(x, x);
    CHECK_THROWS_AS(y.backward(), contract_error);
}

TEST_CASE("cycle in the operation graph is detected") {
    TensorD x = TensorD::full({1}, 1.0);
    x.set_requires_grad(true);
    TensorD y = affine(x, 2.0, 0.0);
    // Manufacture a cycle by hand; no public operation can produce one.
    x.node()->parents.push_back(y.node());
    CHECK_THROWS_AS(y.backward(), graph_error);
}

TEST_CASE("released graphs refuse a second backward") {
    TensorD x = TensorD::full({3}, 2.0);
    x.set_requires_grad(true);
    TensorD loss = sum(mul(x, x));
    loss.backward(true);
    CHECK(x.grad()[0] == Catch::Approx(4.0));
    CHECK_THROWS_AS(loss.backward(), graph_error);
}

TEST_CASE("finite differences: quadratic is exact to roundoff") {
    Rng rng(11);
    TensorD x = testutil::random_tensor<double>({6}, rng, -1.0, 1.0, true);
    auto f = [&] { return affine(sum(mul(x, x)), 0.5, 0.0); };
    std::vector<TensorD> params{x};
    auto res = finite_diff_check<double>(f, params, 1e-5, 16, rng);
    CHECK(res.coords_checked == 6);
    CHECK(res.max_rel_error <= 1e-9);
}

TEST_CASE("finite differences: relu probed away from the kink") {
    Rng rng(12);
    std::vector<double> vals(8);
    for (auto& v : vals) {
        v = rng.uniform(0.1, 1.0);
        if (rng.uniform() < 0.5) v = -v;  // keep |x| >= 0.1 >> 10*step
    }
    TensorD x({8}, vals);
    x.set_requires_grad(true);
    TensorD w = testutil::random_tensor<double>({8}, rng, -1.0, 1.0, false);
    auto f = [&] { return dot_const(relu(x), std::vector<double>(w.value())); };
    std::vector<TensorD> params{x};
    auto res = finite_diff_check<double>(f, params, 1e-5, 8, rng);
    CHECK(res.max_rel_error <= 1e-6);
}

TEST_CASE("finite differences flag a gradient corrupted by a factor of two") {
    Rng rng(13);
    TensorD x = testutil::random_tensor<double>({5}, rng, 0.5, 1.5, true);
    auto corrupted_square_sum = [&] {
        std::vector<double> y(1, 0.0);
        for (std::size_t i = 0; i < x.size(); ++i) y[0] += 0.5 * x.data()[i] * x.data()[i];
        return TensorD::make_op({1}, std::move(y), {x}, [](auto& self) {
            auto& g = self.parents[0]->ensure_grad();
            const auto& xv = self.parents[0]->value;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * xv[i] * self.grad[0];
        });
    };
    std::vector<TensorD> params{x};
    auto res = finite_diff_check<double>(corrupted_square_sum, params, 1e-5, 5, rng);
    CHECK(res.max_rel_error == Catch::Approx(0.5).margin(1e-4));
}

TEST_CASE("finite differences reject an out-of-range step") {
    Rng rng(14);
    TensorD x = TensorD::full({2}, 1.0);
    x.set_requires_grad(true);
    auto f = [&] { return sum(x); };
    std::vector<TensorD> params{x};
    CHECK_THROWS_AS(finite_diff_check<double>(f, params, 1e-2, 2, rng), contract_error);
}
