#pragma once

#include <vector>

#include "fabulight/ops.hpp"

namespace fabulight {

// Gate parameters for one recurrence direction. w_x* act on the input
// vector, w_h* on the hidden state; z = update, r = reset, n = candidate.
template <typename S>
struct GruParams {
    Tensor<S> w_xz, w_xr, w_xn;  // [H x D]
    Tensor<S> w_hz, w_hr, w_hn;  // [H x H]
    Tensor<S> b_xz, b_xr, b_xn;  // [H]
    Tensor<S> b_hz, b_hr, b_hn;  // [H]

    std::size_t hidden() const { return w_xz.extent(0); }
    std::size_t input() const { return w_xz.extent(1); }
};

// Single-direction recurrence over x: [T x D] -> [T x H], zero initial state.
//   z_t = logistic(Wxz x_t + bxz + Whz h_{t-1} + bhz)
//   r_t = logistic(Wxr x_t + bxr + Whr h_{t-1} + bhr)
//   n_t = tanh(Wxn x_t + bxn + Whn (r_t .* h_{t-1}) + bhn)
//   h_t = (1 - z_t) .* h_{t-1} + z_t .* n_t
template <typename S>
Tensor<S> gru_forward(const Tensor<S>& x, const GruParams<S>& p, bool reverse = false) {
    if (x.rank() != 2) throw dimension_error("gru_forward: input must be [T x D]");
    const std::size_t steps = x.extent(0);
    if (steps == 0) throw input_error("gru_forward: empty sequence");
    const std::size_t hidden = p.hidden();
    if (p.input() != x.extent(1)) throw dimension_error("gru_forward: input width mismatch");

    Tensor<S> h = Tensor<S>::zeros({hidden});
    std::vector<Tensor<S>> outputs(steps);
    for (std::size_t step = 0; step < steps; ++step) {
        const std::size_t t = reverse ? steps - 1 - step : step;
        const Tensor<S> xt = row(x, t);
        const Tensor<S> z = sigmoid(add(matvec(p.w_xz, xt, p.b_xz), matvec(p.w_hz, h, p.b_hz)));
        const Tensor<S> r = sigmoid(add(matvec(p.w_xr, xt, p.b_xr), matvec(p.w_hr, h, p.b_hr)));
        const Tensor<S> n = tanh(add(matvec(p.w_xn, xt, p.b_xn), matvec(p.w_hn, mul(r, h), p.b_hn)));
        h = add(mul(affine(z, S(-1), S(1)), h), mul(z, n));
        outputs[t] = h;
    }
    return stack_rows(outputs);
}

// Bidirectional recurrence; the two directional output sequences are summed
// element-wise so the downstream width stays at the hidden size.
template <typename S>
Tensor<S> bigru_forward(const Tensor<S>& x, const GruParams<S>& fwd, const GruParams<S>& bwd) {
    if (fwd.hidden() != bwd.hidden()) throw config_error("bigru_forward: directions disagree on hidden size");
    return add(gru_forward(x, fwd, false), gru_forward(x, bwd, true));
}

}  // namespace fabulight
