#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "fabulight/tensor.hpp"

namespace fabulight {

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.shape() != b.shape())
        throw dimension_error("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<S> y(a.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] + b.data()[i];
    return Tensor<S>::make_op(a.shape(), std::move(y), {a, b}, [](auto& self) {
        for (int k = 0; k < 2; ++k) {
            auto& g = self.parents[k]->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

template <typename S>
Tensor<S> add_n(const std::vector<Tensor<S>>& xs) {
    if (xs.empty()) throw dimension_error("add_n: empty input list");
    for (const auto& x : xs)
        if (x.shape() != xs[0].shape()) throw dimension_error("add_n: shape mismatch");
    std::vector<S> y(xs[0].size(), S(0));
    for (const auto& x : xs)
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += x.data()[i];
    return Tensor<S>::make_op(xs[0].shape(), std::move(y), xs, [](auto& self) {
        for (auto& p : self.parents) {
            auto& g = p->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.shape() != b.shape()) throw dimension_error("sub: shape mismatch");
    std::vector<S> y(a.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] - b.data()[i];
    return Tensor<S>::make_op(a.shape(), std::move(y), {a, b}, [](auto& self) {
        auto& ga = self.parents[0]->ensure_grad();
        auto& gb = self.parents[1]->ensure_grad();
        for (std::size_t i = 0; i < ga.size(); ++i) {
            ga[i] += self.grad[i];
            gb[i] -= self.grad[i];
        }
    });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.shape() != b.shape()) throw dimension_error("mul: shape mismatch");
    std::vector<S> y(a.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] * b.data()[i];
    return Tensor<S>::make_op(a.shape(), std::move(y), {a, b}, [](auto& self) {
        auto& ga = self.parents[0]->ensure_grad();
        auto& gb = self.parents[1]->ensure_grad();
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        for (std::size_t i = 0; i < ga.size(); ++i) {
            ga[i] += self.grad[i] * bv[i];
            gb[i] += self.grad[i] * av[i];
        }
    });
}

// y = a*x + b with scalar constants
template <typename S>
Tensor<S> affine(const Tensor<S>& x, S a, S b) {
    std::vector<S> y(x.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a * x.data()[i] + b;
    return Tensor<S>::make_op(x.shape(), std::move(y), {x}, [a](auto& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += a * self.grad[i];
    });
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
    std::vector<S> y(x.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.data()[i] > S(0) ? x.data()[i] : S(0);
    return Tensor<S>::make_op(x.shape(), std::move(y), {x}, [](auto& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (self.value[i] > S(0)) g[i] += self.grad[i];
    });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
    std::vector<S> y(x.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        const S v = x.data()[i];
        y[i] = v >= S(0) ? S(1) / (S(1) + std::exp(-v)) : std::exp(v) / (S(1) + std::exp(v));
    }
    return Tensor<S>::make_op(x.shape(), std::move(y), {x}, [](auto& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * self.value[i] * (S(1) - self.value[i]);
    });
}

template <typename S>
Tensor<S> tanh(const Tensor<S>& x) {
    std::vector<S> y(x.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(x.data()[i]);
    return Tensor<S>::make_op(x.shape(), std::move(y), {x}, [](auto& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (S(1) - self.value[i] * self.value[i]);
    });
}

template <typename S>
Tensor<S> log(const Tensor<S>& x) {
    std::vector<S> y(x.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::log(x.data()[i]);
    return Tensor<S>::make_op(x.shape(), std::move(y), {x}, [](auto& self) {
        auto& g = self.parents[0]->ensure_grad();
        const auto& xv = self.parents[0]->value;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / xv[i];
    });
}

// Gradient passes through strictly inside (lo, hi) and is cut at the rails.
template <typename S>
Tensor<S> clamp(const Tensor<S>& x, S lo, S hi) {
    std::vector<S> y(x.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::clamp(x.data()[i], lo, hi);
    return Tensor<S>::make_op(x.shape(), std::move(y), {x}, [lo, hi](auto& self) {
        auto& g = self.parents[0]->ensure_grad();
        const auto& xv = self.parents[0]->value;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (xv[i] > lo && xv[i] < hi) g[i] += self.grad[i];
    });
}

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
    S total = S(0);
    for (std::size_t i = 0; i < x.size(); ++i) total += x.data()[i];
    return Tensor<S>::make_op({1}, {total}, {x}, [](auto& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
    });
}

// Weighted sum with a constant coefficient vector: sum_i w[i] * x[i].
template <typename S>
Tensor<S> dot_const(const Tensor<S>& x, std::vector<S> w) {
    if (w.size() != x.size()) throw dimension_error("dot_const: weight length mismatch");
    S total = S(0);
    for (std::size_t i = 0; i < x.size(); ++i) total += w[i] * x.data()[i];
    return Tensor<S>::make_op({1}, {total}, {x}, [w = std::move(w)](auto& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += w[i] * self.grad[0];
    });
}

// ---------------------------------------------------------------------------
// structural
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
    if (shape_numel(shape) != x.size())
        throw dimension_error("reshape: element count mismatch for " + shape_str(shape));
    return Tensor<S>::make_op(std::move(shape), x.value(), {x}, [](auto& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

template <typename S>
Tensor<S> transpose2d(const Tensor<S>& x) {
    if (x.rank() != 2) throw dimension_error("transpose2d: rank-2 tensor required");
    const std::size_t rows = x.extent(0), cols = x.extent(1);
    std::vector<S> y(x.size());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) y[c * rows + r] = x.data()[r * cols + c];
    return Tensor<S>::make_op({cols, rows}, std::move(y), {x}, [rows, cols](auto& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[c * rows + r];
    });
}

template <typename S>
Tensor<S> row(const Tensor<S>& x, std::size_t t) {
    if (x.rank() != 2) throw dimension_error("row: rank-2 tensor required");
    const std::size_t cols = x.extent(1);
    if (t >= x.extent(0)) throw dimension_error("row: index out of range");
    std::vector<S> y(x.data() + t * cols, x.data() + (t + 1) * cols);
    return Tensor<S>::make_op({cols}, std::move(y), {x}, [t, cols](auto& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t c = 0; c < cols; ++c) g[t * cols + c] += self.grad[c];
    });
}

template <typename S>
Tensor<S> col(const Tensor<S>& x, std::size_t j) {
    if (x.rank() != 2) throw dimension_error("col: rank-2 tensor required");
    const std::size_t rows = x.extent(0), cols = x.extent(1);
    if (j >= cols) throw dimension_error("col: index out of range");
    std::vector<S> y(rows);
    for (std::size_t r = 0; r < rows; ++r) y[r] = x.data()[r * cols + j];
    return Tensor<S>::make_op({rows}, std::move(y), {x}, [j, cols](auto& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t r = 0; r < self.value.size(); ++r) g[r * cols + j] += self.grad[r];
    });
}

template <typename S>
Tensor<S> stack_rows(const std::vector<Tensor<S>>& rows_in) {
    if (rows_in.empty()) throw dimension_error("stack_rows: empty input");
    const std::size_t cols = rows_in[0].size();
    for (const auto& r : rows_in)
        if (r.rank() != 1 || r.size() != cols) throw dimension_error("stack_rows: inconsistent row shapes");
    std::vector<S> y;
    y.reserve(rows_in.size() * cols);
    for (const auto& r : rows_in) y.insert(y.end(), r.data(), r.data() + cols);
    return Tensor<S>::make_op({rows_in.size(), cols}, std::move(y), rows_in, [cols](auto& self) {
        for (std::size_t t = 0; t < self.parents.size(); ++t) {
            auto& g = self.parents[t]->ensure_grad();
            for (std::size_t c = 0; c < cols; ++c) g[c] += self.grad[t * cols + c];
        }
    });
}

// ---------------------------------------------------------------------------
// linear maps
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> matvec(const Tensor<S>& w, const Tensor<S>& x, const Tensor<S>& b) {
    if (w.rank() != 2 || x.rank() != 1 || w.extent(1) != x.extent(0))
        throw dimension_error("matvec: shape mismatch");
    const std::size_t out_n = w.extent(0), in_n = w.extent(1);
    if (b.defined() && (b.rank() != 1 || b.extent(0) != out_n)) throw dimension_error("matvec: bad bias");
    std::vector<S> y(out_n);
    for (std::size_t o = 0; o < out_n; ++o) {
        S acc = b.defined() ? b.data()[o] : S(0);
        const S* wr = w.data() + o * in_n;
        for (std::size_t i = 0; i < in_n; ++i) acc += wr[i] * x.data()[i];
        y[o] = acc;
    }
    std::vector<Tensor<S>> parents = {w, x};
    if (b.defined()) parents.push_back(b);
    return Tensor<S>::make_op({out_n}, std::move(y), std::move(parents), [out_n, in_n](auto& self) {
        auto& gw = self.parents[0]->ensure_grad();
        auto& gx = self.parents[1]->ensure_grad();
        const auto& wv = self.parents[0]->value;
        const auto& xv = self.parents[1]->value;
        for (std::size_t o = 0; o < out_n; ++o) {
            const S go = self.grad[o];
            for (std::size_t i = 0; i < in_n; ++i) {
                gw[o * in_n + i] += go * xv[i];
                gx[i] += wv[o * in_n + i] * go;
            }
        }
        if (self.parents.size() == 3) {
            auto& gb = self.parents[2]->ensure_grad();
            for (std::size_t o = 0; o < out_n; ++o) gb[o] += self.grad[o];
        }
    });
}

// x: [T x H], w: [O x H], b: [O]  ->  [T x O]
template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
    if (x.rank() != 2 || w.rank() != 2 || x.extent(1) != w.extent(1))
        throw dimension_error("linear: shape mismatch " + shape_str(x.shape()) + " vs " + shape_str(w.shape()));
    const std::size_t steps = x.extent(0), in_n = x.extent(1), out_n = w.extent(0);
    if (b.defined() && (b.rank() != 1 || b.extent(0) != out_n)) throw dimension_error("linear: bad bias");
    std::vector<S> y(steps * out_n);
    for (std::size_t t = 0; t < steps; ++t)
        for (std::size_t o = 0; o < out_n; ++o) {
            S acc = b.defined() ? b.data()[o] : S(0);
            const S* xr = x.data() + t * in_n;
            const S* wr = w.data() + o * in_n;
            for (std::size_t i = 0; i < in_n; ++i) acc += xr[i] * wr[i];
            y[t * out_n + o] = acc;
        }
    std::vector<Tensor<S>> parents = {x, w};
    if (b.defined()) parents.push_back(b);
    return Tensor<S>::make_op({steps, out_n}, std::move(y), std::move(parents), [steps, in_n, out_n](auto& self) {
        auto& gx = self.parents[0]->ensure_grad();
        auto& gw = self.parents[1]->ensure_grad();
        const auto& xv = self.parents[0]->value;
        const auto& wv = self.parents[1]->value;
        for (std::size_t t = 0; t < steps; ++t)
            for (std::size_t o = 0; o < out_n; ++o) {
                const S go = self.grad[t * out_n + o];
                if (go == S(0)) continue;
                for (std::size_t i = 0; i < in_n; ++i) {
                    gx[t * in_n + i] += wv[o * in_n + i] * go;
                    gw[o * in_n + i] += xv[t * in_n + i] * go;
                }
            }
        if (self.parents.size() == 3) {
            auto& gb = self.parents[2]->ensure_grad();
            for (std::size_t t = 0; t < steps; ++t)
                for (std::size_t o = 0; o < out_n; ++o) gb[o] += self.grad[t * out_n + o];
        }
    });
}

// Pointwise (kernel-1) channel mixing: x: [C x rest...] -> [O x rest...].
template <typename S>
Tensor<S> channel_linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
    if (x.rank() < 2 || w.rank() != 2 || w.extent(1) != x.extent(0))
        throw dimension_error("channel_linear: weight " + shape_str(w.shape()) + " does not match input channels");
    const std::size_t c_in = x.extent(0), c_out = w.extent(0);
    const std::size_t sites = x.size() / c_in;
    if (b.defined() && (b.rank() != 1 || b.extent(0) != c_out)) throw dimension_error("channel_linear: bad bias");
    Shape out_shape = x.shape();
    out_shape[0] = c_out;
    std::vector<S> y(c_out * sites, S(0));
    {
        const S* xd = x.data();
        const S* wd = w.data();
        S* yd = y.data();
#pragma omp parallel for schedule(static) if (c_out * sites > 16384)
        for (std::int64_t o = 0; o < static_cast<std::int64_t>(c_out); ++o) {
            S* yr = yd + o * sites;
            for (std::size_t c = 0; c < c_in; ++c) {
                const S wv = wd[o * c_in + c];
                const S* xr = xd + c * sites;
                for (std::size_t s = 0; s < sites; ++s) yr[s] += wv * xr[s];
            }
            if (b.defined()) {
                const S bv = b.data()[o];
                for (std::size_t s = 0; s < sites; ++s) yr[s] += bv;
            }
        }
    }
    std::vector<Tensor<S>> parents = {x, w};
    if (b.defined()) parents.push_back(b);
    return Tensor<S>::make_op(std::move(out_shape), std::move(y), std::move(parents),
                              [c_in, c_out, sites](auto& self) {
        auto& gx = self.parents[0]->ensure_grad();
        auto& gw = self.parents[1]->ensure_grad();
        const auto& xv = self.parents[0]->value;
        const auto& wv = self.parents[1]->value;
        const S* gy = self.grad.data();
#pragma omp parallel for schedule(static) if (c_in * sites > 16384)
        for (std::int64_t c = 0; c < static_cast<std::int64_t>(c_in); ++c) {
            S* gxr = gx.data() + c * sites;
            for (std::size_t o = 0; o < c_out; ++o) {
                const S w_oc = wv[o * c_in + c];
                const S* gyr = gy + o * sites;
                for (std::size_t s = 0; s < sites; ++s) gxr[s] += w_oc * gyr[s];
            }
        }
#pragma omp parallel for schedule(static) if (c_out * sites > 16384)
        for (std::int64_t o = 0; o < static_cast<std::int64_t>(c_out); ++o) {
            const S* gyr = gy + o * sites;
            for (std::size_t c = 0; c < c_in; ++c) {
                const S* xr = xv.data() + c * sites;
                S acc = S(0);
                for (std::size_t s = 0; s < sites; ++s) acc += gyr[s] * xr[s];
                gw[o * c_in + c] += acc;
            }
        }
        if (self.parents.size() == 3) {
            auto& gb = self.parents[2]->ensure_grad();
            for (std::size_t o = 0; o < c_out; ++o) {
                const S* gyr = gy + o * sites;
                S acc = S(0);
                for (std::size_t s = 0; s < sites; ++s) acc += gyr[s];
                gb[o] += acc;
            }
        }
    });
}

// ---------------------------------------------------------------------------
// convolutions
// ---------------------------------------------------------------------------

inline std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
    const std::size_t padded = in + 2 * pad;
    if (padded < kernel) throw dimension_error("convolution kernel exceeds padded extent");
    return (padded - kernel) / stride + 1;
}

// 2D convolution over axes 1 and 2 of a [C x H x W x T] tensor, applied
// independently at every index of the trailing axis. Kernel extents may
// differ per axis so a 1D convolution along H is the (k, 1) special case.
template <typename S>
Tensor<S> conv2d_hw(const Tensor<S>& x, const Tensor<S>& w, std::size_t stride, std::size_t pad_h,
                    std::size_t pad_w) {
    if (x.rank() != 4 || w.rank() != 4) throw dimension_error("conv2d_hw: rank-4 input and weight required");
    if (w.extent(1) != x.extent(0))
        throw dimension_error("conv2d_hw: weight channels " + std::to_string(w.extent(1)) +
                              " do not match input channels " + std::to_string(x.extent(0)));
    const std::size_t c_in = x.extent(0), h_in = x.extent(1), w_in = x.extent(2), frames = x.extent(3);
    const std::size_t c_out = w.extent(0), kh = w.extent(2), kw = w.extent(3);
    if (kh % 2 == 0 || kw % 2 == 0) throw config_error("conv2d_hw: even kernel extent");
    const std::size_t h_out = conv_out_extent(h_in, kh, stride, pad_h);
    const std::size_t w_out = conv_out_extent(w_in, kw, stride, pad_w);

    std::vector<S> y(c_out * h_out * w_out * frames, S(0));
    {
        const S* xd = x.data();
        const S* wd = w.data();
        S* yd = y.data();
#pragma omp parallel for schedule(static)
        for (std::int64_t o = 0; o < static_cast<std::int64_t>(c_out); ++o) {
            for (std::size_t ho = 0; ho < h_out; ++ho)
                for (std::size_t wo = 0; wo < w_out; ++wo) {
                    S* yr = yd + ((o * h_out + ho) * w_out + wo) * frames;
                    for (std::size_t c = 0; c < c_in; ++c)
                        for (std::size_t i = 0; i < kh; ++i) {
                            const std::int64_t hi = static_cast<std::int64_t>(ho * stride + i) -
                                                    static_cast<std::int64_t>(pad_h);
                            if (hi < 0 || hi >= static_cast<std::int64_t>(h_in)) continue;
                            for (std::size_t j = 0; j < kw; ++j) {
                                const std::int64_t wi = static_cast<std::int64_t>(wo * stride + j) -
                                                        static_cast<std::int64_t>(pad_w);
                                if (wi < 0 || wi >= static_cast<std::int64_t>(w_in)) continue;
                                const S wv = wd[((o * c_in + c) * kh + i) * kw + j];
                                const S* xr = xd + ((c * h_in + hi) * w_in + wi) * frames;
                                for (std::size_t t = 0; t < frames; ++t) yr[t] += wv * xr[t];
                            }
                        }
                }
        }
    }
    return Tensor<S>::make_op(
        {c_out, h_out, w_out, frames}, std::move(y), {x, w},
        [c_in, h_in, w_in, frames, c_out, kh, kw, h_out, w_out, stride, pad_h, pad_w](auto& self) {
            auto& gx = self.parents[0]->ensure_grad();
            auto& gw = self.parents[1]->ensure_grad();
            const auto& xv = self.parents[0]->value;
            const auto& wv = self.parents[1]->value;
            const S* gy = self.grad.data();
#pragma omp parallel for schedule(static)
            for (std::int64_t c = 0; c < static_cast<std::int64_t>(c_in); ++c) {
                for (std::size_t o = 0; o < c_out; ++o)
                    for (std::size_t i = 0; i < kh; ++i)
                        for (std::size_t j = 0; j < kw; ++j) {
                            const S w_el = wv[((o * c_in + c) * kh + i) * kw + j];
                            if (w_el == S(0)) continue;
                            for (std::size_t ho = 0; ho < h_out; ++ho) {
                                const std::int64_t hi = static_cast<std::int64_t>(ho * stride + i) -
                                                        static_cast<std::int64_t>(pad_h);
                                if (hi < 0 || hi >= static_cast<std::int64_t>(h_in)) continue;
                                for (std::size_t wo = 0; wo < w_out; ++wo) {
                                    const std::int64_t wi = static_cast<std::int64_t>(wo * stride + j) -
                                                            static_cast<std::int64_t>(pad_w);
                                    if (wi < 0 || wi >= static_cast<std::int64_t>(w_in)) continue;
                                    S* gxr = gx.data() + ((c * h_in + hi) * w_in + wi) * frames;
                                    const S* gyr = gy + ((o * h_out + ho) * w_out + wo) * frames;
                                    for (std::size_t t = 0; t < frames; ++t) gxr[t] += w_el * gyr[t];
                                }
                            }
                        }
            }
#pragma omp parallel for schedule(static)
            for (std::int64_t o = 0; o < static_cast<std::int64_t>(c_out); ++o) {
                for (std::size_t c = 0; c < c_in; ++c)
                    for (std::size_t i = 0; i < kh; ++i)
                        for (std::size_t j = 0; j < kw; ++j) {
                            S acc = S(0);
                            for (std::size_t ho = 0; ho < h_out; ++ho) {
                                const std::int64_t hi = static_cast<std::int64_t>(ho * stride + i) -
                                                        static_cast<std::int64_t>(pad_h);
                                if (hi < 0 || hi >= static_cast<std::int64_t>(h_in)) continue;
                                for (std::size_t wo = 0; wo < w_out; ++wo) {
                                    const std::int64_t wi = static_cast<std::int64_t>(wo * stride + j) -
                                                            static_cast<std::int64_t>(pad_w);
                                    if (wi < 0 || wi >= static_cast<std::int64_t>(w_in)) continue;
                                    const S* gyr = gy + ((o * h_out + ho) * w_out + wo) * frames;
                                    const S* xr = xv.data() + ((c * h_in + hi) * w_in + wi) * frames;
                                    for (std::size_t t = 0; t < frames; ++t) acc += gyr[t] * xr[t];
                                }
                            }
                            gw[((o * c_in + c) * kh + i) * kw + j] += acc;
                        }
            }
        });
}

// 1D convolution over the trailing axis of a [C x ... x L] tensor, stride 1,
// broadcast over every middle index. Used for all temporal convolutions.
template <typename S>
Tensor<S> conv1d_last(const Tensor<S>& x, const Tensor<S>& w, std::size_t pad) {
    if (x.rank() < 2 || w.rank() != 3) throw dimension_error("conv1d_last: bad ranks");
    if (w.extent(1) != x.extent(0)) throw dimension_error("conv1d_last: weight channels mismatch input");
    const std::size_t kernel = w.extent(2);
    if (kernel % 2 == 0) throw config_error("conv1d_last: even temporal kernel");
    const std::size_t c_in = x.extent(0), len = x.shape().back();
    const std::size_t mids = x.size() / (c_in * len);
    const std::size_t c_out = w.extent(0);
    const std::size_t out_len = conv_out_extent(len, kernel, 1, pad);

    Shape out_shape = x.shape();
    out_shape[0] = c_out;
    out_shape.back() = out_len;
    std::vector<S> y(c_out * mids * out_len, S(0));
    {
        const S* xd = x.data();
        const S* wd = w.data();
        S* yd = y.data();
#pragma omp parallel for schedule(static) if (c_out * mids * out_len > 16384)
        for (std::int64_t o = 0; o < static_cast<std::int64_t>(c_out); ++o)
            for (std::size_t m = 0; m < mids; ++m) {
                S* yr = yd + (o * mids + m) * out_len;
                for (std::size_t c = 0; c < c_in; ++c) {
                    const S* xr = xd + (c * mids + m) * len;
                    for (std::size_t k = 0; k < kernel; ++k) {
                        const S wv = wd[(o * c_in + c) * kernel + k];
                        const std::int64_t shift = static_cast<std::int64_t>(k) - static_cast<std::int64_t>(pad);
                        const std::size_t lo = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
                        const std::size_t hi = std::min<std::int64_t>(out_len, static_cast<std::int64_t>(len) - shift);
                        for (std::size_t l = lo; l < hi; ++l) yr[l] += wv * xr[l + shift];
                    }
                }
            }
    }
    return Tensor<S>::make_op(std::move(out_shape), std::move(y), {x, w},
                              [c_in, len, mids, c_out, kernel, pad, out_len](auto& self) {
        auto& gx = self.parents[0]->ensure_grad();
        auto& gw = self.parents[1]->ensure_grad();
        const auto& xv = self.parents[0]->value;
        const auto& wv = self.parents[1]->value;
        const S* gy = self.grad.data();
#pragma omp parallel for schedule(static) if (c_in * mids * len > 16384)
        for (std::int64_t c = 0; c < static_cast<std::int64_t>(c_in); ++c)
            for (std::size_t m = 0; m < mids; ++m) {
                S* gxr = gx.data() + (c * mids + m) * len;
                for (std::size_t o = 0; o < c_out; ++o) {
                    const S* gyr = gy + (o * mids + m) * out_len;
                    for (std::size_t k = 0; k < kernel; ++k) {
                        const S w_el = wv[(o * c_in + c) * kernel + k];
                        const std::int64_t shift = static_cast<std::int64_t>(k) - static_cast<std::int64_t>(pad);
                        const std::size_t lo = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
                        const std::size_t hi = std::min<std::int64_t>(out_len, static_cast<std::int64_t>(len) - shift);
                        for (std::size_t l = lo; l < hi; ++l) gxr[l + shift] += w_el * gyr[l];
                    }
                }
            }
#pragma omp parallel for schedule(static) if (c_out * mids * out_len > 16384)
        for (std::int64_t o = 0; o < static_cast<std::int64_t>(c_out); ++o)
            for (std::size_t c = 0; c < c_in; ++c)
                for (std::size_t k = 0; k < kernel; ++k) {
                    const std::int64_t shift = static_cast<std::int64_t>(k) - static_cast<std::int64_t>(pad);
                    const std::size_t lo = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
                    const std::size_t hi = std::min<std::int64_t>(out_len, static_cast<std::int64_t>(len) - shift);
                    S acc = S(0);
                    for (std::size_t m = 0; m < mids; ++m) {
                        const S* gyr = gy + (o * mids + m) * out_len;
                        const S* xr = xv.data() + (c * mids + m) * len;
                        for (std::size_t l = lo; l < hi; ++l) acc += gyr[l] * xr[l + shift];
                    }
                    gw[(o * c_in + c) * kernel + k] += acc;
                }
    });
}

// ---------------------------------------------------------------------------
// pooling
// ---------------------------------------------------------------------------

// Max pool over axes 1,2 of [C x H x W x T]; padded cells never win.
template <typename S>
Tensor<S> maxpool2d_hw(const Tensor<S>& x, std::size_t kernel, std::size_t stride, std::size_t pad) {
    if (x.rank() != 4) throw dimension_error("maxpool2d_hw: rank-4 input required");
    const std::size_t chans = x.extent(0), h_in = x.extent(1), w_in = x.extent(2), frames = x.extent(3);
    const std::size_t h_out = conv_out_extent(h_in, kernel, stride, pad);
    const std::size_t w_out = conv_out_extent(w_in, kernel, stride, pad);
    std::vector<S> y(chans * h_out * w_out * frames);
    auto argmax = std::make_shared<std::vector<std::uint32_t>>(y.size());
    const S* xd = x.data();
    for (std::size_t c = 0; c < chans; ++c)
        for (std::size_t ho = 0; ho < h_out; ++ho)
            for (std::size_t wo = 0; wo < w_out; ++wo)
                for (std::size_t t = 0; t < frames; ++t) {
                    S best = S(0);
                    std::uint32_t best_idx = 0;
                    bool seen = false;
                    for (std::size_t i = 0; i < kernel; ++i) {
                        const std::int64_t hi = static_cast<std::int64_t>(ho * stride + i) -
                                                static_cast<std::int64_t>(pad);
                        if (hi < 0 || hi >= static_cast<std::int64_t>(h_in)) continue;
                        for (std::size_t j = 0; j < kernel; ++j) {
                            const std::int64_t wi = static_cast<std::int64_t>(wo * stride + j) -
                                                    static_cast<std::int64_t>(pad);
                            if (wi < 0 || wi >= static_cast<std::int64_t>(w_in)) continue;
                            const std::size_t idx = ((c * h_in + hi) * w_in + wi) * frames + t;
                            if (!seen || xd[idx] > best) {
                                best = xd[idx];
                                best_idx = static_cast<std::uint32_t>(idx);
                                seen = true;
                            }
                        }
                    }
                    const std::size_t out_idx = ((c * h_out + ho) * w_out + wo) * frames + t;
                    y[out_idx] = best;
                    (*argmax)[out_idx] = best_idx;
                }
    return Tensor<S>::make_op({chans, h_out, w_out, frames}, std::move(y), {x}, [argmax](auto& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[(*argmax)[i]] += self.grad[i];
    });
}

// Max pool over the trailing axis of [C x ... x L].
template <typename S>
Tensor<S> maxpool1d_last(const Tensor<S>& x, std::size_t kernel, std::size_t stride, std::size_t pad) {
    if (x.rank() < 2) throw dimension_error("maxpool1d_last: rank >= 2 required");
    const std::size_t len = x.shape().back();
    const std::size_t rows = x.size() / len;
    const std::size_t out_len = conv_out_extent(len, kernel, stride, pad);
    Shape out_shape = x.shape();
    out_shape.back() = out_len;
    std::vector<S> y(rows * out_len);
    auto argmax = std::make_shared<std::vector<std::uint32_t>>(y.size());
    const S* xd = x.data();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t lo = 0; lo < out_len; ++lo) {
            S best = S(0);
            std::uint32_t best_idx = 0;
            bool seen = false;
            for (std::size_t k = 0; k < kernel; ++k) {
                const std::int64_t li = static_cast<std::int64_t>(lo * stride + k) - static_cast<std::int64_t>(pad);
                if (li < 0 || li >= static_cast<std::int64_t>(len)) continue;
                const std::size_t idx = r * len + li;
                if (!seen || xd[idx] > best) {
                    best = xd[idx];
                    best_idx = static_cast<std::uint32_t>(idx);
                    seen = true;
                }
            }
            y[r * out_len + lo] = best;
            (*argmax)[r * out_len + lo] = best_idx;
        }
    return Tensor<S>::make_op(std::move(out_shape), std::move(y), {x}, [argmax](auto& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[(*argmax)[i]] += self.grad[i];
    });
}

// [C x H x W x T] -> [C x T], max over the spatial extents.
template <typename S>
Tensor<S> global_max_hw(const Tensor<S>& x) {
    if (x.rank() != 4) throw dimension_error("global_max_hw: rank-4 input required");
    const std::size_t chans = x.extent(0), spatial = x.extent(1) * x.extent(2), frames = x.extent(3);
    std::vector<S> y(chans * frames);
    auto argmax = std::make_shared<std::vector<std::uint32_t>>(y.size());
    const S* xd = x.data();
    for (std::size_t c = 0; c < chans; ++c)
        for (std::size_t t = 0; t < frames; ++t) {
            std::size_t best_idx = (c * spatial) * frames + t;
            S best = xd[best_idx];
            for (std::size_t s = 1; s < spatial; ++s) {
                const std::size_t idx = (c * spatial + s) * frames + t;
                if (xd[idx] > best) {
                    best = xd[idx];
                    best_idx = idx;
                }
            }
            y[c * frames + t] = best;
            (*argmax)[c * frames + t] = static_cast<std::uint32_t>(best_idx);
        }
    return Tensor<S>::make_op({chans, frames}, std::move(y), {x}, [argmax](auto& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[(*argmax)[i]] += self.grad[i];
    });
}

// [C x N x T] -> [C x T], mean over axis 1.
template <typename S>
Tensor<S> global_avg_axis1(const Tensor<S>& x) {
    if (x.rank() != 3) throw dimension_error("global_avg_axis1: rank-3 input required");
    const std::size_t chans = x.extent(0), n = x.extent(1), frames = x.extent(2);
    std::vector<S> y(chans * frames, S(0));
    const S* xd = x.data();
    for (std::size_t c = 0; c < chans; ++c)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t t = 0; t < frames; ++t) y[c * frames + t] += xd[(c * n + i) * frames + t];
    const S inv = S(1) / static_cast<S>(n);
    for (auto& v : y) v *= inv;
    return Tensor<S>::make_op({chans, frames}, std::move(y), {x}, [chans, n, frames, inv](auto& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t c = 0; c < chans; ++c)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t t = 0; t < frames; ++t)
                    g[(c * n + i) * frames + t] += self.grad[c * frames + t] * inv;
    });
}

enum class PoolKind { max_spatial, max_temporal, global_max_spatial, global_avg_spatial, global_avg_joints };

// Dispatcher mirroring the pooling variants used across the encoders.
template <typename S>
Tensor<S> pool(const Tensor<S>& x, PoolKind kind, std::size_t kernel = 3, std::size_t stride = 2,
               std::size_t pad = 1) {
    switch (kind) {
        case PoolKind::max_spatial:
            return maxpool2d_hw(x, kernel, stride, pad);
        case PoolKind::max_temporal:
            return maxpool1d_last(x, kernel, stride, pad);
        case PoolKind::global_max_spatial:
            return global_max_hw(x);
        case PoolKind::global_avg_spatial:
        case PoolKind::global_avg_joints:
            return global_avg_axis1(x);
    }
    throw config_error("pool: unknown kind");
}

// ---------------------------------------------------------------------------
// batch normalization
// ---------------------------------------------------------------------------

template <typename S>
struct BatchNormState {
    Tensor<S> gamma;  // [C]
    Tensor<S> beta;   // [C]
    std::vector<S> running_mean;
    std::vector<S> running_var;
    S momentum = S(0.1);
    S eps = S(1e-5);
    bool initialized = false;  // running statistics usable for inference

    static BatchNormState make(std::size_t channels, bool trainable) {
        BatchNormState st;
        st.gamma = Tensor<S>::full({channels}, S(1));
        st.beta = Tensor<S>::zeros({channels});
        if (trainable) {
            st.gamma.set_requires_grad(true);
            st.beta.set_requires_grad(true);
        }
        st.running_mean.assign(channels, S(0));
        st.running_var.assign(channels, S(1));
        return st;
    }

    std::size_t channels() const { return gamma.size(); }
};

// Channel axis is axis 0; statistics are taken over every other axis of the
// presented tensor. Training mode also refreshes the running statistics.
template <typename S>
Tensor<S> batch_norm(const Tensor<S>& x, BatchNormState<S>& state, bool training) {
    if (x.rank() < 2) throw dimension_error("batch_norm: rank >= 2 required");
    const std::size_t chans = x.extent(0);
    if (chans != state.channels())
        throw dimension_error("batch_norm: state has " + std::to_string(state.channels()) +
                              " channels, input has " + std::to_string(chans));
    const std::size_t n = x.size() / chans;
    const S eps = state.eps;

    std::vector<S> mean(chans), var(chans);
    if (training) {
        if (n < 2) throw dimension_error("batch_norm: at least 2 values per channel required in training");
        const S* xd = x.data();
        for (std::size_t c = 0; c < chans; ++c) {
            S m = S(0);
            const S* xr = xd + c * n;
            for (std::size_t i = 0; i < n; ++i) m += xr[i];
            m /= static_cast<S>(n);
            S v = S(0);
            for (std::size_t i = 0; i < n; ++i) {
                const S d = xr[i] - m;
                v += d * d;
            }
            v /= static_cast<S>(n);
            mean[c] = m;
            var[c] = v;
        }
        const S mom = state.momentum;
        for (std::size_t c = 0; c < chans; ++c) {
            const S unbiased = var[c] * static_cast<S>(n) / static_cast<S>(n - 1);
            state.running_mean[c] = (S(1) - mom) * state.running_mean[c] + mom * mean[c];
            state.running_var[c] = (S(1) - mom) * state.running_var[c] + mom * unbiased;
        }
        state.initialized = true;
    } else {
        if (!state.initialized)
            throw state_error("batch_norm: inference requested before running statistics were set");
        mean = state.running_mean;
        var = state.running_var;
    }

    std::vector<S> y(x.size());
    {
        const S* xd = x.data();
        const S* gd = state.gamma.data();
        const S* bd = state.beta.data();
        for (std::size_t c = 0; c < chans; ++c) {
            const S invstd = S(1) / std::sqrt(var[c] + eps);
            const S gc = gd[c], bc = bd[c], mc = mean[c];
            const S* xr = xd + c * n;
            S* yr = y.data() + c * n;
            for (std::size_t i = 0; i < n; ++i) yr[i] = gc * (xr[i] - mc) * invstd + bc;
        }
    }
    return Tensor<S>::make_op(x.shape(), std::move(y), {x, state.gamma, state.beta},
                              [chans, n, eps, training, mean = std::move(mean), var = std::move(var)](auto& self) {
        auto& gx = self.parents[0]->ensure_grad();
        auto& ggamma = self.parents[1]->ensure_grad();
        auto& gbeta = self.parents[2]->ensure_grad();
        const auto& xv = self.parents[0]->value;
        const auto& gammav = self.parents[1]->value;
        const S* gy = self.grad.data();
#pragma omp parallel for schedule(static) if (chans * n > 16384)
        for (std::int64_t c = 0; c < static_cast<std::int64_t>(chans); ++c) {
            const S invstd = S(1) / std::sqrt(var[c] + eps);
            const S mc = mean[c];
            const S* xr = xv.data() + c * n;
            const S* gyr = gy + c * n;
            S* gxr = gx.data() + c * n;
            S sum_gy = S(0), sum_gy_xhat = S(0);
            for (std::size_t i = 0; i < n; ++i) {
                sum_gy += gyr[i];
                sum_gy_xhat += gyr[i] * (xr[i] - mc) * invstd;
            }
            ggamma[c] += sum_gy_xhat;
            gbeta[c] += sum_gy;
            const S gc = gammav[c];
            if (training) {
                const S inv_n = S(1) / static_cast<S>(n);
                for (std::size_t i = 0; i < n; ++i) {
                    const S xhat = (xr[i] - mc) * invstd;
                    gxr[i] += gc * invstd * (gyr[i] - sum_gy * inv_n - xhat * sum_gy_xhat * inv_n);
                }
            } else {
                for (std::size_t i = 0; i < n; ++i) gxr[i] += gc * invstd * gyr[i];
            }
        }
    });
}

// ---------------------------------------------------------------------------
// graph contraction
// ---------------------------------------------------------------------------

// Spatial-configuration contraction: m holds kS blocks of c_out channels
// (block r first), b holds the kS learnable joint-mixing matrices, and
// out[c,n,t] = sum_r sum_m b[r,m,n] * m[r*c_out + c, m, t].
template <typename S>
Tensor<S> graph_contract(const Tensor<S>& m, const Tensor<S>& b, std::size_t c_out) {
    if (m.rank() != 3 || b.rank() != 3) throw dimension_error("graph_contract: bad ranks");
    const std::size_t parts = b.extent(0), joints = b.extent(1);
    if (b.extent(2) != joints) throw dimension_error("graph_contract: mixing matrices must be square");
    if (m.extent(0) != parts * c_out)
        throw config_error("graph_contract: channel count " + std::to_string(m.extent(0)) +
                           " does not equal partitions*c_out = " + std::to_string(parts * c_out));
    if (m.extent(1) != joints) throw dimension_error("graph_contract: joint extent mismatch");
    const std::size_t frames = m.extent(2);

    std::vector<S> y(c_out * joints * frames, S(0));
    {
        const S* md = m.data();
        const S* bd = b.data();
#pragma omp parallel for schedule(static) if (c_out * joints * frames > 16384)
        for (std::int64_t c = 0; c < static_cast<std::int64_t>(c_out); ++c)
            for (std::size_t nn = 0; nn < joints; ++nn) {
                S* yr = y.data() + (c * joints + nn) * frames;
                for (std::size_t r = 0; r < parts; ++r)
                    for (std::size_t mm = 0; mm < joints; ++mm) {
                        const S bv = bd[(r * joints + mm) * joints + nn];
                        if (bv == S(0)) continue;
                        const S* mr = md + ((r * c_out + c) * joints + mm) * frames;
                        for (std::size_t t = 0; t < frames; ++t) yr[t] += bv * mr[t];
                    }
            }
    }
    return Tensor<S>::make_op({c_out, joints, frames}, std::move(y), {m, b},
                              [parts, joints, frames, c_out](auto& self) {
        auto& gm = self.parents[0]->ensure_grad();
        auto& gb = self.parents[1]->ensure_grad();
        const auto& mv = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        const S* gy = self.grad.data();
#pragma omp parallel for schedule(static) if (parts * c_out * joints * frames > 16384)
        for (std::int64_t rc = 0; rc < static_cast<std::int64_t>(parts * c_out); ++rc) {
            const std::size_t r = rc / c_out, c = rc % c_out;
            for (std::size_t mm = 0; mm < joints; ++mm) {
                S* gmr = gm.data() + (rc * joints + mm) * frames;
                for (std::size_t nn = 0; nn < joints; ++nn) {
                    const S b_el = bv[(r * joints + mm) * joints + nn];
                    if (b_el == S(0)) continue;
                    const S* gyr = gy + (c * joints + nn) * frames;
                    for (std::size_t t = 0; t < frames; ++t) gmr[t] += b_el * gyr[t];
                }
            }
        }
        for (std::size_t r = 0; r < parts; ++r)
            for (std::size_t mm = 0; mm < joints; ++mm)
                for (std::size_t nn = 0; nn < joints; ++nn) {
                    S acc = S(0);
                    for (std::size_t c = 0; c < c_out; ++c) {
                        const S* mr = mv.data() + ((r * c_out + c) * joints + mm) * frames;
                        const S* gyr = gy + (c * joints + nn) * frames;
                        for (std::size_t t = 0; t < frames; ++t) acc += mr[t] * gyr[t];
                    }
                    gb[(r * joints + mm) * joints + nn] += acc;
                }
    });
}

// ---------------------------------------------------------------------------
// finite differences
// ---------------------------------------------------------------------------

template <typename S>
struct GradCheckResult {
    S max_rel_error = S(0);
    std::size_t coords_checked = 0;
};

// Compares analytic gradients of f() against central differences on a sample
// of coordinates from each parameter. f must rebuild its graph from the
// live parameter tensors on every call.
template <typename S, typename F>
GradCheckResult<S> finite_diff_check(F&& f, std::span<Tensor<S>> params, S step,
                                     std::size_t samples_per_tensor, Rng& rng) {
    if (!(step >= S(1e-7) && step <= S(1e-3)))
        throw contract_error("finite_diff_check: step outside [1e-7, 1e-3]");

    for (auto& p : params) p.drop_grad();
    Tensor<S> loss = f();
    if (!loss.all_finite()) throw numeric_error("finite_diff_check: non-finite loss");
    loss.backward();

    GradCheckResult<S> result;
    for (auto& p : params) {
        if (!p.requires_grad()) continue;
        std::vector<S> analytic = p.has_grad() ? p.grad() : std::vector<S>(p.size(), S(0));

        std::vector<std::size_t> coords;
        if (p.size() <= samples_per_tensor) {
            coords.resize(p.size());
            for (std::size_t i = 0; i < p.size(); ++i) coords[i] = i;
        } else {
            std::unordered_set<std::size_t> seen;
            while (coords.size() < samples_per_tensor) {
                const auto i = static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<std::int64_t>(p.size()) - 1));
                if (seen.insert(i).second) coords.push_back(i);
            }
        }

        for (const std::size_t i : coords) {
            const S saved = p.value()[i];
            p.value()[i] = saved + step;
            const S plus = f().item();
            p.value()[i] = saved - step;
            const S minus = f().item();
            p.value()[i] = saved;
            if (!std::isfinite(static_cast<double>(plus)) || !std::isfinite(static_cast<double>(minus)))
                throw numeric_error("finite_diff_check: non-finite perturbed loss");
            const S central = (plus - minus) / (S(2) * step);
            const S denom = std::max({std::abs(analytic[i]), std::abs(central), S(1e-12)});
            const S rel = std::abs(analytic[i] - central) / denom;
            result.max_rel_error = std::max(result.max_rel_error, rel);
            ++result.coords_checked;
        }
    }
    for (auto& p : params) p.drop_grad();
    return result;
}

}  // namespace fabulight
