#pragma once

#include <map>
#include <string>
#include <vector>

#include "fabulight/encoders.hpp"

namespace fabulight {

inline constexpr double kProbClamp = 1e-7;

// Temperature anneals linearly with the (1-based) training epoch and is
// pinned to 1 for evaluation.
struct TemperatureSchedule {
    double base = 1.3;
    double slope = 0.02;
    double eval_value = 1.0;
    int max_epoch = 30;

    double train(int epoch) const {
        if (epoch < 1 || epoch > max_epoch)
            throw schedule_error("temperature: epoch " + std::to_string(epoch) + " outside [1, " +
                                 std::to_string(max_epoch) + "]");
        return base - slope * epoch;
    }
    double eval() const { return eval_value; }
};

inline double temperature(int epoch, bool training, const TemperatureSchedule& sched = {}) {
    return training ? sched.train(epoch) : sched.eval();
}

// Element-wise sum of per-modality features, all [128 x T].
template <typename S>
Tensor<S> fuse(const std::vector<Tensor<S>>& features) {
    if (features.empty()) throw dimension_error("fuse: at least one modality feature required");
    if (features.size() == 1) return features[0];
    return add_n(features);
}

// [128 x T] -> per-frame (silent, speaking) scores [T x 2].
template <typename S>
Tensor<S> classify(const Tensor<S>& fused, WeightStore<S>& store, const std::string& head) {
    const std::string hp = "head." + head;
    GruParams<S> fwd{store.param(hp + ".gru.fwd.w_xz"), store.param(hp + ".gru.fwd.w_xr"),
                     store.param(hp + ".gru.fwd.w_xn"), store.param(hp + ".gru.fwd.w_hz"),
                     store.param(hp + ".gru.fwd.w_hr"), store.param(hp + ".gru.fwd.w_hn"),
                     store.param(hp + ".gru.fwd.b_xz"), store.param(hp + ".gru.fwd.b_xr"),
                     store.param(hp + ".gru.fwd.b_xn"), store.param(hp + ".gru.fwd.b_hz"),
                     store.param(hp + ".gru.fwd.b_hr"), store.param(hp + ".gru.fwd.b_hn")};
    GruParams<S> bwd{store.param(hp + ".gru.bwd.w_xz"), store.param(hp + ".gru.bwd.w_xr"),
                     store.param(hp + ".gru.bwd.w_xn"), store.param(hp + ".gru.bwd.w_hz"),
                     store.param(hp + ".gru.bwd.w_hr"), store.param(hp + ".gru.bwd.w_hn"),
                     store.param(hp + ".gru.bwd.b_xz"), store.param(hp + ".gru.bwd.b_xr"),
                     store.param(hp + ".gru.bwd.b_xn"), store.param(hp + ".gru.bwd.b_hz"),
                     store.param(hp + ".gru.bwd.b_hr"), store.param(hp + ".gru.bwd.b_hn")};
    const Tensor<S> context = bigru_forward(transpose2d(fused), fwd, bwd);
    return linear(context, store.param(hp + ".fc.w"), store.param(hp + ".fc.b"));
}

// Temperature-scaled two-class softmax, evaluated in the shifted form
// p = logistic((speak - silent) / tau).
template <typename S>
Tensor<S> predict(const Tensor<S>& scores, S tau) {
    if (!(tau > S(0))) throw config_error("predict: temperature must be positive");
    if (scores.rank() != 2 || scores.extent(1) != kScoreClasses)
        throw dimension_error("predict: [T x 2] scores required, got " + shape_str(scores.shape()));
    const Tensor<S> margin = sub(col(scores, 1), col(scores, 0));
    return sigmoid(affine(margin, S(1) / tau, S(0)));
}

// Frame-averaged binary cross entropy with probabilities clamped away from
// the log singularities.
template <typename S>
Tensor<S> head_loss(const Tensor<S>& probs, const std::vector<int>& labels) {
    if (probs.rank() != 1) throw dimension_error("head_loss: [T] probabilities required");
    const std::size_t frames = probs.extent(0);
    if (labels.size() != frames) throw dimension_error("head_loss: label count mismatch");
    std::vector<S> pos(frames), neg(frames);
    for (std::size_t t = 0; t < frames; ++t) {
        if (labels[t] != 0 && labels[t] != 1)
            throw data_error("head_loss: label " + std::to_string(labels[t]) + " at frame " + std::to_string(t) +
                             " is not in {0,1}");
        pos[t] = static_cast<S>(labels[t]);
        neg[t] = static_cast<S>(1 - labels[t]);
    }
    const Tensor<S> clamped = clamp(probs, static_cast<S>(kProbClamp), static_cast<S>(1.0 - kProbClamp));
    const Tensor<S> log_p = log(clamped);
    const Tensor<S> log_q = log(affine(clamped, S(-1), S(1)));
    const Tensor<S> total = add(dot_const(log_p, std::move(pos)), dot_const(log_q, std::move(neg)));
    return affine(total, S(-1) / static_cast<S>(frames), S(0));
}

template <typename S>
struct HeadLosses {
    Tensor<S> main;
    Tensor<S> face;
    Tensor<S> body;
};

// Mode-weighted training objective: main + 0.25*(face + body) with a body
// stream, main + 0.5*face without one.
template <typename S>
Tensor<S> total_loss(Mode mode, const HeadLosses<S>& losses) {
    if (!losses.main.defined() || !losses.face.defined())
        throw config_error("total_loss: main and face head losses are required");
    if (mode == Mode::fabulight) {
        if (!losses.body.defined()) throw config_error("total_loss: fabulight mode requires the body head loss");
        return add(losses.main, add(affine(losses.face, S(0.25), S(0)), affine(losses.body, S(0.25), S(0))));
    }
    if (losses.body.defined()) throw config_error("total_loss: lightasd mode has no body head");
    return add(losses.main, affine(losses.face, S(0.5), S(0)));
}

}  // namespace fabulight
