#pragma once

#include <map>
#include <string>
#include <vector>

#include "fabulight/heads.hpp"

namespace fabulight {

template <typename S>
struct ModelInputs {
    Tensor<S> faces;  // [1 x N_f x N_f x T]
    Tensor<S> mfcc;   // [1 x 13 x 4T]
    Tensor<S> poses;  // [3 x N_b x T]; ignored without a body stream
};

template <typename S>
void check_alignment(const ModelConfig& config, const ModelInputs<S>& in) {
    const std::size_t frames = in.faces.rank() == 4 ? in.faces.extent(3) : 0;
    if (in.mfcc.rank() != 3 || in.mfcc.extent(2) != kMfccPerVideoFrame * frames)
        throw dimension_error("model inputs: mfcc length must be 4x the face frame count");
    if (config.has_body() && (in.poses.rank() != 3 || in.poses.extent(2) != frames))
        throw dimension_error("model inputs: pose frames must match face frames");
}

// Per-head (silent, speaking) scores. Training mode runs every classification
// head; evaluation touches only the main one.
template <typename S>
std::map<std::string, Tensor<S>> forward_scores(WeightStore<S>& store, const ModelInputs<S>& in, bool training) {
    check_alignment(store.config, in);
    const Tensor<S> face_feat = face_encode(in.faces, store, training);
    const Tensor<S> audio_feat = audio_encode(in.mfcc, store, training);

    std::map<std::string, Tensor<S>> scores;
    if (store.config.has_body()) {
        const Tensor<S> body_feat = body_encode(in.poses, store, training);
        scores["main"] = classify(fuse<S>({face_feat, audio_feat, body_feat}), store, "main");
        if (training) {
            scores["face"] = classify(face_feat, store, "face");
            scores["body"] = classify(body_feat, store, "body");
        }
    } else {
        scores["main"] = classify(fuse<S>({face_feat, audio_feat}), store, "main");
        if (training) scores["face"] = classify(face_feat, store, "face");
    }
    return scores;
}

// Evaluation-path probabilities: main head only, temperature fixed at 1.
template <typename S>
Tensor<S> inference_probs(WeightStore<S>& store, const ModelInputs<S>& in) {
    auto scores = forward_scores(store, in, false);
    return predict(scores.at("main"), S(1));
}

template <typename S>
struct LossBreakdown {
    Tensor<S> total;
    std::map<std::string, Tensor<S>> per_head;
};

template <typename S>
LossBreakdown<S> compute_losses(WeightStore<S>& store, const ModelInputs<S>& in, const std::vector<int>& labels,
                                S tau, bool training = true) {
    auto scores = forward_scores(store, in, training);
    HeadLosses<S> losses;
    LossBreakdown<S> out;
    for (auto& [head, score] : scores) {
        Tensor<S> loss = head_loss(predict(score, tau), labels);
        out.per_head[head] = loss;
        if (head == "main")
            losses.main = loss;
        else if (head == "face")
            losses.face = loss;
        else if (head == "body")
            losses.body = loss;
    }
    out.total = total_loss(store.config.mode, losses);
    return out;
}

}  // namespace fabulight
