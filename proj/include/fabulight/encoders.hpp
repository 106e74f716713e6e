#pragma once

#include <string>

#include "fabulight/gru.hpp"
#include "fabulight/weights.hpp"

namespace fabulight {

// Spatial-configuration graph convolution: a kernel-1 channel expansion to
// kS blocks followed by the joint-mixing contraction. w: [kS*C_out x C_in],
// b_mats: [kS x N x N].
template <typename S>
Tensor<S> graph_conv(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b_mats) {
    if (b_mats.rank() != 3) throw config_error("graph_conv: mixing tensor must be [kS x N x N]");
    const std::size_t parts = b_mats.extent(0);
    if (w.rank() != 2 || w.extent(0) % parts != 0)
        throw config_error("graph_conv: weight rows must be a multiple of the partition count");
    const std::size_t c_out = w.extent(0) / parts;
    const Tensor<S> m = channel_linear(x, w, Tensor<S>{});
    return graph_contract(m, b_mats, c_out);
}

// One face block (two kernel paths of spatial+temporal separable
// convolutions, summed, merged by a kernel-1 convolution). The spatial
// convolutions stride 2 in the first block only.
template <typename S>
Tensor<S> face_block(const Tensor<S>& x, WeightStore<S>& store, const std::string& prefix, bool first_block,
                     bool training) {
    std::vector<Tensor<S>> paths;
    for (const std::size_t k : kPathKernels) {
        const std::string pp = prefix + ".path" + std::to_string(k);
        const std::size_t pad = (k - 1) / 2;
        Tensor<S> h = conv2d_hw(x, store.param(pp + ".spatial.w"), first_block ? 2 : 1, pad, pad);
        h = relu(batch_norm(h, store.bn_state(pp + ".spatial_bn"), training));
        h = conv1d_last(h, store.param(pp + ".temporal.w"), pad);
        h = relu(batch_norm(h, store.bn_state(pp + ".temporal_bn"), training));
        paths.push_back(std::move(h));
    }
    return channel_linear(add(paths[0], paths[1]), store.param(prefix + ".merge.w"),
                          store.param(prefix + ".merge.b"));
}

// Audio block: identical layout, but the "spatial" convolution runs along
// the 13-coefficient axis (kernel k x 1) and nothing strides.
template <typename S>
Tensor<S> audio_block(const Tensor<S>& x, WeightStore<S>& store, const std::string& prefix, bool training) {
    const std::size_t chans = x.extent(0), coeffs = x.extent(1), len = x.extent(2);
    std::vector<Tensor<S>> paths;
    for (const std::size_t k : kPathKernels) {
        const std::string pp = prefix + ".path" + std::to_string(k);
        const std::size_t pad = (k - 1) / 2;
        Tensor<S> h = reshape(x, {chans, coeffs, std::size_t{1}, len});
        h = conv2d_hw(h, store.param(pp + ".spatial.w"), 1, pad, 0);
        h = reshape(h, {h.extent(0), coeffs, len});
        h = relu(batch_norm(h, store.bn_state(pp + ".spatial_bn"), training));
        h = conv1d_last(h, store.param(pp + ".temporal.w"), pad);
        h = relu(batch_norm(h, store.bn_state(pp + ".temporal_bn"), training));
        paths.push_back(std::move(h));
    }
    return channel_linear(add(paths[0], paths[1]), store.param(prefix + ".merge.w"),
                          store.param(prefix + ".merge.b"));
}

// Body block: per path a graph convolution (with its own mixing-matrix
// copies), temporal convolution, batch norms; merged then ReLU-ed.
template <typename S>
Tensor<S> body_block(const Tensor<S>& x, WeightStore<S>& store, const std::string& prefix, bool training) {
    std::vector<Tensor<S>> paths;
    for (const std::size_t k : kPathKernels) {
        const std::string pp = prefix + ".path" + std::to_string(k);
        const Tensor<S>& mix = store.param(pp + ".gcn.b");
        if (mix.extent(0) != k)
            throw config_error("body_block: path kernel " + std::to_string(k) + " expects " + std::to_string(k) +
                               " partitions, mixing tensor has " + std::to_string(mix.extent(0)));
        Tensor<S> h = graph_conv(x, store.param(pp + ".gcn.w"), mix);
        h = relu(batch_norm(h, store.bn_state(pp + ".gcn_bn"), training));
        h = conv1d_last(h, store.param(pp + ".temporal.w"), (k - 1) / 2);
        h = batch_norm(h, store.bn_state(pp + ".temporal_bn"), training);
        paths.push_back(std::move(h));
    }
    return relu(channel_linear(add(paths[0], paths[1]), store.param(prefix + ".merge.w"),
                               store.param(prefix + ".merge.b")));
}

// faces: [1 x N_f x N_f x T] -> [128 x T]
template <typename S>
Tensor<S> face_encode(const Tensor<S>& faces, WeightStore<S>& store, bool training) {
    if (faces.rank() != 4 || faces.extent(0) != 1)
        throw dimension_error("face_encode: [1 x S x S x T] input required, got " + shape_str(faces.shape()));
    if (faces.extent(1) != store.config.face_size || faces.extent(2) != store.config.face_size)
        throw dimension_error("face_encode: configured face size is " + std::to_string(store.config.face_size));
    if (faces.extent(3) == 0) throw input_error("face_encode: empty frame stack");
    Tensor<S> h = face_block(faces, store, "face.block1", true, training);
    h = maxpool2d_hw(h, 3, 2, 1);
    h = face_block(h, store, "face.block2", false, training);
    h = maxpool2d_hw(h, 3, 2, 1);
    h = face_block(h, store, "face.block3", false, training);
    return global_max_hw(h);
}

// mfcc: [1 x 13 x 4T] -> [128 x T]
template <typename S>
Tensor<S> audio_encode(const Tensor<S>& mfcc, WeightStore<S>& store, bool training) {
    if (mfcc.rank() != 3 || mfcc.extent(0) != 1 || mfcc.extent(1) != kMfccCoeffs)
        throw dimension_error("audio_encode: [1 x 13 x 4T] input required, got " + shape_str(mfcc.shape()));
    if (mfcc.extent(2) == 0 || mfcc.extent(2) % kMfccPerVideoFrame != 0)
        throw input_error("audio_encode: temporal extent " + std::to_string(mfcc.extent(2)) +
                          " is not a positive multiple of 4; align_to_frames must run first");
    Tensor<S> h = audio_block(mfcc, store, "audio.block1", training);
    h = maxpool1d_last(h, 3, 2, 1);
    h = audio_block(h, store, "audio.block2", training);
    h = maxpool1d_last(h, 3, 2, 1);
    h = audio_block(h, store, "audio.block3", training);
    return global_avg_axis1(h);
}

// poses: [3 x N_b x T] -> [128 x T]
template <typename S>
Tensor<S> body_encode(const Tensor<S>& poses, WeightStore<S>& store, bool training) {
    if (poses.rank() != 3 || poses.extent(0) != 3)
        throw dimension_error("body_encode: [3 x N_b x T] input required, got " + shape_str(poses.shape()));
    if (poses.extent(1) != store.config.n_joints())
        throw dimension_error("body_encode: configured variant has " + std::to_string(store.config.n_joints()) +
                              " joints, input has " + std::to_string(poses.extent(1)));
    if (poses.extent(2) == 0) throw input_error("body_encode: empty pose sequence");
    Tensor<S> h = batch_norm(poses, store.bn_state("body.input_bn"), training);
    h = body_block(h, store, "body.block1", training);
    h = body_block(h, store, "body.block2", training);
    h = body_block(h, store, "body.block3", training);
    return global_avg_axis1(h);
}

}  // namespace fabulight
