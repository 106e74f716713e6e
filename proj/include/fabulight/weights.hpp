#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "fabulight/config.hpp"
#include "fabulight/ops.hpp"

namespace fabulight {

// All learnable state of one model instance, addressable by path-like names
// (e.g. "face.block1.path3.spatial.w"). Batch-norm scale/shift tensors live
// both in the params map and inside their BatchNormState so the training
// loop and the layer code share storage.
//
// Graph-convolution mixing matrices are stored per path as one tensor of
// shape [kS x N x N] with the most centripetal partition in slice 0.
template <typename S>
struct WeightStore {
    ModelConfig config;
    std::vector<std::string> param_order;
    std::unordered_map<std::string, Tensor<S>> params;
    std::vector<std::string> bn_order;
    std::unordered_map<std::string, BatchNormState<S>> bn;
    bool stats_ready = false;  // running statistics valid for inference

    Tensor<S>& param(const std::string& name) {
        auto it = params.find(name);
        if (it == params.end()) throw contract_error("unknown parameter: " + name);
        return it->second;
    }
    const Tensor<S>& param(const std::string& name) const {
        auto it = params.find(name);
        if (it == params.end()) throw contract_error("unknown parameter: " + name);
        return it->second;
    }

    BatchNormState<S>& bn_state(const std::string& prefix) {
        auto it = bn.find(prefix);
        if (it == bn.end()) throw contract_error("unknown batch-norm layer: " + prefix);
        return it->second;
    }

    void add_param(const std::string& name, Tensor<S> t) {
        if (!params.emplace(name, std::move(t)).second) throw contract_error("duplicate parameter: " + name);
        param_order.push_back(name);
    }

    void add_bn(const std::string& prefix, std::size_t channels, bool trainable) {
        auto state = BatchNormState<S>::make(channels, trainable);
        add_param(prefix + ".gamma", state.gamma);
        add_param(prefix + ".beta", state.beta);
        if (!bn.emplace(prefix, std::move(state)).second) throw contract_error("duplicate bn layer: " + prefix);
        bn_order.push_back(prefix);
    }

    std::size_t total_params() const {
        std::size_t n = 0;
        for (const auto& name : param_order) n += params.at(name).size();
        return n;
    }

    void zero_grads() {
        for (const auto& name : param_order) {
            auto it = params.find(name);
            it->second.zero_grad();
        }
    }

    std::uint64_t arch_hash() const {
        std::string desc = config.describe();
        for (const auto& name : param_order) {
            desc += "|" + name + shape_str(params.at(name).shape());
        }
        for (const auto& prefix : bn_order)
            desc += "|" + prefix + ":" + std::to_string(bn.at(prefix).channels());
        return fnv1a(desc);
    }
};

namespace detail {

template <typename S>
void init_gru_params(WeightStore<S>& store, const std::string& prefix, std::size_t input, std::size_t hidden,
                     Rng& rng, bool trainable) {
    auto weight = [&](const std::string& name, std::size_t rows, std::size_t cols) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
        std::vector<S> data(rows * cols);
        for (auto& v : data) v = static_cast<S>(rng.uniform(-bound, bound));
        Tensor<S> t({rows, cols}, std::move(data));
        if (trainable) t.set_requires_grad(true);
        store.add_param(prefix + "." + name, std::move(t));
    };
    auto bias = [&](const std::string& name, std::size_t n) {
        Tensor<S> t = Tensor<S>::zeros({n});
        if (trainable) t.set_requires_grad(true);
        store.add_param(prefix + "." + name, std::move(t));
    };
    for (const char* dir : {"fwd", "bwd"}) {
        const std::string d(dir);
        for (const char* gate : {"z", "r", "n"}) weight(d + ".w_x" + gate, hidden, input);
        for (const char* gate : {"z", "r", "n"}) weight(d + ".w_h" + gate, hidden, hidden);
        for (const char* gate : {"z", "r", "n"}) bias(d + ".b_x" + gate, hidden);
        for (const char* gate : {"z", "r", "n"}) bias(d + ".b_h" + gate, hidden);
    }
}

}  // namespace detail

// Creates every parameter of the configured architecture, seeded and
// reproducible: weights uniform in +-1/sqrt(fan_in), biases zero, batch-norm
// scale/shift at (1, 0), mixing matrices from the degree-normalized
// partitions.
template <typename S>
WeightStore<S> init_weights(const ModelConfig& config, std::uint64_t seed, bool trainable = true) {
    WeightStore<S> store;
    store.config = config;
    Rng rng(seed);

    auto conv_weight = [&](const std::string& name, Shape shape) {
        std::size_t fan_in = 1;
        for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::vector<S> data(shape_numel(shape));
        for (auto& v : data) v = static_cast<S>(rng.uniform(-bound, bound));
        Tensor<S> t(std::move(shape), std::move(data));
        if (trainable) t.set_requires_grad(true);
        store.add_param(name, std::move(t));
    };
    auto zeros = [&](const std::string& name, Shape shape) {
        Tensor<S> t = Tensor<S>::zeros(std::move(shape));
        if (trainable) t.set_requires_grad(true);
        store.add_param(name, std::move(t));
    };

    // face and audio encoders share the block layout; audio uses 1D spatial
    // kernels over the coefficient axis, stored [C_out x C_in x k x 1].
    for (const char* enc : {"face", "audio"}) {
        const bool is_face = std::string(enc) == "face";
        const auto blocks = is_face ? ModelConfig::face_blocks() : ModelConfig::audio_blocks();
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            const std::string bp = std::string(enc) + ".block" + std::to_string(b + 1);
            for (const std::size_t k : kPathKernels) {
                const std::string pp = bp + ".path" + std::to_string(k);
                if (is_face)
                    conv_weight(pp + ".spatial.w", {blocks[b].out, blocks[b].in, k, k});
                else
                    conv_weight(pp + ".spatial.w", {blocks[b].out, blocks[b].in, k, 1});
                store.add_bn(pp + ".spatial_bn", blocks[b].out, trainable);
                conv_weight(pp + ".temporal.w", {blocks[b].out, blocks[b].out, k});
                store.add_bn(pp + ".temporal_bn", blocks[b].out, trainable);
            }
            conv_weight(bp + ".merge.w", {blocks[b].out, blocks[b].out});
            zeros(bp + ".merge.b", {blocks[b].out});
        }
    }

    if (config.has_body()) {
        const auto topo = build_topology(config.body);
        const std::size_t joints = topo.n_joints;
        store.add_bn("body.input_bn", 3, trainable);
        const auto blocks = ModelConfig::body_blocks();
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            const std::string bp = "body.block" + std::to_string(b + 1);
            for (const std::size_t k : kPathKernels) {
                const std::string pp = bp + ".path" + std::to_string(k);
                const std::size_t radius = (k - 1) / 2;
                conv_weight(pp + ".gcn.w", {k * blocks[b].out, blocks[b].in});
                const auto part = build_partition(topo, radius);
                std::vector<S> mix;
                mix.reserve(k * joints * joints);
                for (const auto& m : part.b)
                    for (const double v : m) mix.push_back(static_cast<S>(v));
                Tensor<S> bt({k, joints, joints}, std::move(mix));
                if (trainable) bt.set_requires_grad(true);
                store.add_param(pp + ".gcn.b", std::move(bt));
                store.add_bn(pp + ".gcn_bn", blocks[b].out, trainable);
                conv_weight(pp + ".temporal.w", {blocks[b].out, blocks[b].out, k});
                store.add_bn(pp + ".temporal_bn", blocks[b].out, trainable);
            }
            conv_weight(bp + ".merge.w", {blocks[b].out, blocks[b].out});
            zeros(bp + ".merge.b", {blocks[b].out});
        }
    }

    for (const auto& head : config.head_names()) {
        const std::string hp = "head." + head;
        detail::init_gru_params(store, hp + ".gru", kFeatureDim, kFeatureDim, rng, trainable);
        conv_weight(hp + ".fc.w", {kScoreClasses, kFeatureDim});
        zeros(hp + ".fc.b", {kScoreClasses});
    }

    return store;
}

// ---------------------------------------------------------------------------
// binary weight file: magic "FBLW", version, config, architecture hash, then
// (name, dtype, shape, raw little-endian float32) entries
// ---------------------------------------------------------------------------

inline constexpr char kWeightMagic[4] = {'F', 'B', 'L', 'W'};
inline constexpr std::uint16_t kWeightVersion = 1;

namespace detail {

inline void put_u16(std::ofstream& out, std::uint16_t v) {
    const char b[2] = {static_cast<char>(v), static_cast<char>(v >> 8)};
    out.write(b, 2);
}
inline void put_u32(std::ofstream& out, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8), static_cast<char>(v >> 16),
                       static_cast<char>(v >> 24)};
    out.write(b, 4);
}
inline void put_u64(std::ofstream& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        const char b = static_cast<char>(v >> (8 * i));
        out.write(&b, 1);
    }
}

struct ByteReader {
    const std::vector<unsigned char>& bytes;
    std::size_t pos = 0;
    const std::string& path;

    void need(std::size_t n) const {
        if (pos + n > bytes.size()) throw io_error("truncated weight file: " + path);
    }
    std::uint16_t u16() {
        need(2);
        const std::uint16_t v = static_cast<std::uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    std::uint8_t u8() {
        need(1);
        return bytes[pos++];
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
        pos += n;
        return s;
    }
};

template <typename S>
void write_entry(std::ofstream& out, const std::string& name, const Shape& shape, const S* data,
                 std::size_t count) {
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    out.put(0);  // dtype 0 = float32
    out.put(static_cast<char>(shape.size()));
    for (const std::size_t d : shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (std::size_t i = 0; i < count; ++i) {
        const float f = static_cast<float>(data[i]);
        std::uint32_t raw;
        std::memcpy(&raw, &f, 4);
        put_u32(out, raw);
    }
}

}  // namespace detail

template <typename S>
void save_weights(const WeightStore<S>& store, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot create weight file: " + path);
    out.write(kWeightMagic, 4);
    detail::put_u16(out, kWeightVersion);
    out.put(store.config.mode == Mode::fabulight ? 1 : 0);
    out.put(store.config.body == BodyVariant::upper ? 1 : 0);
    detail::put_u32(out, static_cast<std::uint32_t>(store.config.face_size));
    out.put(store.stats_ready ? 1 : 0);
    out.put(0);
    out.put(0);
    out.put(0);
    detail::put_u64(out, store.arch_hash());
    const std::size_t entries = store.param_order.size() + 2 * store.bn_order.size();
    detail::put_u32(out, static_cast<std::uint32_t>(entries));
    for (const auto& name : store.param_order) {
        const Tensor<S>& t = store.params.at(name);
        detail::write_entry(out, name, t.shape(), t.data(), t.size());
    }
    for (const auto& prefix : store.bn_order) {
        const auto& st = store.bn.at(prefix);
        const Shape shape{st.channels()};
        detail::write_entry(out, prefix + ".running_mean", shape, st.running_mean.data(), st.running_mean.size());
        detail::write_entry(out, prefix + ".running_var", shape, st.running_var.data(), st.running_var.size());
    }
    if (!out) throw io_error("failed writing weight file: " + path);
}

// Rebuilds the architecture named in the header, then fills it entry by
// entry; names, shapes, and the architecture hash must all line up.
template <typename S>
WeightStore<S> load_weights(const std::string& path, bool trainable = false) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open weight file: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    detail::ByteReader r{bytes, 0, path};

    r.need(4);
    if (std::memcmp(bytes.data(), kWeightMagic, 4) != 0) throw io_error("bad magic in weight file: " + path);
    r.pos = 4;
    const std::uint16_t version = r.u16();
    if (version != kWeightVersion)
        throw io_error("unsupported weight file version " + std::to_string(version) + ": " + path);

    ModelConfig config;
    config.mode = r.u8() ? Mode::fabulight : Mode::lightasd;
    config.body = r.u8() ? BodyVariant::upper : BodyVariant::whole;
    config.face_size = r.u32();
    const bool stats_ready = r.u8() != 0;
    r.u8();
    r.u8();
    r.u8();
    const std::uint64_t file_hash = r.u64();

    WeightStore<S> store = init_weights<S>(config, 0, trainable);
    store.stats_ready = stats_ready;
    if (store.arch_hash() != file_hash)
        throw io_error("architecture hash mismatch in " + path + " (file does not match " + config.describe() +
                       ")");

    const std::uint32_t entries = r.u32();
    const std::size_t expected = store.param_order.size() + 2 * store.bn_order.size();
    if (entries != expected)
        throw io_error("weight file entry count " + std::to_string(entries) + " != expected " +
                       std::to_string(expected) + ": " + path);

    for (std::uint32_t e = 0; e < entries; ++e) {
        const std::uint16_t name_len = r.u16();
        const std::string name = r.str(name_len);
        const std::uint8_t dtype = r.u8();
        if (dtype != 0) throw io_error("unsupported dtype in weight file entry " + name);
        const std::uint8_t ndim = r.u8();
        Shape shape(ndim);
        for (auto& d : shape) d = r.u32();

        std::vector<S>* dest = nullptr;
        Shape expected_shape;
        if (auto it = store.params.find(name); it != store.params.end()) {
            dest = &it->second.value();
            expected_shape = it->second.shape();
        } else {
            const auto strip = [&](const char* suffix) -> std::string {
                const std::string suf(suffix);
                if (name.size() > suf.size() && name.compare(name.size() - suf.size(), suf.size(), suf) == 0)
                    return name.substr(0, name.size() - suf.size());
                return {};
            };
            if (const auto prefix = strip(".running_mean"); !prefix.empty()) {
                dest = &store.bn_state(prefix).running_mean;
                expected_shape = {dest->size()};
            } else if (const auto prefix = strip(".running_var"); !prefix.empty()) {
                dest = &store.bn_state(prefix).running_var;
                expected_shape = {dest->size()};
            }
        }
        if (dest == nullptr) throw io_error("unexpected entry in weight file: " + name);
        if (shape != expected_shape)
            throw io_error("shape mismatch for " + name + ": file has " + shape_str(shape) + ", architecture has " +
                           shape_str(expected_shape));
        for (auto& v : *dest) {
            const std::uint32_t raw = r.u32();
            float f;
            std::memcpy(&f, &raw, 4);
            v = static_cast<S>(f);
        }
    }
    if (stats_ready)
        for (auto& prefix : store.bn_order) store.bn_state(prefix).initialized = true;
    return store;
}

// Loading under an explicit expected configuration; a file for a different
// architecture is rejected via the hash.
template <typename S>
WeightStore<S> load_weights(const std::string& path, const ModelConfig& expected, bool trainable = false) {
    WeightStore<S> store = load_weights<S>(path, trainable);
    WeightStore<S> probe = init_weights<S>(expected, 0, false);
    if (store.arch_hash() != probe.arch_hash())
        throw io_error("architecture hash mismatch: file " + path + " holds " + store.config.describe() +
                       ", expected " + expected.describe());
    return store;
}

}  // namespace fabulight
