#pragma once

#include <array>
#include <string>
#include <vector>

#include "fabulight/common.hpp"
#include "fabulight/skeleton.hpp"

namespace fabulight {

enum class Mode { lightasd, fabulight };

inline const char* to_string(Mode m) { return m == Mode::lightasd ? "lightasd" : "fabulight"; }

inline Mode mode_from_string(const std::string& s) {
    if (s == "lightasd") return Mode::lightasd;
    if (s == "fabulight") return Mode::fabulight;
    throw config_error("unknown mode: " + s);
}

inline BodyVariant body_variant_from_string(const std::string& s) {
    if (s == "whole") return BodyVariant::whole;
    if (s == "upper") return BodyVariant::upper;
    throw config_error("unknown body variant: " + s);
}

// Channel plan shared by all three encoders; only the first block's input
// width differs per modality (1 for faces and audio, 3 for poses).
struct BlockChannels {
    std::size_t in;
    std::size_t out;
};

inline constexpr std::size_t kFeatureDim = 128;
inline constexpr std::size_t kMfccCoeffs = 13;
inline constexpr std::size_t kScoreClasses = 2;  // (silent, speaking)
inline constexpr std::array<std::size_t, 2> kPathKernels = {3, 5};

struct ModelConfig {
    Mode mode = Mode::fabulight;
    BodyVariant body = BodyVariant::whole;
    std::size_t face_size = 112;

    std::size_t n_joints() const { return body == BodyVariant::whole ? kWholeBodyJoints : kUpperBodyJoints; }

    static std::array<BlockChannels, 3> face_blocks() { return {{{1, 32}, {32, 64}, {64, 128}}}; }
    static std::array<BlockChannels, 3> audio_blocks() { return {{{1, 32}, {32, 64}, {64, 128}}}; }
    static std::array<BlockChannels, 3> body_blocks() { return {{{3, 32}, {32, 64}, {64, 128}}}; }

    bool has_body() const { return mode == Mode::fabulight; }

    // Classification heads; training-only auxiliaries follow the main head.
    std::vector<std::string> head_names() const {
        if (mode == Mode::fabulight) return {"main", "face", "body"};
        return {"main", "face"};
    }

    std::string describe() const {
        return std::string(to_string(mode)) + "|" + to_string(body) + "|face" + std::to_string(face_size);
    }
};

}  // namespace fabulight
