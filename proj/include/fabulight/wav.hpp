#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "fabulight/common.hpp"

namespace fabulight {

struct AudioClip {
    std::vector<double> samples;  // in [-1, 1]
    std::uint32_t sample_rate = 0;

    double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t read_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace detail

// Single-channel 16-bit PCM reader. Anything else in the header is rejected
// with a description of what was found.
inline AudioClip read_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open WAV file: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw parse_error("not a RIFF/WAVE file: " + path);

    AudioClip clip;
    std::size_t pos = 12;
    bool have_fmt = false, have_data = false;
    std::uint16_t channels = 0, bits = 0, format = 0;
    while (pos + 8 <= bytes.size()) {
        const char* tag = reinterpret_cast<const char*>(bytes.data() + pos);
        const std::uint32_t chunk = detail::read_u32(bytes.data() + pos + 4);
        pos += 8;
        if (pos + chunk > bytes.size()) throw parse_error("truncated WAV chunk in " + path);
        if (std::memcmp(tag, "fmt ", 4) == 0 && chunk >= 16) {
            format = detail::read_u16(bytes.data() + pos);
            channels = detail::read_u16(bytes.data() + pos + 2);
            clip.sample_rate = detail::read_u32(bytes.data() + pos + 4);
            bits = detail::read_u16(bytes.data() + pos + 14);
            have_fmt = true;
        } else if (std::memcmp(tag, "data", 4) == 0) {
            if (!have_fmt) throw parse_error("WAV data chunk precedes fmt chunk: " + path);
            const std::size_t count = chunk / 2;
            clip.samples.resize(count);
            for (std::size_t i = 0; i < count; ++i) {
                const auto raw = static_cast<std::int16_t>(detail::read_u16(bytes.data() + pos + 2 * i));
                clip.samples[i] = static_cast<double>(raw) / 32768.0;
            }
            have_data = true;
        }
        pos += chunk + (chunk & 1);
    }
    if (!have_fmt || !have_data) throw parse_error("WAV file missing fmt or data chunk: " + path);
    if (format != 1) throw input_error("WAV format " + std::to_string(format) + " is not PCM: " + path);
    if (channels != 1) throw input_error("expected mono audio, got " + std::to_string(channels) + " channels: " + path);
    if (bits != 16) throw input_error("expected 16-bit samples, got " + std::to_string(bits) + ": " + path);
    return clip;
}

inline void write_wav(const std::string& path, const std::vector<double>& samples, std::uint32_t rate) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot create WAV file: " + path);
    const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
    auto put_u32 = [&](std::uint32_t v) {
        char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 24)};
        out.write(b, 4);
    };
    auto put_u16 = [&](std::uint16_t v) {
        char b[2] = {static_cast<char>(v), static_cast<char>(v >> 8)};
        out.write(b, 2);
    };
    out.write("RIFF", 4);
    put_u32(36 + data_bytes);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    put_u32(16);
    put_u16(1);  // PCM
    put_u16(1);  // mono
    put_u32(rate);
    put_u32(rate * 2);
    put_u16(2);
    put_u16(16);
    out.write("data", 4);
    put_u32(data_bytes);
    for (const double s : samples) {
        double v = s;
        if (v > 1.0) v = 1.0;
        if (v < -1.0) v = -1.0;
        const auto q = static_cast<std::int16_t>(std::lround(v * 32767.0));
        put_u16(static_cast<std::uint16_t>(q));
    }
    if (!out) throw io_error("failed writing WAV file: " + path);
}

}  // namespace fabulight
