#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "fabulight/tensor.hpp"
#include "fabulight/wav.hpp"

namespace fabulight {

// 13 cepstral coefficients per 10 ms hop; at 25 fps video this yields the
// required four vectors per video frame.
struct MfccConfig {
    std::uint32_t sample_rate = 16000;
    std::size_t window = 400;  // 25 ms
    std::size_t hop = 160;     // 10 ms
    std::size_t n_fft = 512;
    std::size_t n_mels = 26;
    std::size_t n_coeffs = 13;
    double preemphasis = 0.97;
    double log_floor = 1e-30;
    double f_min = 0.0;
    double f_max = 8000.0;
};

inline constexpr std::size_t kMfccPerVideoFrame = 4;

namespace detail {

// In-place iterative radix-2 FFT; n must be a power of two.
inline void fft_radix2(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0) throw config_error("fft: length must be a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double angle = -2.0 * 3.14159265358979323846 / static_cast<double>(len);
        const std::complex<double> wn(std::cos(angle), std::sin(angle));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wn;
            }
        }
    }
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular filters on the mel scale; filter j spans FFT bins
// [edge[j], edge[j+2]] with its peak at edge[j+1].
inline std::vector<std::vector<double>> mel_filterbank(const MfccConfig& cfg) {
    const std::size_t bins = cfg.n_fft / 2 + 1;
    const double lo = hz_to_mel(cfg.f_min), hi = hz_to_mel(cfg.f_max);
    std::vector<std::size_t> edge(cfg.n_mels + 2);
    for (std::size_t i = 0; i < edge.size(); ++i) {
        const double mel = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1);
        edge[i] = static_cast<std::size_t>(std::floor((cfg.n_fft + 1) * mel_to_hz(mel) / cfg.sample_rate));
    }
    std::vector<std::vector<double>> bank(cfg.n_mels, std::vector<double>(bins, 0.0));
    for (std::size_t j = 0; j < cfg.n_mels; ++j) {
        for (std::size_t k = edge[j]; k < edge[j + 1]; ++k)
            bank[j][k] = static_cast<double>(k - edge[j]) / static_cast<double>(edge[j + 1] - edge[j]);
        for (std::size_t k = edge[j + 1]; k < edge[j + 2]; ++k)
            bank[j][k] = static_cast<double>(edge[j + 2] - k) / static_cast<double>(edge[j + 2] - edge[j + 1]);
    }
    return bank;
}

}  // namespace detail

// Framing rule: 1 + floor((len - window) / hop), no reflection padding.
inline std::size_t mfcc_frame_count(std::size_t samples, const MfccConfig& cfg = {}) {
    if (samples < cfg.window) throw input_error("audio shorter than one analysis window");
    return 1 + (samples - cfg.window) / cfg.hop;
}

// Standard MFCC pipeline: pre-emphasis, Hamming-windowed power spectra, mel
// filterbank, log with floor, orthonormal DCT-II, keep the first 13.
// Output is [n_coeffs x T_a], unaligned.
template <typename S>
Tensor<S> compute_mfcc(const std::vector<double>& samples, const MfccConfig& cfg = {}) {
    const std::size_t frames = mfcc_frame_count(samples.size(), cfg);

    std::vector<double> emphasized(samples.size());
    emphasized[0] = samples[0];
    for (std::size_t i = 1; i < samples.size(); ++i)
        emphasized[i] = samples[i] - cfg.preemphasis * samples[i - 1];

    std::vector<double> hamming(cfg.window);
    for (std::size_t n = 0; n < cfg.window; ++n)
        hamming[n] = 0.54 - 0.46 * std::cos(2.0 * 3.14159265358979323846 * n / (cfg.window - 1));

    const auto bank = detail::mel_filterbank(cfg);
    const std::size_t bins = cfg.n_fft / 2 + 1;

    // orthonormal DCT-II basis, first n_coeffs rows
    std::vector<double> dct(cfg.n_coeffs * cfg.n_mels);
    for (std::size_t k = 0; k < cfg.n_coeffs; ++k) {
        const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(cfg.n_mels));
        for (std::size_t n = 0; n < cfg.n_mels; ++n)
            dct[k * cfg.n_mels + n] =
                scale * std::cos(3.14159265358979323846 * k * (2.0 * n + 1.0) / (2.0 * cfg.n_mels));
    }

    Tensor<S> out({cfg.n_coeffs, frames});
    std::vector<std::complex<double>> buf(cfg.n_fft);
    std::vector<double> power(bins), energies(cfg.n_mels);
    for (std::size_t f = 0; f < frames; ++f) {
        const std::size_t start = f * cfg.hop;
        for (std::size_t n = 0; n < cfg.n_fft; ++n)
            buf[n] = n < cfg.window ? std::complex<double>(emphasized[start + n] * hamming[n], 0.0)
                                    : std::complex<double>(0.0, 0.0);
        detail::fft_radix2(buf);
        for (std::size_t k = 0; k < bins; ++k) power[k] = std::norm(buf[k]) / static_cast<double>(cfg.n_fft);
        for (std::size_t j = 0; j < cfg.n_mels; ++j) {
            double e = 0.0;
            for (std::size_t k = 0; k < bins; ++k) e += bank[j][k] * power[k];
            energies[j] = std::log(std::max(e, cfg.log_floor));
        }
        for (std::size_t k = 0; k < cfg.n_coeffs; ++k) {
            double c = 0.0;
            for (std::size_t n = 0; n < cfg.n_mels; ++n) c += dct[k * cfg.n_mels + n] * energies[n];
            out.at({k, f}) = static_cast<S>(c);
        }
    }
    return out;
}

template <typename S>
Tensor<S> compute_mfcc(const AudioClip& clip, const MfccConfig& cfg = {}) {
    if (clip.sample_rate != cfg.sample_rate)
        throw input_error("expected " + std::to_string(cfg.sample_rate) + " Hz audio, got " +
                          std::to_string(clip.sample_rate) + " Hz (resampling is out of scope)");
    return compute_mfcc<S>(clip.samples, cfg);
}

// Pads with zeros or truncates at the end so the vector count is exactly
// four per video frame.
template <typename S>
Tensor<S> align_to_frames(const Tensor<S>& mfcc, std::size_t video_frames) {
    if (mfcc.rank() != 2) throw dimension_error("align_to_frames: [coeffs x T] input required");
    if (video_frames == 0) throw input_error("align_to_frames: at least one video frame required");
    const std::size_t rows = mfcc.extent(0), have = mfcc.extent(1);
    const std::size_t want = kMfccPerVideoFrame * video_frames;
    if (have == want) return mfcc;
    Tensor<S> out({rows, want});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < std::min(have, want); ++c) out.at({r, c}) = mfcc.at({r, c});
    return out;
}

}  // namespace fabulight
