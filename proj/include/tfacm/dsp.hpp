#pragma once

#include "tfacm/tensor.hpp"

#include <cstdint>
#include <string>

namespace tfacm {

struct StftConfig {
    int sample_rate = 8000;
    int win_len = 64;  // 8 ms at 8 kHz
    int hop = 8;       // 1 ms at 8 kHz

    int freq_bins() const { return win_len / 2 + 1; }
    void validate() const;
};

// Complex time-frequency representation, stored as real/imag planes [2 x F x T].
// Kept in double so the stft/istft round trip is not limited by storage
// precision; the model casts to float at its boundary.
struct Spectrogram {
    std::size_t bins = 0, frame_count = 0;
    std::vector<double> planes;  // [2 x F x T]
    std::size_t freq_bins() const { return bins; }
    std::size_t frames() const { return frame_count; }
};

// Periodic Hann: w[k] = 0.5 * (1 - cos(2*pi*k/n)).
Tensor hann_window(int n);

// Precomputed per-frame DFT/iDFT kernels plus the analysis window.
// One table serves both the offline transforms and the streaming engine so
// frame arithmetic is bit-identical between the two paths.
class FrameTransform {
public:
    explicit FrameTransform(const StftConfig& cfg);

    int win_len() const { return win_; }
    int hop() const { return hop_; }
    int bins() const { return bins_; }

    // samples (win_len) -> re/im (freq_bins each); analysis window applied.
    template <typename S>
    void forward(const float* samples, S* re, S* im) const;
    // re/im -> win_len time samples (synthesis window NOT applied).
    template <typename S>
    void inverse(const S* re, const S* im, float* samples) const;

    float window(int k) const { return static_cast<float>(win_tab_[k]); }

    // Sum of squared shifted windows covering sample s, counting only frames
    // 0..total_frames-1. Accumulation runs in ascending frame order.
    float window_sq_sum(std::int64_t s, std::int64_t total_frames) const;

private:
    int win_, hop_, bins_;
    std::vector<double> win_tab_;
    std::vector<double> cos_tab_, sin_tab_;  // [bins x win]
};

// No center padding: frame tau covers samples [tau*hop, tau*hop + win_len).
// The signal is right-padded with zeros to complete the final frame.
Spectrogram stft(const Tensor& signal, const StftConfig& cfg);

// Windowed overlap-add with per-sample window-sum normalization.
Tensor istft(const Spectrogram& spec, const StftConfig& cfg, std::size_t out_len);

std::size_t stft_frame_count(std::size_t sig_len, const StftConfig& cfg);

// PCM16 little-endian mono WAV.
struct WavData {
    Tensor samples;  // [L], scaled to [-1, 1) by 1/32768
    int sample_rate = 0;
};
WavData read_wav(const std::string& path);
void write_wav(const std::string& path, const Tensor& samples, int sample_rate);

}  // namespace tfacm
