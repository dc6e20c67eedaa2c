#include "tfacm/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace tfacm {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

void StftConfig::validate() const {
    if (win_len < 2) throw std::invalid_argument("stft: win_len must be >= 2");
    if (hop < 1 || hop > win_len) throw std::invalid_argument("stft: need 1 <= hop <= win_len");
    if (win_len % hop != 0) throw std::invalid_argument("stft: win_len must be divisible by hop");
}

Tensor hann_window(int n) {
    if (n < 2) throw std::invalid_argument("hann_window: n must be >= 2");
    Tensor w({static_cast<std::size_t>(n)});
    for (int k = 0; k < n; ++k) {
        w[k] = static_cast<float>(0.5 * (1.0 - std::cos(2.0 * kPi * k / n)));
    }
    return w;
}

FrameTransform::FrameTransform(const StftConfig& cfg) {
    cfg.validate();
    win_ = cfg.win_len;
    hop_ = cfg.hop;
    bins_ = cfg.freq_bins();
    win_tab_.resize(win_);
    for (int k = 0; k < win_; ++k) win_tab_[k] = 0.5 * (1.0 - std::cos(2.0 * kPi * k / win_));
    cos_tab_.resize(static_cast<std::size_t>(bins_) * win_);
    sin_tab_.resize(static_cast<std::size_t>(bins_) * win_);
    for (int k = 0; k < bins_; ++k) {
        for (int n = 0; n < win_; ++n) {
            const double ang = 2.0 * kPi * k * n / win_;
            cos_tab_[k * win_ + n] = std::cos(ang);
            sin_tab_[k * win_ + n] = std::sin(ang);
        }
    }
}

template <typename S>
void FrameTransform::forward(const float* samples, S* re, S* im) const {
    for (int k = 0; k < bins_; ++k) {
        const double* ct = &cos_tab_[k * win_];
        const double* st = &sin_tab_[k * win_];
        double ar = 0.0, ai = 0.0;
        for (int n = 0; n < win_; ++n) {
            const double v = static_cast<double>(samples[n]) * win_tab_[n];
            ar += v * ct[n];
            ai -= v * st[n];
        }
        re[k] = static_cast<S>(ar);
        im[k] = static_cast<S>(ai);
    }
}

template void FrameTransform::forward(const float*, float*, float*) const;
template void FrameTransform::forward(const float*, double*, double*) const;

template <typename S>
void FrameTransform::inverse(const S* re, const S* im, float* samples) const {
    // Real inverse DFT; bins 1..win/2-1 appear twice via conjugate symmetry.
    const double scale = 1.0 / win_;
    for (int n = 0; n < win_; ++n) {
        double acc = re[0];
        for (int k = 1; k < bins_ - 1; ++k) {
            acc += 2.0 * (re[k] * cos_tab_[k * win_ + n] - im[k] * sin_tab_[k * win_ + n]);
        }
        acc += re[bins_ - 1] * cos_tab_[(bins_ - 1) * win_ + n];
        samples[n] = static_cast<float>(acc * scale);
    }
}

template void FrameTransform::inverse(const float*, const float*, float*) const;
template void FrameTransform::inverse(const double*, const double*, float*) const;

float FrameTransform::window_sq_sum(std::int64_t s, std::int64_t total_frames) const {
    std::int64_t lo = (s - win_ + 1 + hop_ - 1) / hop_;  // ceil((s - win + 1)/hop)
    if (s - win_ + 1 <= 0) lo = 0;
    std::int64_t hi = s / hop_;
    if (hi > total_frames - 1) hi = total_frames - 1;
    double acc = 0.0;
    for (std::int64_t tau = lo; tau <= hi; ++tau) {
        const double w = win_tab_[s - tau * hop_];
        acc += w * w;
    }
    return static_cast<float>(acc);
}

std::size_t stft_frame_count(std::size_t sig_len, const StftConfig& cfg) {
    cfg.validate();
    if (sig_len < static_cast<std::size_t>(cfg.win_len)) {
        throw std::invalid_argument("stft: signal shorter than one window");
    }
    const std::size_t rem = (sig_len - cfg.win_len) % cfg.hop;
    const std::size_t padded = rem ? sig_len + (cfg.hop - rem) : sig_len;
    return (padded - cfg.win_len) / cfg.hop + 1;
}

Spectrogram stft(const Tensor& signal, const StftConfig& cfg) {
    if (signal.rank() != 1) throw std::invalid_argument("stft: rank-1 signal required");
    const std::size_t T = stft_frame_count(signal.numel(), cfg);
    const std::size_t F = static_cast<std::size_t>(cfg.freq_bins());
    FrameTransform ft(cfg);

    Spectrogram spec;
    spec.bins = F;
    spec.frame_count = T;
    spec.planes.assign(2 * F * T, 0.0);
    double* re_plane = spec.planes.data();
    double* im_plane = re_plane + F * T;

    std::vector<float> frame(cfg.win_len, 0.0f);
    std::vector<double> re(F), im(F);
    const std::size_t L = signal.numel();
    for (std::size_t tau = 0; tau < T; ++tau) {
        const std::size_t start = tau * cfg.hop;
        for (int n = 0; n < cfg.win_len; ++n) {
            const std::size_t idx = start + n;
            frame[n] = idx < L ? signal[idx] : 0.0f;
        }
        ft.forward(frame.data(), re.data(), im.data());
        for (std::size_t k = 0; k < F; ++k) {
            re_plane[k * T + tau] = re[k];
            im_plane[k * T + tau] = im[k];
        }
    }
    return spec;
}

Tensor istft(const Spectrogram& spec, const StftConfig& cfg, std::size_t out_len) {
    cfg.validate();
    const std::size_t F = static_cast<std::size_t>(cfg.freq_bins());
    if (spec.freq_bins() != F || spec.planes.size() != 2 * F * spec.frames()) {
        throw std::invalid_argument("istft: spectrogram F inconsistent with config (expected " +
                                    std::to_string(F) + " bins, got " +
                                    std::to_string(spec.freq_bins()) + ")");
    }
    const std::size_t T = spec.frames();
    FrameTransform ft(cfg);

    std::vector<double> acc(std::max<std::size_t>(out_len, (T - 1) * cfg.hop + cfg.win_len), 0.0);
    const double* re_plane = spec.planes.data();
    const double* im_plane = re_plane + F * T;
    std::vector<double> re(F), im(F);
    std::vector<float> frame(cfg.win_len);
    for (std::size_t tau = 0; tau < T; ++tau) {
        for (std::size_t k = 0; k < F; ++k) {
            re[k] = re_plane[k * T + tau];
            im[k] = im_plane[k * T + tau];
        }
        ft.inverse(re.data(), im.data(), frame.data());
        double* dst = acc.data() + tau * cfg.hop;
        for (int n = 0; n < cfg.win_len; ++n) {
            dst[n] += static_cast<double>(ft.window(n)) * frame[n];
        }
    }

    Tensor out({out_len});
    for (std::size_t s = 0; s < out_len; ++s) {
        const float wsum = ft.window_sq_sum(static_cast<std::int64_t>(s),
                                            static_cast<std::int64_t>(T));
        out[s] = wsum > 1e-12f ? static_cast<float>(acc[s] / wsum) : 0.0f;
    }
    return out;
}

// ---------------------------------------------------------------------------
// WAV I/O
// ---------------------------------------------------------------------------

namespace {

std::uint32_t rd_u32(const unsigned char* p) {
    return p[0] | (p[1] << 8) | (p[2] << 16) | (std::uint32_t(p[3]) << 24);
}
std::uint16_t rd_u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

void wr_u32(std::ofstream& f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    f.write(reinterpret_cast<char*>(b), 4);
}
void wr_u16(std::ofstream& f, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    f.write(reinterpret_cast<char*>(b), 2);
}

}  // namespace

WavData read_wav(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_wav: cannot open " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
    if (buf.size() < 44 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
        std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
        throw std::runtime_error("read_wav: not a RIFF/WAVE file: " + path);
    }

    int sample_rate = 0, channels = 0, bits = 0, fmt_code = 0;
    const unsigned char* data_ptr = nullptr;
    std::size_t data_len = 0;
    std::size_t pos = 12;
    while (pos + 8 <= buf.size()) {
        const std::uint32_t chunk_len = rd_u32(buf.data() + pos + 4);
        const unsigned char* body = buf.data() + pos + 8;
        if (pos + 8 + chunk_len > buf.size()) throw std::runtime_error("read_wav: truncated chunk in " + path);
        if (std::memcmp(buf.data() + pos, "fmt ", 4) == 0) {
            if (chunk_len < 16) throw std::runtime_error("read_wav: short fmt chunk in " + path);
            fmt_code = rd_u16(body);
            channels = rd_u16(body + 2);
            sample_rate = static_cast<int>(rd_u32(body + 4));
            bits = rd_u16(body + 14);
        } else if (std::memcmp(buf.data() + pos, "data", 4) == 0) {
            data_ptr = body;
            data_len = chunk_len;
        }
        pos += 8 + chunk_len + (chunk_len & 1);
    }
    if (fmt_code != 1 || bits != 16) {
        throw std::runtime_error("read_wav: " + path + " is not PCM16 (format " +
                                 std::to_string(fmt_code) + ", " + std::to_string(bits) + " bits)");
    }
    if (channels != 1) {
        throw std::runtime_error("read_wav: " + path + " has " + std::to_string(channels) +
                                 " channels, mono required");
    }
    if (!data_ptr || data_len % 2 != 0) throw std::runtime_error("read_wav: bad data chunk in " + path);

    const std::size_t n = data_len / 2;
    WavData wd;
    wd.sample_rate = sample_rate;
    wd.samples = Tensor({std::max<std::size_t>(n, 1)});
    for (std::size_t i = 0; i < n; ++i) {
        const std::int16_t v = static_cast<std::int16_t>(rd_u16(data_ptr + 2 * i));
        wd.samples[i] = static_cast<float>(v) / 32768.0f;
    }
    if (n == 0) throw std::runtime_error("read_wav: empty data chunk in " + path);
    return wd;
}

void write_wav(const std::string& path, const Tensor& samples, int sample_rate) {
    if (samples.rank() != 1) throw std::invalid_argument("write_wav: rank-1 tensor required");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_wav: cannot open " + path);
    const std::uint32_t data_len = static_cast<std::uint32_t>(samples.numel() * 2);
    f.write("RIFF", 4);
    wr_u32(f, 36 + data_len);
    f.write("WAVE", 4);
    f.write("fmt ", 4);
    wr_u32(f, 16);
    wr_u16(f, 1);  // PCM
    wr_u16(f, 1);  // mono
    wr_u32(f, static_cast<std::uint32_t>(sample_rate));
    wr_u32(f, static_cast<std::uint32_t>(sample_rate) * 2);
    wr_u16(f, 2);
    wr_u16(f, 16);
    f.write("data", 4);
    wr_u32(f, data_len);
    for (std::size_t i = 0; i < samples.numel(); ++i) {
        // Saturating round to int16.
        const float scaled = samples[i] * 32768.0f;
        long v = std::lround(scaled);
        v = std::clamp(v, -32768L, 32767L);
        wr_u16(f, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
    }
    if (!f) throw std::runtime_error("write_wav: write failed for " + path);
}

}  // namespace tfacm
