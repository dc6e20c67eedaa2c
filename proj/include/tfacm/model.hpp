#pragma once

#include "tfacm/dsp.hpp"
#include "tfacm/tensor.hpp"

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace tfacm {

enum class OutputActivation { Linear, Relu };

struct SeparatorConfig {
    int speakers = 2;        // C
    int channels = 128;      // N
    int blocks = 3;          // B
    int hidden = 64;         // H, LSTM hidden units
    int heads = 2;
    int w1 = 2, s1 = 1;      // frequency unfold width / stride
    int w2 = 4, s2 = 4;      // time unfold width / stride (w2 == s2 enforced)
    int attn_channels = 4;   // E
    OutputActivation output_activation = OutputActivation::Linear;
    std::size_t max_attn_frames = 0;  // 0 = unbounded attention history
    bool attn_mask_disabled = false;  // verification negative control only

    void validate(int freq_bins) const;
};

struct ModelConfig {
    std::string preset = "custom";
    StftConfig stft;
    SeparatorConfig sep;

    int freq_bins() const { return stft.freq_bins(); }
    void validate() const;

    static ModelConfig preset_large();
    static ModelConfig preset_small();
    static ModelConfig from_preset_name(const std::string& name);

    // UTF-8 key=value text; unknown keys rejected.
    static ModelConfig from_file(const std::string& path);
    std::string to_text() const;
};

struct TensorEntry {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t fan_in = 1;
    bool lstm_bias = false;  // forget-gate rows set to +1 after init
    std::size_t numel() const;
};

// Fixed tensor order for a config; the single source of truth for weight
// naming, init, serialization and parameter counting.
std::vector<TensorEntry> weight_manifest(const ModelConfig& cfg);

struct WeightContainer {
    std::vector<TensorEntry> manifest;
    std::vector<float> payload;  // contiguous, row-major, manifest order
};

std::uint64_t splitmix64(std::uint64_t& state);

WeightContainer init_weights(const ModelConfig& cfg, std::uint64_t seed);
void save_weights(const std::string& path, const WeightContainer& w);
WeightContainer load_weights(const std::string& path);

// Loaded, validated weights bound to a config.
struct Model {
    ModelConfig cfg;
    std::unordered_map<std::string, Tensor> tensors;

    const Tensor& get(const std::string& name) const;
};

Model bind_weights(const ModelConfig& cfg, const WeightContainer& w);

std::size_t count_params(const ModelConfig& cfg);

// Analytic multiply-accumulate count for `seconds` of audio at the configured
// sample rate. The attention term is quadratic in the frame count, so the
// per-second figure grows with the chosen duration.
double estimate_macs(const ModelConfig& cfg, double seconds);

}  // namespace tfacm
