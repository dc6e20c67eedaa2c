#include "tfacm/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tfacm {

namespace {
constexpr char kMagic[8] = {'T', 'F', 'A', 'C', 'M', '0', '0', '1'};
}

void SeparatorConfig::validate(int freq_bins) const {
    if (speakers < 1) throw std::invalid_argument("config: speakers must be >= 1");
    if (blocks < 1) throw std::invalid_argument("config: blocks must be >= 1");
    if (channels < 1 || hidden < 1) throw std::invalid_argument("config: channels/hidden must be >= 1");
    if (w1 < 1 || s1 < 1 || w1 > freq_bins) {
        throw std::invalid_argument("config: need 1 <= w1 <= F and s1 >= 1");
    }
    if (w2 < 1 || w2 != s2) {
        throw std::invalid_argument("config: w2 == s2 required (non-overlapping time segments)");
    }
    if (attn_channels < 1) throw std::invalid_argument("config: attn_channels must be >= 1");
    const int embed = attn_channels * freq_bins;
    if (heads < 1 || embed % heads != 0) {
        throw std::invalid_argument("config: attention embed dim " + std::to_string(embed) +
                                    " (E*F) not divisible by heads " + std::to_string(heads));
    }
}

void ModelConfig::validate() const {
    stft.validate();
    sep.validate(freq_bins());
}

ModelConfig ModelConfig::preset_large() {
    ModelConfig cfg;
    cfg.preset = "large";
    cfg.sep.channels = 128;
    cfg.sep.blocks = 3;
    cfg.sep.hidden = 64;
    cfg.sep.heads = 2;
    cfg.sep.attn_channels = 4;
    return cfg;
}

ModelConfig ModelConfig::preset_small() {
    ModelConfig cfg;
    cfg.preset = "small";
    cfg.sep.channels = 64;
    cfg.sep.blocks = 2;
    cfg.sep.hidden = 64;
    cfg.sep.heads = 4;
    cfg.sep.attn_channels = 8;
    return cfg;
}

ModelConfig ModelConfig::from_preset_name(const std::string& name) {
    if (name == "large") return preset_large();
    if (name == "small") return preset_small();
    throw std::invalid_argument("unknown preset '" + name + "' (expected large or small)");
}

namespace {

OutputActivation parse_activation(const std::string& v) {
    if (v == "linear") return OutputActivation::Linear;
    if (v == "relu") return OutputActivation::Relu;
    throw std::invalid_argument("config: output_activation must be linear or relu, got '" + v + "'");
}

}  // namespace

ModelConfig ModelConfig::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    ModelConfig cfg;
    cfg.preset = "custom";
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        // trim
        auto notspace = [](unsigned char ch) { return !std::isspace(ch); };
        line.erase(line.begin(), std::find_if(line.begin(), line.end(), notspace));
        line.erase(std::find_if(line.rbegin(), line.rend(), notspace).base(), line.end());
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("config: line " + std::to_string(lineno) + ": expected key=value");
        }
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        key.erase(std::find_if(key.rbegin(), key.rend(), notspace).base(), key.end());
        val.erase(val.begin(), std::find_if(val.begin(), val.end(), notspace));

        auto as_int = [&](int& dst) { dst = std::stoi(val); };
        if (key == "preset") {
            if (val != "custom") cfg = from_preset_name(val);
            cfg.preset = val;
        } else if (key == "sample_rate") as_int(cfg.stft.sample_rate);
        else if (key == "win_len") as_int(cfg.stft.win_len);
        else if (key == "hop") as_int(cfg.stft.hop);
        else if (key == "speakers") as_int(cfg.sep.speakers);
        else if (key == "channels") as_int(cfg.sep.channels);
        else if (key == "blocks") as_int(cfg.sep.blocks);
        else if (key == "hidden") as_int(cfg.sep.hidden);
        else if (key == "heads") as_int(cfg.sep.heads);
        else if (key == "w1") as_int(cfg.sep.w1);
        else if (key == "s1") as_int(cfg.sep.s1);
        else if (key == "w2") as_int(cfg.sep.w2);
        else if (key == "s2") as_int(cfg.sep.s2);
        else if (key == "attn_channels") as_int(cfg.sep.attn_channels);
        else if (key == "output_activation") cfg.sep.output_activation = parse_activation(val);
        else if (key == "max_attn_frames") cfg.sep.max_attn_frames = std::stoull(val);
        else throw std::runtime_error("config: unknown key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

std::string ModelConfig::to_text() const {
    std::ostringstream os;
    os << "preset=" << preset << "\n"
       << "sample_rate=" << stft.sample_rate << "\n"
       << "win_len=" << stft.win_len << "\n"
       << "hop=" << stft.hop << "\n"
       << "speakers=" << sep.speakers << "\n"
       << "channels=" << sep.channels << "\n"
       << "blocks=" << sep.blocks << "\n"
       << "hidden=" << sep.hidden << "\n"
       << "heads=" << sep.heads << "\n"
       << "w1=" << sep.w1 << "\ns1=" << sep.s1 << "\n"
       << "w2=" << sep.w2 << "\ns2=" << sep.s2 << "\n"
       << "attn_channels=" << sep.attn_channels << "\n"
       << "output_activation=" << (sep.output_activation == OutputActivation::Linear ? "linear" : "relu")
       << "\n"
       << "max_attn_frames=" << sep.max_attn_frames << "\n";
    return os.str();
}

std::size_t TensorEntry::numel() const {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::vector<TensorEntry> weight_manifest(const ModelConfig& cfg) {
    cfg.validate();
    const std::size_t N = cfg.sep.channels;
    const std::size_t H = cfg.sep.hidden;
    const std::size_t F = cfg.freq_bins();
    const std::size_t W1 = cfg.sep.w1;
    const std::size_t W2 = cfg.sep.w2;
    const std::size_t E = cfg.sep.attn_channels;
    const std::size_t EF = E * F;
    const std::size_t C = cfg.sep.speakers;
    const int B = cfg.sep.blocks;

    std::vector<TensorEntry> m;
    auto add = [&](std::string name, std::vector<std::size_t> shape, std::size_t fan_in,
                   bool lstm_bias = false) {
        m.push_back({std::move(name), std::move(shape), fan_in, lstm_bias});
    };
    auto add_lstm = [&](const std::string& prefix, std::size_t in) {
        add(prefix + ".w_ih", {4 * H, in}, in);
        add(prefix + ".w_hh", {4 * H, H}, H);
        add(prefix + ".b", {4 * H}, in + H, true);
    };

    add("enc.conv.w", {N, 2, 3, 3}, 2 * 9);
    add("enc.conv.b", {N}, 2 * 9);
    add("enc.ln.g", {N}, N);
    add("enc.ln.b", {N}, N);

    for (int i = 0; i < B; ++i) {
        const std::string p = "blk" + std::to_string(i) + ".";
        add(p + "f.ln.g", {W1 * N}, W1 * N);
        add(p + "f.ln.b", {W1 * N}, W1 * N);
        add_lstm(p + "f.lstm", W1 * N);
        add(p + "f.deconv.w", {N, H, W1}, H * W1);
        add(p + "f.deconv.b", {N}, H * W1);

        add_lstm(p + "t.lstm", N);
        add(p + "t.out.w", {W2, N, H}, H);
        add(p + "t.out.b", {N}, H);

        if (i + 1 < B) {
            add_lstm(p + "cm.h", H);
            add_lstm(p + "cm.c", H);
        }

        for (const char* qkv : {"q", "k", "v"}) {
            const std::string q = p + "car." + qkv;
            add(q + ".w", {E, N}, N);
            add(q + ".b", {E}, N);
            add(q + ".prelu", {E}, E);
            add(q + ".ln.g", {E}, E);
            add(q + ".ln.b", {E}, E);
        }
        add(p + "car.attn.w_o", {EF, EF}, EF);
        add(p + "car.attn.b_o", {EF}, EF);
        add(p + "car.back.w", {N, E}, E);
        add(p + "car.back.b", {N}, E);
        add(p + "car.gate.dw_a", {N, 3}, 3);
        add(p + "car.gate.dwb_a", {N}, 3);
        add(p + "car.gate.pw_a", {N, N}, N);
        add(p + "car.gate.pwb_a", {N}, N);
        add(p + "car.gate.dw_b", {N, 3}, 3);
        add(p + "car.gate.dwb_b", {N}, 3);
        add(p + "car.gate.pw_b", {N, N}, N);
        add(p + "car.gate.pwb_b", {N}, N);
        add(p + "car.gate.out.w", {N, N}, N);
        add(p + "car.gate.out.b", {N}, N);
    }

    add("dec.conv.w", {2 * C, N, 3, 3}, N * 9);
    add("dec.conv.b", {2 * C}, N * 9);
    return m;
}

std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

WeightContainer init_weights(const ModelConfig& cfg, std::uint64_t seed) {
    WeightContainer w;
    w.manifest = weight_manifest(cfg);
    std::size_t total = 0;
    for (const auto& e : w.manifest) total += e.numel();
    w.payload.resize(total);

    const std::size_t H = cfg.sep.hidden;
    std::size_t off = 0;
    std::uint64_t ordinal = 0;
    for (const auto& e : w.manifest) {
        std::uint64_t state = seed ^ (0x9E3779B97F4A7C15ULL * (ordinal + 1));
        (void)splitmix64(state);  // decorrelate nearby ordinals
        const float a = std::sqrt(1.0f / static_cast<float>(e.fan_in));
        float* dst = w.payload.data() + off;
        const std::size_t n = e.numel();
        for (std::size_t i = 0; i < n; ++i) {
            // 24-bit mantissa draw in [0,1), mapped to (-a, a).
            const std::uint64_t bits = splitmix64(state) >> 40;
            const float u = static_cast<float>(bits) * (1.0f / 16777216.0f);
            dst[i] = (2.0f * u - 1.0f) * a;
        }
        if (e.lstm_bias) {
            for (std::size_t i = H; i < 2 * H; ++i) dst[i] = 1.0f;  // forget gate
        }
        off += n;
        ++ordinal;
    }
    return w;
}

void save_weights(const std::string& path, const WeightContainer& w) {
    std::ostringstream man;
    std::size_t off = 0;
    for (const auto& e : w.manifest) {
        man << e.name << " ";
        for (std::size_t i = 0; i < e.shape.size(); ++i) man << (i ? "x" : "") << e.shape[i];
        man << " " << off << "\n";
        off += e.numel() * sizeof(float);
    }
    const std::string man_str = man.str();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_weights: cannot open " + path);
    f.write(kMagic, 8);
    std::uint64_t man_len = man_str.size();
    unsigned char lenb[8];
    for (int i = 0; i < 8; ++i) lenb[i] = static_cast<unsigned char>(man_len >> (8 * i));
    f.write(reinterpret_cast<char*>(lenb), 8);
    f.write(man_str.data(), static_cast<std::streamsize>(man_str.size()));
    f.write(reinterpret_cast<const char*>(w.payload.data()),
            static_cast<std::streamsize>(w.payload.size() * sizeof(float)));
    if (!f) throw std::runtime_error("save_weights: write failed for " + path);
}

WeightContainer load_weights(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_weights: cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0) {
        throw std::runtime_error("load_weights: bad magic in " + path + " (expected TFACM001)");
    }
    unsigned char lenb[8];
    f.read(reinterpret_cast<char*>(lenb), 8);
    if (!f) throw std::runtime_error("load_weights: truncated header in " + path);
    std::uint64_t man_len = 0;
    for (int i = 0; i < 8; ++i) man_len |= static_cast<std::uint64_t>(lenb[i]) << (8 * i);
    std::string man_str(man_len, '\0');
    f.read(man_str.data(), static_cast<std::streamsize>(man_len));
    if (!f) throw std::runtime_error("load_weights: truncated manifest in " + path);

    WeightContainer w;
    std::istringstream ms(man_str);
    std::string line;
    std::size_t expect_off = 0;
    while (std::getline(ms, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        TensorEntry e;
        std::string shape_s;
        std::size_t off = 0;
        if (!(ls >> e.name >> shape_s >> off)) {
            throw std::runtime_error("load_weights: malformed manifest line '" + line + "'");
        }
        std::size_t pos = 0;
        while (pos < shape_s.size()) {
            const auto x = shape_s.find('x', pos);
            const std::string d = shape_s.substr(pos, x == std::string::npos ? x : x - pos);
            e.shape.push_back(std::stoull(d));
            if (x == std::string::npos) break;
            pos = x + 1;
        }
        if (off != expect_off) {
            throw std::runtime_error("load_weights: offsets not ascending/contiguous at '" + e.name + "'");
        }
        expect_off = off + e.numel() * sizeof(float);
        w.manifest.push_back(std::move(e));
    }

    std::size_t total = expect_off / sizeof(float);
    w.payload.resize(total);
    f.read(reinterpret_cast<char*>(w.payload.data()),
           static_cast<std::streamsize>(total * sizeof(float)));
    if (static_cast<std::size_t>(f.gcount()) != total * sizeof(float)) {
        throw std::runtime_error("load_weights: truncated payload in " + path);
    }
    return w;
}

Model bind_weights(const ModelConfig& cfg, const WeightContainer& w) {
    const auto expect = weight_manifest(cfg);
    if (expect.size() != w.manifest.size()) {
        throw std::runtime_error("bind_weights: container holds " + std::to_string(w.manifest.size()) +
                                 " tensors, config expects " + std::to_string(expect.size()));
    }
    Model model;
    model.cfg = cfg;
    std::size_t off = 0;
    for (std::size_t i = 0; i < expect.size(); ++i) {
        const auto& e = w.manifest[i];
        if (e.name != expect[i].name || e.shape != expect[i].shape) {
            throw std::runtime_error("bind_weights: tensor '" + e.name + "' has shape " +
                                     shape_str(e.shape) + ", expected '" + expect[i].name +
                                     "' with shape " + shape_str(expect[i].shape));
        }
        std::vector<float> data(w.payload.begin() + off, w.payload.begin() + off + e.numel());
        model.tensors.emplace(e.name, Tensor(e.shape, std::move(data)));
        off += e.numel();
    }
    return model;
}

const Tensor& Model::get(const std::string& name) const {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw std::runtime_error("model: missing tensor '" + name + "'");
    return it->second;
}

std::size_t count_params(const ModelConfig& cfg) {
    std::size_t total = 0;
    for (const auto& e : weight_manifest(cfg)) total += e.numel();
    return total;
}

double estimate_macs(const ModelConfig& cfg, double seconds) {
    if (seconds <= 0.0) return 0.0;
    cfg.validate();
    const double N = cfg.sep.channels;
    const double H = cfg.sep.hidden;
    const double F = cfg.freq_bins();
    const double W1 = cfg.sep.w1, S1 = cfg.sep.s1;
    const double W2 = cfg.sep.w2;
    const double E = cfg.sep.attn_channels;
    const double EF = E * F;
    const double C = cfg.sep.speakers;
    const double B = cfg.sep.blocks;

    const double frames_per_s = static_cast<double>(cfg.stft.sample_rate) / cfg.stft.hop;
    const double T = std::floor(seconds * frames_per_s);
    const double LF = std::floor((F - W1) / S1) + 1.0;

    // Per-frame costs.
    const double dft = 2.0 * F * cfg.stft.win_len * (1.0 + C);  // analysis + C syntheses
    const double enc = N * 2.0 * 9.0 * F;
    const double dec = 2.0 * C * N * 9.0 * F;
    const double flocal = LF * (4.0 * H * (W1 * N + H)) + LF * N * H * W1;
    const double tlocal = F * 4.0 * H * (N + H) + F * N * H;
    const double cm = 2.0 * F * 4.0 * H * (H + H) / W2;  // amortized per frame
    const double qkv = 3.0 * E * N * F;
    const double attn_out = EF * EF + N * E * F;
    const double gated = 3.0 * N * N * F + 2.0 * 3.0 * N * F;
    const double per_frame_blocks = B * (flocal + tlocal + qkv + attn_out + gated) + (B - 1) * cm;

    // Attention score/value term: frame t attends over t+1 keys (quadratic in T).
    const double attn_quad = B * 2.0 * EF * (T * (T + 1.0) / 2.0);

    const double total = T * (dft + enc + dec + per_frame_blocks) + attn_quad;
    return total / seconds;
}

}  // namespace tfacm
