#include "tfacm/dsp.hpp"
#include "tfacm/metrics.hpp"
#include "tfacm/model.hpp"
#include "tfacm/separator.hpp"
#include "tfacm/streaming.hpp"
#include "tfacm/verify.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace tfacm;

namespace {

ModelConfig resolve_config(const std::string& model) {
    if (model == "large" || model == "small") return ModelConfig::from_preset_name(model);
    return ModelConfig::from_file(model);
}

Model load_model(const std::string& model, const std::string& weights, std::uint64_t init_seed) {
    ModelConfig cfg = resolve_config(model);
    if (!weights.empty()) return bind_weights(cfg, load_weights(weights));
    return bind_weights(cfg, init_weights(cfg, init_seed));
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

int cmd_separate(const std::string& model, const std::string& weights, const std::string& in_wav,
                 const std::string& out_dir, bool stream, double chunk_ms,
                 std::uint64_t init_seed) {
    Model m = load_model(model, weights, init_seed);
    WavData wav = read_wav(in_wav);
    if (wav.sample_rate != m.cfg.stft.sample_rate) {
        throw std::runtime_error("sample rate mismatch: " + in_wav + " is " +
                                 std::to_string(wav.sample_rate) + " Hz, model expects " +
                                 std::to_string(m.cfg.stft.sample_rate));
    }
    Separator sep(std::move(m));
    const std::size_t L = wav.samples.numel();

    Tensor out;
    if (stream) {
        StreamSeparator st(sep);
        const std::size_t chunk = std::max<std::size_t>(
            1, static_cast<std::size_t>(chunk_ms * sep.cfg().stft.sample_rate / 1000.0));
        std::vector<std::vector<float>> acc(sep.cfg().sep.speakers);
        for (std::size_t pos = 0; pos < L; pos += chunk) {
            Tensor part = st.push(wav.samples.data() + pos, std::min(chunk, L - pos));
            for (std::size_t c = 0; c < acc.size(); ++c) {
                const float* p = part.data() + c * part.dim(1);
                acc[c].insert(acc[c].end(), p, p + part.dim(1));
            }
        }
        Tensor tail = st.flush(L);
        for (std::size_t c = 0; c < acc.size(); ++c) {
            const float* p = tail.data() + c * tail.dim(1);
            acc[c].insert(acc[c].end(), p, p + tail.dim(1));
        }
        out = Tensor({acc.size(), L});
        for (std::size_t c = 0; c < acc.size(); ++c) {
            std::copy(acc[c].begin(), acc[c].end(), out.data() + c * L);
        }
    } else {
        out = sep.separate(wav.samples);
    }

    fs::create_directories(out_dir);
    const std::string stem = stem_of(in_wav);
    for (std::size_t c = 0; c < out.dim(0); ++c) {
        Tensor spk({L});
        std::copy(out.data() + c * L, out.data() + (c + 1) * L, spk.data());
        const std::string path =
            (fs::path(out_dir) / (stem + "_spk" + std::to_string(c + 1) + ".wav")).string();
        write_wav(path, spk, wav.sample_rate);
        std::cout << path << "\n";
    }
    return 0;
}

int cmd_verify(const std::string& suite, std::uint64_t seed, int trials) {
    const bool ok = run_suite(suite, seed, trials, std::cout);
    std::cout << (ok ? "suite passed" : "suite FAILED") << "\n";
    return ok ? 0 : 1;
}

int cmd_metrics(const std::string& est_dir, const std::string& ref_dir, const std::string& mix_dir,
                const std::string& metric_name) {
    const PitMetric metric = metric_name == "snr" ? PitMetric::NegSnr : PitMetric::NegSiSnr;

    std::vector<std::string> stems;
    for (const auto& e : fs::directory_iterator(mix_dir)) {
        if (e.path().extension() == ".wav") stems.push_back(e.path().stem().string());
    }
    std::sort(stems.begin(), stems.end());
    if (stems.empty()) throw std::runtime_error("no .wav files in " + mix_dir);

    EvalReport report;
    std::vector<std::string> missing;
    for (const std::string& stem : stems) {
        WavData mix = read_wav((fs::path(mix_dir) / (stem + ".wav")).string());
        const std::size_t L = mix.samples.numel();

        std::vector<Tensor> est_rows, ref_rows;
        for (int c = 1;; ++c) {
            const fs::path est_p = fs::path(est_dir) / (stem + "_spk" + std::to_string(c) + ".wav");
            const fs::path ref_p = fs::path(ref_dir) / (stem + "_spk" + std::to_string(c) + ".wav");
            const bool he = fs::exists(est_p), hr = fs::exists(ref_p);
            if (!he && !hr) break;
            if (he != hr) {
                missing.push_back((he ? ref_p : est_p).string());
                break;
            }
            est_rows.push_back(read_wav(est_p.string()).samples);
            ref_rows.push_back(read_wav(ref_p.string()).samples);
        }
        if (est_rows.empty()) missing.push_back(stem + "_spk1.wav");
        if (!missing.empty()) continue;

        Tensor ests({est_rows.size(), L}), refs({est_rows.size(), L});
        for (std::size_t c = 0; c < est_rows.size(); ++c) {
            if (est_rows[c].numel() != L || ref_rows[c].numel() != L) {
                throw std::runtime_error("length mismatch for utterance " + stem);
            }
            std::copy(est_rows[c].data(), est_rows[c].data() + L, ests.data() + c * L);
            std::copy(ref_rows[c].data(), ref_rows[c].data() + L, refs.data() + c * L);
        }
        report.utts.push_back(evaluate_utterance(stem, ests, refs, mix.samples, metric));
    }
    if (!missing.empty()) {
        std::string msg = "unmatched files:";
        for (const auto& m : missing) msg += " " + m;
        throw std::runtime_error(msg);
    }

    std::cout << report.to_csv();
    std::cout << "mean," << report.mean_si_snr_i() << "," << report.mean_sdr_i() << ",\n";
    return 0;
}

int cmd_bench(const std::string& model, const std::string& weights, double seconds, bool stream,
              std::uint64_t init_seed) {
    Model m = load_model(model, weights, init_seed);
    const ModelConfig cfg = m.cfg;
    Separator sep(std::move(m));
    const std::size_t L =
        static_cast<std::size_t>(seconds * cfg.stft.sample_rate);
    Tensor x = random_signal(init_seed, L);

    std::size_t state_bytes = 0;
    const auto t0 = std::chrono::steady_clock::now();
    if (stream) {
        StreamSeparator st(sep);
        const std::size_t chunk = 80;  // 10 ms pushes
        for (std::size_t pos = 0; pos < L; pos += chunk) {
            st.push(x.data() + pos, std::min(chunk, L - pos));
            state_bytes = std::max(state_bytes, st.state_bytes());
        }
        st.flush(L);
    } else {
        sep.separate(x);
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::cout << "mode: " << (stream ? "streaming" : "offline") << "\n"
              << "audio_seconds: " << seconds << "\n"
              << "wall_seconds: " << wall << "\n"
              << "rtf: " << wall / seconds << "\n";
    if (stream) std::cout << "peak_state_bytes: " << state_bytes << "\n";
    std::cout << "params: " << count_params(cfg) << "\n"
              << "estimated_macs_per_s: " << estimate_macs(cfg, seconds) / seconds << "\n";
    return 0;
}

int cmd_info(const std::string& model) {
    ModelConfig cfg = resolve_config(model);
    cfg.validate();
    std::cout << cfg.to_text();
    const double params_m = static_cast<double>(count_params(cfg)) / 1e6;
    const double macs_g = estimate_macs(cfg, 1.0) / 1e9;
    std::cout << "params: " << count_params(cfg) << " (" << params_m << " M)\n";
    std::cout << "estimated_macs_per_s: " << macs_g << " G\n";
    if (cfg.preset == "large") {
        std::cout << "reference figures for this size class: 1.0 M params, 36.5 G MAC/s\n";
    } else if (cfg.preset == "small") {
        std::cout << "reference figures for this size class: 0.5 M params, 21.9 G MAC/s\n";
    }
    std::cout << "note: reference hyperparameters are not fully published; figures are "
                 "diagnostic, not targets\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"causal time-frequency speech separation engine"};
    app.require_subcommand(1);

    std::string model = "small", weights, in_wav, out_dir = ".", suite = "dsp";
    std::string est_dir, ref_dir, mix_dir, metric = "si_snr";
    std::uint64_t seed = 1234;
    int trials = 20;
    double chunk_ms = 10.0, seconds = 8.0;
    bool stream = false;

    auto* sep = app.add_subcommand("separate", "separate a mixture WAV into speaker tracks");
    sep->add_option("--model", model, "preset name (large|small) or config file");
    sep->add_option("--weights", weights, "weight container file (seeded random init if omitted)");
    sep->add_option("--in", in_wav, "input mixture WAV")->required();
    sep->add_option("--out-dir", out_dir, "output directory");
    sep->add_flag("--stream", stream, "run through the streaming engine");
    sep->add_option("--chunk-ms", chunk_ms, "streaming push size in milliseconds");
    sep->add_option("--seed", seed, "weight init seed when --weights is omitted");

    auto* ver = app.add_subcommand("verify", "run an invariant suite");
    ver->add_option("--suite", suite, "causality | streaming | dsp | loss")->required();
    ver->add_option("--seed", seed, "suite seed");
    ver->add_option("--trials", trials, "trial count");

    auto* met = app.add_subcommand("metrics", "score separated tracks against references");
    met->add_option("--est-dir", est_dir)->required();
    met->add_option("--ref-dir", ref_dir)->required();
    met->add_option("--mix-dir", mix_dir)->required();
    met->add_option("--metric", metric, "si_snr | snr");

    auto* ben = app.add_subcommand("bench", "measure real-time factor");
    ben->add_option("--model", model);
    ben->add_option("--weights", weights);
    ben->add_option("--seconds", seconds, "audio duration to process");
    ben->add_flag("--stream", stream);
    ben->add_option("--seed", seed);

    auto* inf = app.add_subcommand("info", "print resolved config and accounting");
    inf->add_option("--model", model)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (sep->parsed()) return cmd_separate(model, weights, in_wav, out_dir, stream, chunk_ms, seed);
        if (ver->parsed()) return cmd_verify(suite, seed, trials);
        if (met->parsed()) return cmd_metrics(est_dir, ref_dir, mix_dir, metric);
        if (ben->parsed()) return cmd_bench(model, weights, seconds, stream, seed);
        if (inf->parsed()) return cmd_info(model);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
