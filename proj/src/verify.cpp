#include "tfacm/verify.hpp"

#include "tfacm/dsp.hpp"
#include "tfacm/metrics.hpp"
#include "tfacm/model.hpp"
#include "tfacm/separator.hpp"
#include "tfacm/streaming.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace tfacm {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0.0) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), f, a, b);
    return buf;
}

void append_part(const Tensor& part, std::vector<std::vector<float>>& acc) {
    const std::size_t C = part.dim(0), n = part.dim(1);
    if (acc.empty()) acc.resize(C);
    for (std::size_t c = 0; c < C; ++c) {
        acc[c].insert(acc[c].end(), part.data() + c * n, part.data() + c * n + n);
    }
}

double max_abs_dev(const std::vector<std::vector<float>>& a,
                   const std::vector<std::vector<float>>& b, std::size_t upto) {
    double dev = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c) {
        for (std::size_t s = 0; s < upto; ++s) {
            dev = std::max(dev, std::abs(static_cast<double>(a[c][s]) - b[c][s]));
        }
    }
    return dev;
}

struct Report {
    std::ostream& log;
    bool ok = true;
    void line(bool pass, const std::string& what) {
        log << (pass ? "[pass] " : "[FAIL] ") << what << "\n";
        ok = ok && pass;
    }
};

}  // namespace

Tensor random_signal(std::uint64_t seed, std::size_t len) {
    Tensor x({len});
    std::uint64_t s = seed;
    for (std::size_t i = 0; i < len; ++i) {
        x[i] = static_cast<float>(splitmix64(s) >> 40) * (1.0f / 16777216.0f) - 0.5f;
    }
    return x;
}

bool verify_causality(std::uint64_t seed, int trials, std::ostream& log) {
    Report rep{log};
    const auto t0 = Clock::now();
    const ModelConfig lcfg = ModelConfig::preset_large();
    const ModelConfig scfg = ModelConfig::preset_small();
    Separator sep_l(bind_weights(lcfg, init_weights(lcfg, seed ^ 0xA1)));
    Separator sep_s(bind_weights(scfg, init_weights(scfg, seed ^ 0xA2)));

    const std::size_t L = 16000;  // 2 s at 8 kHz
    const std::size_t latency = 56;
    double maxdev = 0.0;
    int passed = 0;
    std::uint64_t bad_seed = 0;
    for (int t = 0; t < trials; ++t) {
        const Separator& sep = (t % 2) ? sep_s : sep_l;
        const std::uint64_t ts = seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(t + 1);
        std::uint64_t rs = ts;
        const std::size_t n = 64 + splitmix64(rs) % (L - 64);  // shared prefix [0, n)

        Tensor a = random_signal(ts ^ 1, L);
        Tensor b = a;
        Tensor alt = random_signal(ts ^ 2, L);
        for (std::size_t i = n; i < L; ++i) b[i] = alt[i];

        // The prefix frames of both runs see identical samples, so the stream
        // state at the divergence point is shared; fork it instead of
        // recomputing the prefix.
        StreamSeparator sa(sep);
        std::vector<std::vector<float>> outa, outb;
        append_part(sa.push(a.data(), n), outa);
        StreamSeparator sb = sa;
        outb = outa;
        append_part(sa.push(a.data() + n, L - n), outa);
        append_part(sa.flush(L), outa);
        append_part(sb.push(b.data() + n, L - n), outb);
        append_part(sb.flush(L), outb);

        const double dev = max_abs_dev(outa, outb, n - latency);
        maxdev = std::max(maxdev, dev);
        if (dev <= 1e-5) {
            ++passed;
        } else if (!bad_seed) {
            bad_seed = ts;
        }
    }
    const double dt = seconds_since(t0);
    std::string msg = "causality: " + std::to_string(passed) + "/" + std::to_string(trials) +
                      " trials, max deviation before the 56-sample latency horizon " +
                      fmt("%.3g (tol 1e-5), %.1f s", maxdev, dt);
    if (passed != trials) msg += ", first failing seed " + std::to_string(bad_seed);
    rep.line(passed == trials, msg);

    // Negative control: with the attention mask removed the model must leak.
    ModelConfig nc = scfg;
    nc.sep.attn_mask_disabled = true;
    Separator nsep(bind_weights(nc, init_weights(nc, seed ^ 0xA2)));
    const std::size_t L2 = 4000, n2 = 2000;
    Tensor a2 = random_signal(seed ^ 3, L2);
    Tensor b2 = a2;
    Tensor alt2 = random_signal(seed ^ 4, L2);
    for (std::size_t i = n2; i < L2; ++i) b2[i] = alt2[i];
    Tensor oa = nsep.separate(a2), ob = nsep.separate(b2);
    double leak = 0.0;
    for (std::size_t c = 0; c < oa.dim(0); ++c) {
        for (std::size_t s = 0; s < n2 - latency; ++s) {
            leak = std::max(leak,
                            std::abs(static_cast<double>(oa[c * L2 + s]) - ob[c * L2 + s]));
        }
    }
    rep.line(leak > 1e-5,
             fmt("causality negative control: unmasked attention leaks %.3g (> 1e-5 expected)",
                 leak));
    return rep.ok;
}

bool verify_streaming(std::uint64_t seed, int trials, std::ostream& log) {
    Report rep{log};
    const auto t0 = Clock::now();
    const ModelConfig lcfg = ModelConfig::preset_large();
    const ModelConfig scfg = ModelConfig::preset_small();
    Separator sep_l(bind_weights(lcfg, init_weights(lcfg, seed ^ 0xB1)));
    Separator sep_s(bind_weights(scfg, init_weights(scfg, seed ^ 0xB2)));

    auto run_partition = [](const Separator& sep, const Tensor& x, std::uint64_t pseed) {
        StreamSeparator st(sep);
        std::vector<std::vector<float>> out;
        std::uint64_t rs = pseed;
        std::size_t pos = 0;
        const std::size_t len = x.numel();
        while (pos < len) {
            const std::size_t chunk = std::min<std::size_t>(1 + splitmix64(rs) % 4000, len - pos);
            append_part(st.push(x.data() + pos, chunk), out);
            pos += chunk;
        }
        append_part(st.flush(len), out);
        return out;
    };

    int passed = 0, chunk_passed = 0, chunk_trials = 0;
    double maxrel = 0.0, maxchunk = 0.0;
    std::uint64_t bad_seed = 0;
    for (int t = 0; t < trials; ++t) {
        const Separator& sep = (t % 2) ? sep_s : sep_l;
        const std::uint64_t ts = seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(t + 1);
        std::uint64_t rs = ts;
        const std::size_t len = 8000 + splitmix64(rs) % 24001;  // 1-4 s
        Tensor x = random_signal(ts ^ 1, len);

        Tensor off = sep.separate(x);  // [C x len]
        auto out1 = run_partition(sep, x, ts ^ 2);

        bool good = true;
        for (std::size_t c = 0; c < off.dim(0); ++c) {
            for (std::size_t s = 0; s < len; ++s) {
                const double o = off[c * len + s];
                const double d = std::abs(out1[c][s] - o);
                const double tol = 1e-5 + 1e-4 * std::abs(o);
                maxrel = std::max(maxrel, d / (1e-5 + std::abs(o)));
                if (d > tol) good = false;
            }
        }
        if (good) {
            ++passed;
        } else if (!bad_seed) {
            bad_seed = ts;
        }

        if (t % 5 == 0) {
            ++chunk_trials;
            auto out2 = run_partition(sep, x, ts ^ 5);
            const double dev = max_abs_dev(out1, out2, len);
            maxchunk = std::max(maxchunk, dev);
            if (dev <= 1e-6) ++chunk_passed;
        }
    }
    const double dt = seconds_since(t0);
    std::string msg = "streaming equivalence: " + std::to_string(passed) + "/" +
                      std::to_string(trials) +
                      fmt(" trials within 1e-4 rel / 1e-5 abs, worst ratio %.3g, %.1f s", maxrel,
                          dt);
    if (passed != trials) msg += ", first failing seed " + std::to_string(bad_seed);
    rep.line(passed == trials, msg);
    rep.line(chunk_passed == chunk_trials,
             "chunk invariance: " + std::to_string(chunk_passed) + "/" +
                 std::to_string(chunk_trials) +
                 fmt(" partitions agree, max deviation %.3g (tol 1e-6)", maxchunk));

    // Latency contract and emission arithmetic.
    {
        StreamSeparator st(sep_s);
        Tensor x = random_signal(seed ^ 7, 8000);
        Tensor head = st.push(x.data(), 63);
        const bool none = head.dim(1) == 0;
        st.push(x.data() + 63, 8000 - 63);
        Tensor tail = st.flush(8000);
        rep.line(none, "latency: 63 pushed samples emit nothing");
        rep.line(st.emitted() == 8000 && tail.dim(1) == 8000 - 7944,
                 "emission arithmetic: 8000 consumed -> 7944 before flush, 8000 after");
    }
    return rep.ok;
}

bool verify_dsp(std::uint64_t seed, int trials, std::ostream& log) {
    Report rep{log};
    StftConfig cfg;
    double maxdev = 0.0;
    int passed = 0;
    for (int t = 0; t < trials; ++t) {
        const std::uint64_t ts = seed + 131 * static_cast<std::uint64_t>(t + 1);
        std::uint64_t rs = ts;
        const std::size_t len = 64 + splitmix64(rs) % 3937;
        Tensor x = random_signal(ts, len);
        Tensor y = istft(stft(x, cfg), cfg, len);
        double dev = 0.0;
        for (std::size_t s = 1; s < len; ++s) {  // sample 0 has zero window weight
            dev = std::max(dev, std::abs(static_cast<double>(y[s]) - x[s]));
        }
        maxdev = std::max(maxdev, dev);
        if (dev <= 1e-6) ++passed;
    }
    rep.line(passed == trials,
             "stft/istft round trip: " + std::to_string(passed) + "/" + std::to_string(trials) +
                 fmt(" signals, max deviation %.3g (tol 1e-6)", maxdev));

    FrameTransform ft(cfg);
    const float base = ft.window_sq_sum(56, 1 << 20);
    double cdev = 0.0;
    for (std::int64_t s = 56; s < 4096; ++s) {
        cdev = std::max(cdev, std::abs(static_cast<double>(ft.window_sq_sum(s, 1 << 20)) - base));
    }
    rep.line(cdev <= 1e-6, fmt("hann overlap-add constancy: deviation %.3g (tol 1e-6)", cdev));
    return rep.ok;
}

bool verify_loss(std::uint64_t seed, int trials, std::ostream& log) {
    Report rep{log};

    {
        Tensor est({4}), ref({4});
        est[0] = 1.0f;
        ref[0] = 1.0f;
        ref[3] = 1.0f;
        const double v = snr_db(est, ref);
        rep.line(std::abs(v - 10.0 * std::log10(2.0)) <= 1e-6,
                 fmt("snr hand case: %.7f dB vs 3.0103 (tol 1e-6)", v));
        rep.line(snr_db(ref, ref) == 60.0, "snr perfect reconstruction clamps to +60 dB");
    }
    {
        Tensor ref = random_signal(seed ^ 11, 64);
        bool ok = true;
        for (float alpha : {0.5f, -2.0f, 3.0f}) {
            Tensor est({64});
            for (std::size_t i = 0; i < 64; ++i) est[i] = alpha * ref[i];
            ok = ok && si_snr_db(est, ref) == 60.0;
        }
        rep.line(ok, "si_snr scale invariance clamps to +60 dB for alpha in {0.5, -2, 3}");

        Tensor est = random_signal(seed ^ 12, 64);
        Tensor estc({64}), refc({64});
        for (std::size_t i = 0; i < 64; ++i) {
            estc[i] = est[i] + 0.25f;
            refc[i] = ref[i] + 0.25f;
        }
        const double d = std::abs(si_snr_db(est, ref) - si_snr_db(estc, refc));
        rep.line(d <= 1e-6, fmt("si_snr DC invariance: deviation %.3g", d));
    }

    // Exhaustive-permutation oracle for C in {2, 3}.
    for (int C : {2, 3}) {
        static const std::vector<std::vector<std::vector<int>>> perms_by_c = {
            {{0, 1}, {1, 0}},
            {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
        const auto& perms = perms_by_c[C - 2];
        int good = 0;
        for (int t = 0; t < trials; ++t) {
            const std::uint64_t ts = seed + 977 * static_cast<std::uint64_t>(t + 1) + C;
            const std::size_t Lc = 32;
            Tensor ests({static_cast<std::size_t>(C), Lc}), refs({static_cast<std::size_t>(C), Lc});
            Tensor e = random_signal(ts ^ 1, C * Lc), r = random_signal(ts ^ 2, C * Lc);
            std::copy(e.data(), e.data() + C * Lc, ests.data());
            std::copy(r.data(), r.data() + C * Lc, refs.data());

            double best = 1e300;
            std::vector<int> best_p;
            for (const auto& p : perms) {
                double total = 0.0;
                for (int j = 0; j < C; ++j) {
                    Tensor ev({Lc}), rv({Lc});
                    std::copy(ests.data() + p[j] * Lc, ests.data() + (p[j] + 1) * Lc, ev.data());
                    std::copy(refs.data() + j * Lc, refs.data() + (j + 1) * Lc, rv.data());
                    total += -si_snr_db(ev, rv);
                }
                const double mean = total / C;
                if (mean < best) {
                    best = mean;
                    best_p = p;
                }
            }
            const PitResult got = pit_resolve(ests, refs, PitMetric::NegSiSnr);
            if (got.best_loss == best && got.perm == best_p) ++good;
        }
        rep.line(good == trials, "pit_resolve C=" + std::to_string(C) + " matches the " +
                                     std::to_string(perms.size()) + "-permutation oracle exactly, " +
                                     std::to_string(good) + "/" + std::to_string(trials));
    }

    {
        // Swapped estimates resolve to the swap with identical loss.
        const std::size_t Lc = 48;
        Tensor refs({2, Lc}), ests({2, Lc});
        Tensor r = random_signal(seed ^ 21, 2 * Lc);
        std::copy(r.data(), r.data() + 2 * Lc, refs.data());
        std::copy(r.data() + Lc, r.data() + 2 * Lc, ests.data());
        std::copy(r.data(), r.data() + Lc, ests.data() + Lc);
        const PitResult got = pit_resolve(ests, refs, PitMetric::NegSiSnr);
        rep.line(got.perm == std::vector<int>{1, 0} && got.best_loss == -60.0,
                 "pit_resolve recovers a speaker swap");
    }
    {
        Tensor mix = random_signal(seed ^ 22, 64);
        Tensor ref = random_signal(seed ^ 23, 64);
        rep.line(improvement_db(mix, ref, mix, PitMetric::NegSiSnr) == 0.0,
                 "improvement of the unprocessed mixture is exactly 0 dB");
    }
    return rep.ok;
}

bool run_suite(const std::string& name, std::uint64_t seed, int trials, std::ostream& log) {
    if (name == "causality") return verify_causality(seed, trials, log);
    if (name == "streaming") return verify_streaming(seed, trials, log);
    if (name == "dsp") return verify_dsp(seed, trials, log);
    if (name == "loss") return verify_loss(seed, trials, log);
    throw std::invalid_argument("unknown suite '" + name +
                                "' (expected causality, streaming, dsp or loss)");
}

}  // namespace tfacm
