#include "tfacm/model.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

using namespace tfacm;
using namespace tfacm::test;

namespace {

ModelConfig tiny_cfg() {
    ModelConfig cfg = ModelConfig::preset_small();
    cfg.preset = "custom";
    cfg.sep.channels = 8;
    cfg.sep.blocks = 2;
    cfg.sep.hidden = 6;
    cfg.sep.heads = 1;
    cfg.sep.attn_channels = 2;
    return cfg;
}

struct TmpFile {
    std::string path;
    explicit TmpFile(std::string p) : path(std::move(p)) {}
    ~TmpFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("presets bind the published hyperparameters") {
    ModelConfig lg = ModelConfig::preset_large();
    CHECK(lg.sep.channels == 128);
    CHECK(lg.sep.blocks == 3);
    CHECK(lg.sep.hidden == 64);
    CHECK(lg.sep.heads == 2);
    CHECK(lg.stft.sample_rate == 8000);
    CHECK(lg.freq_bins() == 33);
    ModelConfig sm = ModelConfig::preset_small();
    CHECK(sm.sep.channels == 64);
    CHECK(sm.sep.blocks == 2);
    CHECK(sm.sep.heads == 4);
    CHECK_THROWS(ModelConfig::from_preset_name("medium"));
}

TEST_CASE("config validation rejects w2 != s2") {
    ModelConfig cfg = tiny_cfg();
    cfg.sep.w2 = 4;
    cfg.sep.s2 = 2;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("config text round trip; unknown keys rejected") {
    ModelConfig cfg = tiny_cfg();
    TmpFile f("tiny_cfg_tmp.txt");
    {
        std::ofstream os(f.path);
        os << cfg.to_text();
    }
    ModelConfig back = ModelConfig::from_file(f.path);
    CHECK(back.to_text() == cfg.to_text());

    TmpFile g("bad_cfg_tmp.txt");
    {
        std::ofstream os(g.path);
        os << cfg.to_text() << "bogus_key=1\n";
    }
    CHECK_THROWS(ModelConfig::from_file(g.path));
}

TEST_CASE("manifest totals are consistent") {
    for (const char* name : {"large", "small"}) {
        ModelConfig cfg = ModelConfig::from_preset_name(name);
        auto manifest = weight_manifest(cfg);
        std::size_t total = 0;
        for (const auto& e : manifest) total += e.numel();
        CHECK(total == count_params(cfg));
        WeightContainer w = init_weights(cfg, 1);
        CHECK(w.payload.size() == total);
    }
}

TEST_CASE("preset parameter counts sit in the published bands") {
    const std::size_t lg = count_params(ModelConfig::preset_large());
    const std::size_t sm = count_params(ModelConfig::preset_small());
    CHECK(lg >= 700000);
    CHECK(lg <= 1500000);
    CHECK(sm >= 350000);
    CHECK(sm <= 750000);
}

TEST_CASE("init is deterministic and seed-sensitive") {
    ModelConfig cfg = tiny_cfg();
    WeightContainer a = init_weights(cfg, 42);
    WeightContainer b = init_weights(cfg, 42);
    REQUIRE(a.payload.size() == b.payload.size());
    bool same = true;
    for (std::size_t i = 0; i < a.payload.size(); ++i)
        if (a.payload[i] != b.payload[i]) same = false;
    CHECK(same);

    WeightContainer c = init_weights(cfg, 43);
    bool differs = false;
    for (std::size_t i = 0; i < a.payload.size(); ++i)
        if (a.payload[i] != c.payload[i]) differs = true;
    CHECK(differs);
}

TEST_CASE("init respects fan-in bound, mean near zero, forget bias +1") {
    ModelConfig cfg = ModelConfig::preset_small();
    WeightContainer w = init_weights(cfg, 7);
    std::size_t off = 0;
    for (const auto& e : w.manifest) {
        const float a = std::sqrt(1.0f / float(e.fan_in));
        double sum = 0.0;
        std::size_t big = 0;
        for (std::size_t i = 0; i < e.numel(); ++i) {
            float v = w.payload[off + i];
            if (e.lstm_bias) {
                // i,f,g,o rows: forget-gate quarter shifted by +1.
                const std::size_t H = e.shape[0] / 4;
                if (i >= H && i < 2 * H) v -= 1.0f;
            }
            CHECK(std::abs(v) <= a);
            sum += v;
            ++big;
        }
        if (big >= 1000) {
            // mean of uniform(-a, a): sigma_mean = a / sqrt(3 n)
            const double sigma = a / std::sqrt(3.0 * double(big));
            CHECK(std::abs(sum / double(big)) < 3.0 * sigma);
        }
        off += e.numel();
    }
}

TEST_CASE("weight save/load round trip is byte identical") {
    ModelConfig cfg = tiny_cfg();
    WeightContainer w = init_weights(cfg, 99);
    TmpFile f("weights_tmp.bin");
    save_weights(f.path, w);
    WeightContainer r = load_weights(f.path);
    REQUIRE(r.payload.size() == w.payload.size());
    for (std::size_t i = 0; i < w.payload.size(); ++i) CHECK(r.payload[i] == w.payload[i]);
    REQUIRE(r.manifest.size() == w.manifest.size());
    for (std::size_t i = 0; i < w.manifest.size(); ++i) {
        CHECK(r.manifest[i].name == w.manifest[i].name);
        CHECK(r.manifest[i].shape == w.manifest[i].shape);
    }
}

TEST_CASE("corrupted magic and truncated payload rejected") {
    ModelConfig cfg = tiny_cfg();
    WeightContainer w = init_weights(cfg, 5);
    TmpFile f("weights_bad_tmp.bin");
    save_weights(f.path, w);
    {
        std::fstream fs(f.path, std::ios::in | std::ios::out | std::ios::binary);
        fs.write("XXXX", 4);
    }
    CHECK_THROWS(load_weights(f.path));

    save_weights(f.path, w);
    {
        std::ifstream in(f.path, std::ios::binary);
        std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        in.close();
        std::ofstream out(f.path, std::ios::binary | std::ios::trunc);
        out.write(all.data(), std::streamsize(all.size() - 64));
    }
    CHECK_THROWS(load_weights(f.path));
}

TEST_CASE("bind_weights validates shapes against the config") {
    ModelConfig cfg = tiny_cfg();
    WeightContainer w = init_weights(cfg, 3);
    Model m = bind_weights(cfg, w);
    CHECK(m.tensors.size() == w.manifest.size());
    CHECK_THROWS(m.get("no_such_tensor"));

    ModelConfig other = tiny_cfg();
    other.sep.channels = 12;
    CHECK_THROWS(bind_weights(other, w));
}

TEST_CASE("mac estimate scales with blocks and duration") {
    ModelConfig cfg = tiny_cfg();
    CHECK(estimate_macs(cfg, 0.0) == 0.0);
    const double m2 = estimate_macs(cfg, 2.0);
    CHECK(m2 > 0.0);

    // Doubling B roughly doubles the block-dominated total.
    ModelConfig dbl = cfg;
    dbl.sep.blocks = 4;
    const double r = estimate_macs(dbl, 2.0) / m2;
    CHECK(r > 1.6);
    CHECK(r < 2.4);

    // Large preset within 2x of the published 36.5 G/s (per second of audio).
    const double g_per_s = estimate_macs(ModelConfig::preset_large(), 1.0) / 1e9;
    CHECK(g_per_s > 36.5 / 2.0);
    CHECK(g_per_s < 36.5 * 2.0);
}

TEST_CASE("splitmix64 reference values") {
    // Known outputs for seed 1234567 from the reference implementation.
    std::uint64_t s = 1234567;
    const std::uint64_t a = splitmix64(s);
    const std::uint64_t b = splitmix64(s);
    CHECK(a == 0x599ed017fb08fc85ULL);
    CHECK(b != a);
    std::uint64_t s2 = 1234567;
    CHECK(splitmix64(s2) == a);
}
