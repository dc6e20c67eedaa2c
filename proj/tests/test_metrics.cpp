#include "tfacm/metrics.hpp"

#include "helpers.hpp"
#include "tfacm/verify.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>
#include <stdexcept>

using namespace tfacm;
using namespace tfacm::test;

TEST_CASE("snr hand-computed value") {
    // ref energy 2, error energy 1 -> 10*log10(2) = 3.0103 dB.
    Tensor ref({2}, {1.0f, 1.0f});
    Tensor est({2}, {2.0f, 1.0f});
    CHECK(snr_db(est, ref) == doctest::Approx(10.0 * std::log10(2.0)).epsilon(1e-6));
}

TEST_CASE("snr clamps at +-60 dB") {
    Tensor ref({4}, {0.3f, -0.1f, 0.7f, 0.2f});
    CHECK(snr_db(ref, ref) == 60.0);
    Tensor far({4}, {1e6f, -1e6f, 1e6f, 1e6f});
    CHECK(snr_db(far, ref) == -60.0);
}

TEST_CASE("snr rejects an all-zero reference") {
    Tensor z = Tensor::zeros({8});
    Tensor est = random_signal(5, 8);
    CHECK_THROWS_AS(snr_db(est, z), std::invalid_argument);
    CHECK_THROWS_AS(si_snr_db(est, z), std::invalid_argument);
}

TEST_CASE("si_snr is scale invariant, snr is not") {
    Tensor ref = random_signal(10, 512);
    Tensor est = random_signal(11, 512);
    const double base = si_snr_db(est, ref);
    for (float a : {0.5f, -2.0f, 3.0f}) {
        Tensor scaled({512});
        for (std::size_t i = 0; i < 512; ++i) scaled[i] = a * est[i];
        CHECK(si_snr_db(scaled, ref) == doctest::Approx(base).epsilon(1e-5));
    }
    Tensor twice({512});
    for (std::size_t i = 0; i < 512; ++i) twice[i] = 2.0f * ref[i];
    CHECK(si_snr_db(twice, ref) == 60.0);  // colinear: clamped perfect score
    CHECK(snr_db(twice, ref) < 10.0);
}

TEST_CASE("si_snr ignores DC offsets") {
    Tensor ref = random_signal(12, 256);
    Tensor est = random_signal(13, 256);
    Tensor est_dc({256}), ref_dc({256});
    for (std::size_t i = 0; i < 256; ++i) {
        est_dc[i] = est[i] + 0.7f;
        ref_dc[i] = ref[i] - 0.3f;
    }
    CHECK(si_snr_db(est_dc, ref_dc) == doctest::Approx(si_snr_db(est, ref)).epsilon(1e-5));
}

TEST_CASE("pit_resolve picks the best of C! assignments (C=2)") {
    Tensor refs({2, 64});
    fill_uniform(refs, 21);
    // Estimates are the references swapped; identity would score terribly.
    Tensor ests({2, 64});
    for (std::size_t i = 0; i < 64; ++i) {
        ests[i] = refs[64 + i];
        ests[64 + i] = refs[i];
    }
    PitResult r = pit_resolve(ests, refs, PitMetric::NegSiSnr);
    CHECK(r.perm == std::vector<int>{1, 0});
    CHECK(r.best_loss == doctest::Approx(-60.0));
}

TEST_CASE("pit_resolve equals a hand-enumerated minimum (C=3)") {
    Tensor refs({3, 128}), ests({3, 128});
    fill_uniform(refs, 31);
    fill_uniform(ests, 32);
    PitResult r = pit_resolve(ests, refs, PitMetric::NegSnr);

    // Enumerate the 6 permutations by hand.
    const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    auto row = [&](const Tensor& t, int i) {
        Tensor out({128});
        for (std::size_t j = 0; j < 128; ++j) out[j] = t[std::size_t(i) * 128 + j];
        return out;
    };
    double best = 1e18;
    int best_idx = -1;
    for (int p = 0; p < 6; ++p) {
        double loss = 0.0;
        for (int c = 0; c < 3; ++c) loss += -snr_db(row(ests, perms[p][c]), row(refs, c));
        loss /= 3.0;
        if (loss < best) {
            best = loss;
            best_idx = p;
        }
    }
    CHECK(r.best_loss == doctest::Approx(best).epsilon(1e-9));
    CHECK(r.perm == std::vector<int>(perms[best_idx], perms[best_idx] + 3));
}

TEST_CASE("pit tie resolves to the lexicographically first permutation") {
    // Identical estimate rows: every assignment has the same loss.
    Tensor refs({2, 32});
    fill_uniform(refs, 41);
    Tensor ests({2, 32});
    for (std::size_t i = 0; i < 32; ++i) {
        ests[i] = 0.25f;
        ests[32 + i] = 0.25f;
    }
    PitResult r = pit_resolve(ests, refs, PitMetric::NegSnr);
    CHECK(r.perm == std::vector<int>{0, 1});
}

TEST_CASE("improvement of the mixture over itself is zero") {
    Tensor ref = random_signal(51, 300);
    Tensor mix({300});
    for (std::size_t i = 0; i < 300; ++i) mix[i] = ref[i] + 0.1f * float(std::sin(0.01 * i));
    CHECK(improvement_db(mix, ref, mix, PitMetric::NegSiSnr) == 0.0);
    CHECK(improvement_db(mix, ref, mix, PitMetric::NegSnr) == 0.0);
}

TEST_CASE("evaluate_utterance resolves the swap and reports improvements") {
    const std::size_t L = 400;
    Tensor s1 = random_signal(61, L), s2 = random_signal(62, L);
    Tensor mix({L}), refs({2, L}), ests({2, L});
    for (std::size_t i = 0; i < L; ++i) {
        mix[i] = s1[i] + s2[i];
        refs[i] = s1[i];
        refs[L + i] = s2[i];
        // Near-perfect estimates, swapped.
        ests[i] = s2[i] + 1e-4f;
        ests[L + i] = s1[i] - 1e-4f;
    }
    UttEval e = evaluate_utterance("utt7", ests, refs, mix);
    CHECK(e.perm == std::vector<int>{1, 0});
    CHECK(e.si_snr_i > 10.0);
    CHECK(e.sdr_i > 10.0);

    EvalReport rep;
    rep.utts.push_back(e);
    const std::string csv = rep.to_csv();
    CHECK(csv.find("utt_id,si_snr_i,sdr_i,perm") == 0);
    CHECK(csv.find("utt7,") != std::string::npos);
    CHECK(csv.find("1-0") != std::string::npos);
    CHECK(rep.mean_si_snr_i() == doctest::Approx(e.si_snr_i));
}
