#pragma once

#include "tfacm/tensor.hpp"

#include <string>
#include <vector>

namespace tfacm {

enum class PitMetric { NegSnr, NegSiSnr };

// 10*log10(|ref|^2 / (|est-ref|^2 + eps)), relative eps guard, clamped +-60 dB.
double snr_db(const Tensor& est, const Tensor& ref);

// Zero-mean, scale-invariant SNR, clamped +-60 dB.
double si_snr_db(const Tensor& est, const Tensor& ref);

struct PitResult {
    double best_loss = 0.0;          // mean pairwise loss under the best assignment
    std::vector<int> perm;           // est index assigned to each ref slot
};

// Exhaustive minimum over all C! assignments; lexicographically smallest
// permutation wins ties. ests/refs: [C x L].
PitResult pit_resolve(const Tensor& ests, const Tensor& refs, PitMetric metric);

// metric(est, ref) - metric(mix, ref).
double improvement_db(const Tensor& est, const Tensor& ref, const Tensor& mix, PitMetric metric);

struct UttEval {
    std::string utt_id;
    double si_snr_i = 0.0;
    double sdr_i = 0.0;              // SNR-based improvement
    std::vector<int> perm;
};

struct EvalReport {
    std::vector<UttEval> utts;
    double mean_si_snr_i() const;
    double mean_sdr_i() const;
    std::string to_csv() const;      // utt_id, si_snr_i, sdr_i, perm
};

// Resolves the permutation with uPIT under `metric`, then scores both
// improvements against the mixture. ests/refs: [C x L], mix: [L].
UttEval evaluate_utterance(const std::string& utt_id, const Tensor& ests, const Tensor& refs,
                           const Tensor& mix, PitMetric metric = PitMetric::NegSiSnr);

}  // namespace tfacm
