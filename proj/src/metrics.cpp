#include "tfacm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace tfacm {

namespace {

constexpr double kClampDb = 60.0;
constexpr double kEpsRel = 1e-8;

double clamp_db(double v) { return std::min(kClampDb, std::max(-kClampDb, v)); }

double snr_core(const float* est, const float* ref, std::size_t n) {
    double ref2 = 0.0, err2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = ref[i];
        const double d = static_cast<double>(est[i]) - r;
        ref2 += r * r;
        err2 += d * d;
    }
    if (ref2 == 0.0) throw std::invalid_argument("snr_db: all-zero reference");
    return clamp_db(10.0 * std::log10(ref2 / (err2 + kEpsRel * ref2)));
}

double si_snr_core(const float* est, const float* ref, std::size_t n) {
    double em = 0.0, rm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        em += est[i];
        rm += ref[i];
    }
    em /= static_cast<double>(n);
    rm /= static_cast<double>(n);

    double dot = 0.0, ref2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = est[i] - em;
        const double r = ref[i] - rm;
        dot += e * r;
        ref2 += r * r;
    }
    if (ref2 == 0.0) throw std::invalid_argument("si_snr_db: all-zero reference");
    const double a = dot / ref2;
    double tgt2 = 0.0, err2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = est[i] - em;
        const double t = a * (ref[i] - rm);
        tgt2 += t * t;
        const double d = e - t;
        err2 += d * d;
    }
    return clamp_db(10.0 * std::log10(tgt2 / (err2 + kEpsRel * tgt2)));
}

void check_same_1d(const Tensor& est, const Tensor& ref, const char* who) {
    if (est.numel() != ref.numel() || est.numel() == 0) {
        throw std::invalid_argument(std::string(who) + ": length mismatch (" +
                                    std::to_string(est.numel()) + " vs " +
                                    std::to_string(ref.numel()) + ")");
    }
}

double metric_of(const float* est, const float* ref, std::size_t n, PitMetric m) {
    return m == PitMetric::NegSnr ? snr_core(est, ref, n) : si_snr_core(est, ref, n);
}

}  // namespace

double snr_db(const Tensor& est, const Tensor& ref) {
    check_same_1d(est, ref, "snr_db");
    return snr_core(est.data(), ref.data(), est.numel());
}

double si_snr_db(const Tensor& est, const Tensor& ref) {
    check_same_1d(est, ref, "si_snr_db");
    return si_snr_core(est.data(), ref.data(), est.numel());
}

PitResult pit_resolve(const Tensor& ests, const Tensor& refs, PitMetric metric) {
    if (ests.rank() != 2 || refs.rank() != 2 || ests.dim(0) != refs.dim(0) ||
        ests.dim(1) != refs.dim(1)) {
        throw std::invalid_argument("pit_resolve: ests " + shape_str(ests.shape()) +
                                    " vs refs " + shape_str(refs.shape()));
    }
    const std::size_t C = ests.dim(0);
    const std::size_t L = ests.dim(1);
    if (C > 8) throw std::invalid_argument("pit_resolve: more than 8 speakers");

    // Pairwise losses: loss[i][j] = -metric(est i, ref j).
    std::vector<double> loss(C * C);
    for (std::size_t i = 0; i < C; ++i) {
        for (std::size_t j = 0; j < C; ++j) {
            loss[i * C + j] = -metric_of(ests.data() + i * L, refs.data() + j * L, L, metric);
        }
    }

    std::vector<int> perm(C);
    std::iota(perm.begin(), perm.end(), 0);
    PitResult best;
    best.best_loss = std::numeric_limits<double>::infinity();
    std::vector<int> p = perm;
    do {
        double total = 0.0;
        for (std::size_t j = 0; j < C; ++j) total += loss[static_cast<std::size_t>(p[j]) * C + j];
        const double mean = total / static_cast<double>(C);
        if (mean < best.best_loss) {  // strict: lexicographically first wins ties
            best.best_loss = mean;
            best.perm = p;
        }
    } while (std::next_permutation(p.begin(), p.end()));
    return best;
}

double improvement_db(const Tensor& est, const Tensor& ref, const Tensor& mix, PitMetric metric) {
    check_same_1d(est, ref, "improvement_db");
    check_same_1d(mix, ref, "improvement_db");
    const std::size_t n = ref.numel();
    return metric_of(est.data(), ref.data(), n, metric) -
           metric_of(mix.data(), ref.data(), n, metric);
}

UttEval evaluate_utterance(const std::string& utt_id, const Tensor& ests, const Tensor& refs,
                           const Tensor& mix, PitMetric metric) {
    PitResult pit = pit_resolve(ests, refs, metric);
    const std::size_t C = refs.dim(0);
    const std::size_t L = refs.dim(1);
    if (mix.numel() != L) throw std::invalid_argument("evaluate_utterance: mixture length mismatch");

    UttEval ev;
    ev.utt_id = utt_id;
    ev.perm = pit.perm;
    for (std::size_t j = 0; j < C; ++j) {
        const float* est = ests.data() + static_cast<std::size_t>(pit.perm[j]) * L;
        const float* ref = refs.data() + j * L;
        ev.si_snr_i += si_snr_core(est, ref, L) - si_snr_core(mix.data(), ref, L);
        ev.sdr_i += snr_core(est, ref, L) - snr_core(mix.data(), ref, L);
    }
    ev.si_snr_i /= static_cast<double>(C);
    ev.sdr_i /= static_cast<double>(C);
    return ev;
}

double EvalReport::mean_si_snr_i() const {
    double s = 0.0;
    for (const auto& u : utts) s += u.si_snr_i;
    return utts.empty() ? 0.0 : s / static_cast<double>(utts.size());
}

double EvalReport::mean_sdr_i() const {
    double s = 0.0;
    for (const auto& u : utts) s += u.sdr_i;
    return utts.empty() ? 0.0 : s / static_cast<double>(utts.size());
}

std::string EvalReport::to_csv() const {
    std::string out = "utt_id,si_snr_i,sdr_i,perm\n";
    char buf[64];
    for (const auto& u : utts) {
        out += u.utt_id;
        std::snprintf(buf, sizeof(buf), ",%.6f,%.6f,", u.si_snr_i, u.sdr_i);
        out += buf;
        for (std::size_t i = 0; i < u.perm.size(); ++i) {
            if (i) out += '-';
            out += std::to_string(u.perm[i]);
        }
        out += '\n';
    }
    return out;
}

}  // namespace tfacm
