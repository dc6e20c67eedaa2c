#include "tfacm/streaming.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace tfacm {

StreamSeparator::StreamSeparator(const Separator& sep) : sep_(sep), rt_(sep.rt()) {
    if (rt_.cfg.sep.attn_mask_disabled) {
        throw std::invalid_argument("streaming requires the causal attention mask");
    }
    const int F = rt_.cfg.freq_bins();
    const int N = rt_.cfg.sep.channels;
    const int H = rt_.cfg.sep.hidden;
    const int E = rt_.cfg.sep.attn_channels;
    const Eigen::Index EF = static_cast<Eigen::Index>(E) * F;

    spec_h1_ = spec_h2_ = spec_cur_ = Mat::Zero(2, F);
    for (const BlockKernels& blk : rt_.blocks) {
        BlockState bs;
        bs.tl_h = bs.tl_c = Mat::Zero(H, F);
        bs.seg_init_h = bs.seg_init_c = Mat::Zero(H, F);
        if (blk.has_cm) {
            bs.cmh_h = bs.cmh_c = Mat::Zero(H, F);
            bs.cmc_h = bs.cmc_c = Mat::Zero(H, F);
        }
        bs.kcache = RowMat(64, EF);
        bs.vcache = RowMat(64, EF);
        bs.gate_h1 = bs.gate_h2 = Mat::Zero(N, F);
        blocks_.push_back(std::move(bs));
    }
    dec_h1_ = dec_h2_ = Mat::Zero(N, F);
    ola_.assign(rt_.cfg.sep.speakers, std::vector<float>(rt_.ft.win_len(), 0.0f));
    out_spk_.resize(rt_.cfg.sep.speakers);

    re_.resize(F);
    im_.resize(F);
    frame_buf_.resize(rt_.ft.win_len());
    tok_.resize(EF);
    attn_out_.resize(EF);
}

void StreamSeparator::append_row(RowMat& cache, std::size_t rows, const Eigen::RowVectorXf& tok) {
    const std::size_t cap = rt_.cfg.sep.max_attn_frames;
    if (cap && rows == cap) {
        std::memmove(cache.data(), cache.data() + cache.cols(),
                     static_cast<std::size_t>(cap - 1) * cache.cols() * sizeof(float));
        cache.row(cap - 1) = tok;
        return;
    }
    if (static_cast<Eigen::Index>(rows) == cache.rows()) {
        cache.conservativeResize(cache.rows() * 2, cache.cols());
    }
    cache.row(rows) = tok;
}

void StreamSeparator::process_frame(const float* frame_samples) {
    const int F = rt_.cfg.freq_bins();
    const int W2 = rt_.cfg.sep.w2;
    const int C = rt_.cfg.sep.speakers;
    const std::size_t cap = rt_.cfg.sep.max_attn_frames;
    const Eigen::Index EF = tok_.size();
    AttnSpec aspec{static_cast<int>(EF), rt_.cfg.sep.heads};

    rt_.ft.forward(frame_samples, re_.data(), im_.data());
    for (int f = 0; f < F; ++f) {
        spec_cur_(0, f) = re_[f];
        spec_cur_(1, f) = im_[f];
    }
    encode_frame(rt_, frames_done_ >= 2 ? &spec_h2_ : nullptr,
                 frames_done_ >= 1 ? &spec_h1_ : nullptr, spec_cur_, g_);
    spec_h2_.swap(spec_h1_);
    spec_h1_ = spec_cur_;

    const int seg_pos = static_cast<int>(frames_done_ % W2);
    for (std::size_t i = 0; i < rt_.blocks.size(); ++i) {
        const BlockKernels& blk = rt_.blocks[i];
        BlockState& bs = blocks_[i];

        flocal_frame(rt_, blk, g_, tmp_);
        g_.swap(tmp_);
        tlocal_frame(blk, g_, seg_pos, bs.seg_init_h, bs.seg_init_c, bs.tl_h, bs.tl_c, tmp_);
        g_.swap(tmp_);
        if (blk.has_cm && seg_pos == W2 - 1) {
            // Segment complete: encode it now so the misaligned state seeds the
            // next block's next segment.
            cm_step(blk, bs.tl_h, bs.tl_c, bs.cmh_h, bs.cmh_c, bs.cmc_h, bs.cmc_c);
            blocks_[i + 1].seg_init_h = bs.cmh_h;
            blocks_[i + 1].seg_init_c = bs.cmc_h;
        }

        qkv_frame(rt_, blk.k_w, blk.k_b, blk.k_prelu, blk.k_ln_g, blk.k_ln_b, g_, tok_);
        append_row(bs.kcache, bs.attn_rows, tok_);
        qkv_frame(rt_, blk.v_w, blk.v_b, blk.v_prelu, blk.v_ln_g, blk.v_ln_b, g_, tok_);
        append_row(bs.vcache, bs.attn_rows, tok_);
        bs.attn_rows = cap ? std::min(bs.attn_rows + 1, cap) : bs.attn_rows + 1;

        qkv_frame(rt_, blk.q_w, blk.q_b, blk.q_prelu, blk.q_ln_g, blk.q_ln_b, g_, tok_);
        const Eigen::Index rows = static_cast<Eigen::Index>(bs.attn_rows);
        attn_row(bs.kcache.topRows(rows), bs.vcache.topRows(rows), tok_, aspec, blk.attn_wo,
                 blk.attn_bo, attn_out_);
        car_post_frame(rt_, blk, attn_out_, bs.gate_h1, bs.gate_h2, gate_in_, car_y_);
        bs.gate_h2.swap(bs.gate_h1);
        bs.gate_h1 = gate_in_;
        g_ += car_y_;
    }

    decode_frame(rt_, frames_done_ >= 2 ? &dec_h2_ : nullptr,
                 frames_done_ >= 1 ? &dec_h1_ : nullptr, g_, dec_out_);
    dec_h2_.swap(dec_h1_);
    dec_h1_ = g_;
    if (!dec_out_.allFinite()) {
        throw std::runtime_error("non-finite value detected in streaming frame " +
                                 std::to_string(frames_done_));
    }

    const int win = rt_.ft.win_len();
    for (int c = 0; c < C; ++c) {
        for (int f = 0; f < F; ++f) {
            re_[f] = dec_out_(2 * c, f);
            im_[f] = dec_out_(2 * c + 1, f);
        }
        rt_.ft.inverse(re_.data(), im_.data(), frame_buf_.data());
        float* acc = ola_[c].data();
        for (int k = 0; k < win; ++k) acc[k] += rt_.ft.window(k) * frame_buf_[k];
    }
    ++frames_done_;
}

// Emit `count` samples (ola_[.][0] is sample hop*(frames_done_-1)), then slide
// the overlap-add buffers forward one hop.
void StreamSeparator::emit_samples(std::size_t count, std::size_t total_frames) {
    const int hop = rt_.ft.hop();
    const int win = rt_.ft.win_len();
    const std::size_t base = static_cast<std::size_t>(hop) * (frames_done_ - 1);
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t s = emitted_;
        const float wsum = rt_.ft.window_sq_sum(static_cast<std::int64_t>(s),
                                                static_cast<std::int64_t>(total_frames));
        for (std::size_t c = 0; c < ola_.size(); ++c) {
            const float v = ola_[c][s - base];
            out_spk_[c].push_back(wsum > 1e-12f ? v / wsum : 0.0f);
        }
        ++emitted_;
    }
    for (std::size_t c = 0; c < ola_.size(); ++c) {
        float* a = ola_[c].data();
        std::memmove(a, a + hop, static_cast<std::size_t>(win - hop) * sizeof(float));
        std::fill(a + win - hop, a + win, 0.0f);
    }
}

Tensor StreamSeparator::take_output() {
    const std::size_t C = out_spk_.size();
    const std::size_t n = out_spk_.empty() ? 0 : out_spk_[0].size();
    Tensor out({C, n});
    for (std::size_t c = 0; c < C; ++c) {
        std::copy(out_spk_[c].begin(), out_spk_[c].end(), out.data() + c * n);
        out_spk_[c].clear();
    }
    return out;
}

Tensor StreamSeparator::push(const float* samples, std::size_t n) {
    if (poisoned_) throw std::runtime_error("stream state poisoned by an earlier error");
    if (flushed_) throw std::runtime_error("push after flush");
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(samples[i])) {
            poisoned_ = true;
            throw std::invalid_argument("push: non-finite input sample at offset " +
                                        std::to_string(consumed_ + i));
        }
    }
    poisoned_ = true;  // cleared on success
    pending_.insert(pending_.end(), samples, samples + n);
    consumed_ += n;

    const std::size_t win = rt_.ft.win_len();
    const std::size_t hop = rt_.ft.hop();
    std::size_t pos = 0;
    while (pending_.size() - pos >= win) {
        process_frame(pending_.data() + pos);
        emit_samples(hop, frames_done_);
        pos += hop;
    }
    pending_.erase(pending_.begin(), pending_.begin() + pos);
    poisoned_ = false;
    return take_output();
}

Tensor StreamSeparator::push(const Tensor& samples) {
    if (samples.rank() != 1) throw std::invalid_argument("push: rank-1 samples required");
    return push(samples.data(), samples.numel());
}

Tensor StreamSeparator::flush(std::size_t total_len) {
    if (poisoned_) throw std::runtime_error("stream state poisoned by an earlier error");
    if (flushed_) return Tensor({ola_.size(), 0});
    if (total_len != consumed_) {
        throw std::invalid_argument("flush: total_len " + std::to_string(total_len) +
                                    " != consumed " + std::to_string(consumed_));
    }
    const std::size_t T = stft_frame_count(consumed_, rt_.cfg.stft);
    const std::size_t hop = rt_.ft.hop();
    const std::size_t win = rt_.ft.win_len();
    const std::size_t base = hop * frames_done_;

    poisoned_ = true;
    pending_.resize(hop * (T - 1) + win - base, 0.0f);
    while (frames_done_ < T) {
        process_frame(pending_.data() + hop * frames_done_ - base);
        emit_samples(std::min(hop, total_len - emitted_), T);
    }
    // Overlap-add tail beyond the last complete hop.
    for (std::size_t s = emitted_; s < total_len; ++s) {
        const float wsum =
            rt_.ft.window_sq_sum(static_cast<std::int64_t>(s), static_cast<std::int64_t>(T));
        for (std::size_t c = 0; c < ola_.size(); ++c) {
            const float v = ola_[c][s - hop * frames_done_];
            out_spk_[c].push_back(wsum > 1e-12f ? v / wsum : 0.0f);
        }
    }
    emitted_ = total_len;
    pending_.clear();
    flushed_ = true;
    poisoned_ = false;
    return take_output();
}

std::size_t StreamSeparator::state_bytes() const {
    auto mat_f = [](const Mat& m) { return static_cast<std::size_t>(m.size()); };
    std::size_t floats = pending_.size();
    floats += mat_f(spec_h1_) + mat_f(spec_h2_);
    for (const BlockState& bs : blocks_) {
        floats += mat_f(bs.tl_h) + mat_f(bs.tl_c) + mat_f(bs.seg_init_h) + mat_f(bs.seg_init_c);
        floats += mat_f(bs.cmh_h) + mat_f(bs.cmh_c) + mat_f(bs.cmc_h) + mat_f(bs.cmc_c);
        floats += 2 * bs.attn_rows * static_cast<std::size_t>(bs.kcache.cols());
        floats += mat_f(bs.gate_h1) + mat_f(bs.gate_h2);
    }
    floats += mat_f(dec_h1_) + mat_f(dec_h2_);
    for (const auto& o : ola_) floats += o.size();
    return floats * sizeof(float);
}

}  // namespace tfacm
