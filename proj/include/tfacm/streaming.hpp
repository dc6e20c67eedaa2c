#pragma once

#include "tfacm/separator.hpp"

#include <cstddef>
#include <vector>

namespace tfacm {

// Incremental execution of the separator. Frames are advanced through every
// block as soon as their samples arrive, using the same frame kernels as the
// offline path, so concatenated streaming output is bit-identical to offline
// regardless of how the input is chunked.
class StreamSeparator {
public:
    explicit StreamSeparator(const Separator& sep);

    // Feed samples; returns [C x n_emitted] newly finalized output.
    Tensor push(const float* samples, std::size_t n);
    Tensor push(const Tensor& samples);

    // Zero-pads to complete frames and returns the remaining tail so the
    // concatenated output has length total_len (== consumed()).
    Tensor flush(std::size_t total_len);

    std::size_t consumed() const { return consumed_; }
    std::size_t emitted() const { return emitted_; }
    std::size_t frames_done() const { return frames_done_; }

    // Bytes of mutable per-stream state (weights excluded).
    std::size_t state_bytes() const;

private:
    struct BlockState {
        Mat tl_h, tl_c;          // open-segment LSTM-T state
        Mat seg_init_h, seg_init_c;  // init for the next segment start
        Mat cmh_h, cmh_c, cmc_h, cmc_c;
        RowMat kcache, vcache;   // attention history, ascending time
        std::size_t attn_rows = 0;
        Mat gate_h1, gate_h2;    // gated-conv inputs at t-1, t-2
    };

    void process_frame(const float* frame_samples);
    void emit_samples(std::size_t count, std::size_t total_frames);
    void append_row(RowMat& cache, std::size_t rows, const Eigen::RowVectorXf& tok);
    Tensor take_output();

    const Separator& sep_;
    const SeparatorRt& rt_;

    std::vector<float> pending_;  // samples [hop * frames_done_, consumed_)
    Mat spec_h1_, spec_h2_, spec_cur_;
    std::vector<BlockState> blocks_;
    Mat dec_h1_, dec_h2_;
    std::vector<std::vector<float>> ola_;  // per speaker, win_len samples from hop*frames_done_

    std::size_t consumed_ = 0;
    std::size_t emitted_ = 0;
    std::size_t frames_done_ = 0;
    bool poisoned_ = false;
    bool flushed_ = false;

    // per-frame scratch
    Mat g_, tmp_, dec_out_;
    Mat gate_in_, car_y_;
    Eigen::RowVectorXf tok_, attn_out_;
    std::vector<float> re_, im_, frame_buf_;
    std::vector<std::vector<float>> out_spk_;  // staged emission per speaker
};

}  // namespace tfacm
