#pragma once

#include "tfacm/dsp.hpp"
#include "tfacm/model.hpp"
#include "tfacm/nn.hpp"

#include <memory>
#include <vector>

namespace tfacm {

// Per-segment LSTM-T final states for one block: h[l], c[l] are [H x F].
struct CacheState {
    std::vector<Mat> h, c;
    static CacheState zeros(int hidden, int freq_bins, std::size_t segments);
    std::size_t segments() const { return h.size(); }
};

// One block's weights in runtime (Eigen) form.
struct BlockKernels {
    Vec f_ln_g, f_ln_b;          // W1*N
    LstmKernel f_lstm;
    std::vector<Mat> f_deconv;   // tap w: N x H
    Vec f_deconv_b;

    LstmKernel t_lstm;
    std::vector<Mat> t_out;      // tap w (W2 total): N x H
    Vec t_out_b;

    bool has_cm = false;
    LstmKernel cm_h, cm_c;

    Mat q_w, k_w, v_w;           // E x N
    Vec q_b, k_b, v_b;
    Vec q_prelu, k_prelu, v_prelu;
    Vec q_ln_g, q_ln_b, k_ln_g, k_ln_b, v_ln_g, v_ln_b;
    Mat attn_wo;                 // EF x EF
    Vec attn_bo;
    Mat back_w;                  // N x E
    Vec back_b;

    Mat gate_dw_a, gate_dw_b;    // N x 3
    Vec gate_dwb_a, gate_dwb_b;
    Mat gate_pw_a, gate_pw_b, gate_out_w;  // N x N
    Vec gate_pwb_a, gate_pwb_b, gate_out_b;
};

struct SeparatorRt {
    ModelConfig cfg;
    FrameTransform ft;
    Tensor enc_w, enc_b;
    Vec enc_ln_g, enc_ln_b;
    std::vector<BlockKernels> blocks;
    Tensor dec_w, dec_b;

    int freq_pad = 0;  // right padding of F for the frequency unfold
    int lf = 0;        // frequency segment count L_F

    explicit SeparatorRt(const Model& m);
};

// --- frame kernels (shared with the streaming engine) ----------------------

// LN over rows, statistics per column.
void ln_cols(Mat& x, const Vec& gamma, const Vec& beta, float eps = 1e-5f);

// spec frames t-2, t-1, t (2 x F each; null means zeros) -> LN'd features N x F.
void encode_frame(const SeparatorRt& rt, const Mat* prev2, const Mat* prev1, const Mat& cur,
                  Mat& out);

// F-Local for a single time frame, residual included.
void flocal_frame(const SeparatorRt& rt, const BlockKernels& blk, const Mat& x, Mat& out);

// One LSTM-T step; resets state from seg_init at segment starts. Residual included.
void tlocal_frame(const BlockKernels& blk, const Mat& x, int seg_pos, const Mat& seg_init_h,
                  const Mat& seg_init_c, Mat& h, Mat& c, Mat& out);

// Advance the cache-memory LSTMs by one segment.
void cm_step(const BlockKernels& blk, const Mat& h_seg, const Mat& c_seg, Mat& cmh_h, Mat& cmh_c,
             Mat& cmc_h, Mat& cmc_c);

// Q/K/V token for one frame: conv1x1 + PReLU + LN, flattened to E*F.
void qkv_frame(const SeparatorRt& rt, const Mat& proj_w, const Vec& proj_b, const Vec& alpha,
               const Vec& ln_g, const Vec& ln_b, const Mat& x, Eigen::RowVectorXf& token);

// Attention token (E*F) back to channel map plus gated convolution; the two
// history frames are the gated-conv inputs at t-1 and t-2.
void car_post_frame(const SeparatorRt& rt, const BlockKernels& blk,
                    const Eigen::RowVectorXf& attn_token, const Mat& gate_hist1,
                    const Mat& gate_hist2, Mat& gate_in, Mat& out);

// Raw decode convolution (activation applied): G frames t-2, t-1, t -> 2C x F.
void decode_frame(const SeparatorRt& rt, const Mat* prev2, const Mat* prev1, const Mat& cur,
                  Mat& out);

// --- offline separator -----------------------------------------------------

class Separator {
public:
    explicit Separator(Model model);

    const ModelConfig& cfg() const { return rt_.cfg; }
    const SeparatorRt& rt() const { return rt_; }
    const Model& model() const { return model_; }

    std::size_t segment_count(std::size_t frames) const;

    Tensor encode(const Tensor& mix) const;                    // [N x F x T]
    Tensor f_local(const Tensor& g, int block) const;          // shape-preserving
    struct TLocalOut {
        Tensor g;
        CacheState state;  // per-segment LSTM-T finals (H_i, C_i)
    };
    TLocalOut t_local(const Tensor& g, const CacheState& cm_in, int block) const;
    CacheState cache_memory(const CacheState& s, int block) const;
    static CacheState misalign(const CacheState& s);
    Tensor car(const Tensor& g, int block) const;
    Tensor decode(const Tensor& g, std::size_t out_len) const;  // [C x out_len]

    Tensor separate(const Tensor& mix) const;                   // [C x L]

private:
    Model model_;
    SeparatorRt rt_;
};

Mat frame_of(const Tensor& g, std::size_t t);
void set_frame(Tensor& g, std::size_t t, const Mat& m);

}  // namespace tfacm
