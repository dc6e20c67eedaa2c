#pragma once

#include "tfacm/tensor.hpp"

#include <Eigen/Dense>

#include <cstddef>

namespace tfacm {

using Mat = Eigen::MatrixXf;
using Vec = Eigen::VectorXf;
using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvSpec {
    int in_ch = 1;
    int out_ch = 1;
    int k_time = 1;
    int k_freq = 1;   // ignored by the 1D ops
    int stride = 1;   // deconv only; conv ops are stride 1 along time
};

struct LstmParams {
    // Gate order along rows: i, f, g, o (4H rows total).
    Tensor w_ih;  // [4H x input]
    Tensor w_hh;  // [4H x H]
    Tensor bias;  // [4H]
    int input_size = 0;
    int hidden_size = 0;
    void validate() const;
};

struct AttnSpec {
    int embed_dim = 0;
    int num_heads = 1;
    int head_dim() const { return embed_dim / num_heads; }
    void validate() const;
};

struct GatedConvParams {
    // Two DW(k=3, causal time) -> PW(NxN) paths; sigmoid gate on path A.
    Tensor dw_a, dwb_a, pw_a, pwb_a;
    Tensor dw_b, dwb_b, pw_b, pwb_b;
    Tensor out_w, out_b;
};

// --- Tensor-level operations (spec contracts; also the oracle-test surface) ---

// Left zero-padding K-1; y[t] = sum_j w[j] * x[t - (K-1) + j], cross-correlation.
Tensor causal_conv1d(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor& b);

// Time axis last: causal (left pad k_t - 1); frequency padded symmetrically.
Tensor causal_conv2d(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor& b);

// Transposed convolution, stride S, kernel W >= S; output position p depends
// only on input positions l with l*S <= p. Right-trimmed to out_len.
Tensor causal_deconv1d(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor& b,
                       std::size_t out_len);

// Same contract extended to F x T: causal on time, symmetric on frequency
// (stride 1 per axis).
Tensor causal_deconv2d(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor& b);

// c' = sigm(f).c + sigm(i).tanh(g); h' = sigm(o).tanh(c').
void lstm_step(const Tensor& x_t, Tensor& h, Tensor& c, const LstmParams& p);

// Left-to-right unroll; ys column s = h after step s. xs is [input x S_len].
struct LstmSequenceOut {
    Tensor ys;  // [H x S_len]
    Tensor h, c;
};
LstmSequenceOut lstm_sequence(const Tensor& xs, const Tensor& h0, const Tensor& c0,
                              const LstmParams& p);

// Statistics over one axis; gamma/beta sized to that axis.
Tensor layer_norm(const Tensor& x, std::size_t axis, const Tensor& gamma, const Tensor& beta,
                  float eps = 1e-5f);

// q,k,v: [T x D] with D == spec.embed_dim. Lower-triangular (inclusive) mask;
// heads concatenated then projected by w_o [D x D] + b_o.
Tensor masked_mha(const Tensor& q, const Tensor& k, const Tensor& v, const AttnSpec& spec,
                  const Tensor& w_o, const Tensor& b_o);

// out = PW_out( sigm(PW_a(DW_a(x))) .* PW_b(DW_b(x)) ), x: [N x F x T].
Tensor gated_conv(const Tensor& x, const GatedConvParams& p);

Tensor prelu(const Tensor& x, const Tensor& alpha, std::size_t channel_axis);

// --- Frame-level kernels shared by the offline and streaming paths ---------
// Matrices are column-major with one column per frequency bin (or sequence
// position); both execution paths call these with identical shapes so their
// outputs are bit-identical.

struct LstmKernel {
    Mat w_ih;  // 4H x in
    Mat w_hh;  // 4H x H
    Vec b;     // 4H
    int hidden = 0;

    // One step for a batch of independent state columns.
    void step(const Eigen::Ref<const Mat>& x, Mat& h, Mat& c) const;
    // One step where the input contribution (w_ih*x + b) is precomputed.
    void step_pre(const Eigen::Ref<const Vec>& pre_gates, Vec& h, Vec& c) const;
    Mat input_gates(const Eigen::Ref<const Mat>& x) const;  // w_ih*x (+b colwise)
};

void lstm_gate_activate(Mat& gates, Mat& h, Mat& c, int hidden);

// Attention over rows 0..t of the caches for a single query row; shared by
// masked_mha and the streaming engine.
void attn_row(const Eigen::Ref<const RowMat>& k_rows, const Eigen::Ref<const RowMat>& v_rows,
              const Eigen::Ref<const Eigen::RowVectorXf>& q_row, const AttnSpec& spec,
              const Mat& w_o, const Vec& b_o, Eigen::Ref<Eigen::RowVectorXf> out_row);

}  // namespace tfacm
