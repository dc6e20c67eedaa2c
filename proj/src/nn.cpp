#include "tfacm/nn.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace tfacm {

void LstmParams::validate() const {
    const std::size_t H = static_cast<std::size_t>(hidden_size);
    const std::size_t in = static_cast<std::size_t>(input_size);
    if (w_ih.rank() != 2 || w_ih.dim(0) != 4 * H || w_ih.dim(1) != in ||
        w_hh.rank() != 2 || w_hh.dim(0) != 4 * H || w_hh.dim(1) != H ||
        bias.rank() != 1 || bias.dim(0) != 4 * H) {
        throw std::invalid_argument("lstm: parameter shapes inconsistent with sizes (in=" +
                                    std::to_string(input_size) + ", H=" +
                                    std::to_string(hidden_size) + ")");
    }
}

void AttnSpec::validate() const {
    if (num_heads < 1 || embed_dim % num_heads != 0) {
        throw std::invalid_argument("attention: embed_dim " + std::to_string(embed_dim) +
                                    " not divisible by heads " + std::to_string(num_heads));
    }
}

namespace {

float sigmoidf(float x) { return 1.0f / (1.0f + std::exp(-x)); }

void check_conv_input(const Tensor& x, std::size_t rank, int in_ch, const char* op) {
    if (x.rank() != rank || x.dim(0) != static_cast<std::size_t>(in_ch)) {
        throw std::invalid_argument(std::string(op) + ": input channels " +
                                    std::to_string(x.rank() ? x.dim(0) : 0) + " do not match spec " +
                                    std::to_string(in_ch));
    }
}

}  // namespace

Tensor causal_conv1d(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor& b) {
    check_conv_input(x, 2, spec.in_ch, "causal_conv1d");
    const std::size_t Ci = spec.in_ch, Co = spec.out_ch, K = spec.k_time, T = x.dim(1);
    if (w.shape() != std::vector<std::size_t>{Co, Ci, K}) {
        throw std::invalid_argument("causal_conv1d: weight shape " + shape_str(w.shape()));
    }
    Tensor y({Co, T});
    for (std::size_t o = 0; o < Co; ++o) {
        for (std::size_t t = 0; t < T; ++t) {
            double acc = b[o];
            for (std::size_t i = 0; i < Ci; ++i) {
                for (std::size_t j = 0; j < K; ++j) {
                    const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) -
                                               static_cast<std::ptrdiff_t>(K - 1) +
                                               static_cast<std::ptrdiff_t>(j);
                    if (src < 0) continue;
                    acc += static_cast<double>(w[(o * Ci + i) * K + j]) * x[i * T + src];
                }
            }
            y[o * T + t] = static_cast<float>(acc);
        }
    }
    return y;
}

Tensor causal_conv2d(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor& b) {
    check_conv_input(x, 3, spec.in_ch, "causal_conv2d");
    const std::size_t Ci = spec.in_ch, Co = spec.out_ch;
    const std::size_t Kf = spec.k_freq, Kt = spec.k_time;
    const std::size_t F = x.dim(1), T = x.dim(2);
    if (w.shape() != std::vector<std::size_t>{Co, Ci, Kf, Kt}) {
        throw std::invalid_argument("causal_conv2d: weight shape " + shape_str(w.shape()));
    }
    const std::ptrdiff_t f_pad = static_cast<std::ptrdiff_t>(Kf - 1) / 2;  // symmetric
    Tensor y({Co, F, T});
    for (std::size_t o = 0; o < Co; ++o) {
        for (std::size_t f = 0; f < F; ++f) {
            for (std::size_t t = 0; t < T; ++t) {
                double acc = b[o];
                for (std::size_t i = 0; i < Ci; ++i) {
                    for (std::size_t kf = 0; kf < Kf; ++kf) {
                        const std::ptrdiff_t sf = static_cast<std::ptrdiff_t>(f + kf) - f_pad;
                        if (sf < 0 || sf >= static_cast<std::ptrdiff_t>(F)) continue;
                        for (std::size_t kt = 0; kt < Kt; ++kt) {
                            const std::ptrdiff_t st = static_cast<std::ptrdiff_t>(t) -
                                                      static_cast<std::ptrdiff_t>(Kt - 1) +
                                                      static_cast<std::ptrdiff_t>(kt);
                            if (st < 0) continue;
                            acc += static_cast<double>(w[((o * Ci + i) * Kf + kf) * Kt + kt]) *
                                   x[(i * F + sf) * T + st];
                        }
                    }
                }
                y[(o * F + f) * T + t] = static_cast<float>(acc);
            }
        }
    }
    return y;
}

Tensor causal_deconv1d(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor& b,
                       std::size_t out_len) {
    check_conv_input(x, 2, spec.in_ch, "causal_deconv1d");
    const std::size_t Ci = spec.in_ch, Co = spec.out_ch, K = spec.k_time;
    const std::size_t S = spec.stride, L = x.dim(1);
    if (K < S) throw std::invalid_argument("causal_deconv1d: kernel must be >= stride");
    if (w.shape() != std::vector<std::size_t>{Co, Ci, K}) {
        throw std::invalid_argument("causal_deconv1d: weight shape " + shape_str(w.shape()));
    }
    const std::size_t full = (L - 1) * S + K;
    if (out_len > full) {
        throw std::invalid_argument("causal_deconv1d: target length " + std::to_string(out_len) +
                                    " exceeds producible " + std::to_string(full));
    }
    Tensor y({Co, out_len});
    for (std::size_t o = 0; o < Co; ++o) {
        for (std::size_t p = 0; p < out_len; ++p) y[o * out_len + p] = b[o];
    }
    for (std::size_t l = 0; l < L; ++l) {
        for (std::size_t j = 0; j < K; ++j) {
            const std::size_t p = l * S + j;
            if (p >= out_len) break;
            for (std::size_t o = 0; o < Co; ++o) {
                double acc = y[o * out_len + p];
                for (std::size_t i = 0; i < Ci; ++i) {
                    acc += static_cast<double>(w[(o * Ci + i) * K + j]) * x[i * L + l];
                }
                y[o * out_len + p] = static_cast<float>(acc);
            }
        }
    }
    return y;
}

Tensor causal_deconv2d(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor& b) {
    check_conv_input(x, 3, spec.in_ch, "causal_deconv2d");
    const std::size_t Ci = spec.in_ch, Co = spec.out_ch;
    const std::size_t Kf = spec.k_freq, Kt = spec.k_time;
    const std::size_t F = x.dim(1), T = x.dim(2);
    if (w.shape() != std::vector<std::size_t>{Co, Ci, Kf, Kt}) {
        throw std::invalid_argument("causal_deconv2d: weight shape " + shape_str(w.shape()));
    }
    // Stride 1 per axis: time keeps positions [0, T) (causal trim, y[t] uses
    // x[t-kt]); frequency keeps the centered [  (Kf-1)/2, ... ) band.
    const std::ptrdiff_t f_off = static_cast<std::ptrdiff_t>(Kf - 1) / 2;
    Tensor y({Co, F, T});
    for (std::size_t o = 0; o < Co; ++o) {
        for (std::size_t f = 0; f < F; ++f) {
            for (std::size_t t = 0; t < T; ++t) {
                double acc = b[o];
                for (std::size_t kf = 0; kf < Kf; ++kf) {
                    const std::ptrdiff_t sf = static_cast<std::ptrdiff_t>(f + f_off) -
                                              static_cast<std::ptrdiff_t>(kf);
                    if (sf < 0 || sf >= static_cast<std::ptrdiff_t>(F)) continue;
                    for (std::size_t kt = 0; kt < Kt; ++kt) {
                        if (t < kt) continue;
                        const std::size_t st = t - kt;
                        for (std::size_t i = 0; i < Ci; ++i) {
                            acc += static_cast<double>(w[((o * Ci + i) * Kf + kf) * Kt + kt]) *
                                   x[(i * F + sf) * T + st];
                        }
                    }
                }
                y[(o * F + f) * T + t] = static_cast<float>(acc);
            }
        }
    }
    return y;
}

void lstm_step(const Tensor& x_t, Tensor& h, Tensor& c, const LstmParams& p) {
    p.validate();
    const std::size_t H = static_cast<std::size_t>(p.hidden_size);
    const std::size_t in = static_cast<std::size_t>(p.input_size);
    if (x_t.numel() != in || h.numel() != H || c.numel() != H) {
        throw std::invalid_argument("lstm_step: input/state shapes do not match params");
    }
    std::vector<double> gates(4 * H);
    for (std::size_t r = 0; r < 4 * H; ++r) {
        double acc = p.bias[r];
        for (std::size_t j = 0; j < in; ++j) acc += static_cast<double>(p.w_ih[r * in + j]) * x_t[j];
        for (std::size_t j = 0; j < H; ++j) acc += static_cast<double>(p.w_hh[r * H + j]) * h[j];
        gates[r] = acc;
    }
    for (std::size_t j = 0; j < H; ++j) {
        const float gi = sigmoidf(static_cast<float>(gates[j]));
        const float gf = sigmoidf(static_cast<float>(gates[H + j]));
        const float gg = std::tanh(static_cast<float>(gates[2 * H + j]));
        const float go = sigmoidf(static_cast<float>(gates[3 * H + j]));
        c[j] = gf * c[j] + gi * gg;
        h[j] = go * std::tanh(c[j]);
    }
}

LstmSequenceOut lstm_sequence(const Tensor& xs, const Tensor& h0, const Tensor& c0,
                              const LstmParams& p) {
    p.validate();
    const std::size_t in = static_cast<std::size_t>(p.input_size);
    const std::size_t H = static_cast<std::size_t>(p.hidden_size);
    if (xs.rank() != 2 || xs.dim(0) != in) {
        throw std::invalid_argument("lstm_sequence: xs must be [input x S_len]");
    }
    const std::size_t S = xs.dim(1);
    LstmSequenceOut out;
    out.h = h0;
    out.c = c0;
    out.ys = Tensor({H, S});
    Tensor x_t({in});
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t j = 0; j < in; ++j) x_t[j] = xs[j * S + s];
        lstm_step(x_t, out.h, out.c, p);
        for (std::size_t j = 0; j < H; ++j) out.ys[j * S + s] = out.h[j];
    }
    return out;
}

Tensor layer_norm(const Tensor& x, std::size_t axis, const Tensor& gamma, const Tensor& beta,
                  float eps) {
    if (axis >= x.rank()) throw std::invalid_argument("layer_norm: axis out of range");
    const std::size_t C = x.dim(axis);
    if (gamma.numel() != C || beta.numel() != C) {
        throw std::invalid_argument("layer_norm: gamma/beta must match normalized axis length");
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
    for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);

    Tensor y(x.shape());
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const float* base = x.data() + o * C * inner + in;
            double mean = 0.0;
            for (std::size_t cidx = 0; cidx < C; ++cidx) mean += base[cidx * inner];
            mean /= C;
            double var = 0.0;
            for (std::size_t cidx = 0; cidx < C; ++cidx) {
                const double d = base[cidx * inner] - mean;
                var += d * d;
            }
            var /= C;
            const float inv = 1.0f / std::sqrt(static_cast<float>(var) + eps);
            float* out = y.data() + o * C * inner + in;
            for (std::size_t cidx = 0; cidx < C; ++cidx) {
                out[cidx * inner] = (static_cast<float>(base[cidx * inner] - mean)) * inv *
                                        gamma[cidx] +
                                    beta[cidx];
            }
        }
    }
    return y;
}

void attn_row(const Eigen::Ref<const RowMat>& k_rows, const Eigen::Ref<const RowMat>& v_rows,
              const Eigen::Ref<const Eigen::RowVectorXf>& q_row, const AttnSpec& spec,
              const Mat& w_o, const Vec& b_o, Eigen::Ref<Eigen::RowVectorXf> out_row) {
    const int d = spec.head_dim();
    const float scale = 1.0f / std::sqrt(static_cast<float>(d));
    const Eigen::Index n = k_rows.rows();
    Eigen::RowVectorXf ctx(spec.embed_dim);
    Eigen::VectorXf scores(n);
    for (int hidx = 0; hidx < spec.num_heads; ++hidx) {
        const Eigen::Index c0 = static_cast<Eigen::Index>(hidx) * d;
        scores.noalias() = k_rows.middleCols(c0, d) * q_row.middleCols(c0, d).transpose();
        scores *= scale;
        const float m = scores.maxCoeff();
        scores = (scores.array() - m).exp();
        scores /= scores.sum();
        ctx.middleCols(c0, d).noalias() = scores.transpose() * v_rows.middleCols(c0, d);
    }
    out_row.noalias() = ctx * w_o.transpose();
    out_row += b_o.transpose();
}

Tensor masked_mha(const Tensor& q, const Tensor& k, const Tensor& v, const AttnSpec& spec,
                  const Tensor& w_o, const Tensor& b_o) {
    spec.validate();
    const std::size_t D = static_cast<std::size_t>(spec.embed_dim);
    if (q.rank() != 2 || q.dim(1) != D || !q.same_shape(k) || !q.same_shape(v)) {
        throw std::invalid_argument("masked_mha: q/k/v must be [T x D], D == embed_dim");
    }
    const std::size_t T = q.dim(0);
    Eigen::Map<const RowMat> K(k.data(), T, D);
    Eigen::Map<const RowMat> V(v.data(), T, D);
    Eigen::Map<const RowMat> Q(q.data(), T, D);
    Eigen::Map<const RowMat> Wo(w_o.data(), D, D);
    Mat wo_col = Wo;  // column-major for the shared kernel
    Eigen::Map<const Vec> bo(b_o.data(), D);
    Vec bo_col = bo;

    Tensor y({T, D});
    Eigen::Map<RowMat> Y(y.data(), T, D);
    for (std::size_t t = 0; t < T; ++t) {
        const Eigen::Index n = static_cast<Eigen::Index>(t) + 1;
        Eigen::RowVectorXf out(D);
        attn_row(K.topRows(n), V.topRows(n), Q.row(t), spec, wo_col, bo_col, out);
        Y.row(t) = out;
    }
    return y;
}

Tensor prelu(const Tensor& x, const Tensor& alpha, std::size_t channel_axis) {
    if (channel_axis >= x.rank() || alpha.numel() != x.dim(channel_axis)) {
        throw std::invalid_argument("prelu: alpha must match channel axis length");
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < channel_axis; ++i) outer *= x.dim(i);
    for (std::size_t i = channel_axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
    const std::size_t C = x.dim(channel_axis);
    Tensor y(x.shape());
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t cidx = 0; cidx < C; ++cidx) {
            const float a = alpha[cidx];
            const float* src = x.data() + (o * C + cidx) * inner;
            float* dst = y.data() + (o * C + cidx) * inner;
            for (std::size_t i = 0; i < inner; ++i) dst[i] = src[i] >= 0.0f ? src[i] : a * src[i];
        }
    }
    return y;
}

Tensor gated_conv(const Tensor& x, const GatedConvParams& p) {
    if (x.rank() != 3) throw std::invalid_argument("gated_conv: input must be [N x F x T]");
    const std::size_t N = x.dim(0), F = x.dim(1), T = x.dim(2);
    if (p.pw_a.shape() != std::vector<std::size_t>{N, N} || p.dw_a.shape() != std::vector<std::size_t>{N, 3}) {
        throw std::invalid_argument("gated_conv: parameter shapes do not match channels");
    }

    auto dw_path = [&](const Tensor& dw, const Tensor& dwb) {
        Tensor v({N, F, T});
        for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t f = 0; f < F; ++f) {
                const float* src = x.data() + (n * F + f) * T;
                float* dst = v.data() + (n * F + f) * T;
                for (std::size_t t = 0; t < T; ++t) {
                    double acc = dwb[n];
                    for (std::size_t j = 0; j < 3; ++j) {
                        const std::ptrdiff_t st = static_cast<std::ptrdiff_t>(t) - 2 +
                                                  static_cast<std::ptrdiff_t>(j);
                        if (st < 0) continue;
                        acc += static_cast<double>(dw[n * 3 + j]) * src[st];
                    }
                    dst[t] = static_cast<float>(acc);
                }
            }
        }
        return v;
    };
    auto pw = [&](const Tensor& v, const Tensor& w, const Tensor& b) {
        Tensor y({N, F, T});
        for (std::size_t o = 0; o < N; ++o) {
            for (std::size_t f = 0; f < F; ++f) {
                for (std::size_t t = 0; t < T; ++t) {
                    double acc = b[o];
                    for (std::size_t i = 0; i < N; ++i) {
                        acc += static_cast<double>(w[o * N + i]) * v[(i * F + f) * T + t];
                    }
                    y[(o * F + f) * T + t] = static_cast<float>(acc);
                }
            }
        }
        return y;
    };

    Tensor gate = pw(dw_path(p.dw_a, p.dwb_a), p.pw_a, p.pwb_a);
    for (std::size_t i = 0; i < gate.numel(); ++i) gate[i] = sigmoidf(gate[i]);
    Tensor lin = pw(dw_path(p.dw_b, p.dwb_b), p.pw_b, p.pwb_b);
    Tensor merged = elementwise(gate, lin, BinOp::Mul);
    return pw(merged, p.out_w, p.out_b);
}

// --- frame kernels ---------------------------------------------------------

void lstm_gate_activate(Mat& gates, Mat& h, Mat& c, int hidden) {
    auto gi = gates.topRows(hidden).array();
    auto gf = gates.middleRows(hidden, hidden).array();
    auto gg = gates.middleRows(2 * hidden, hidden).array();
    auto go = gates.bottomRows(hidden).array();
    c.array() = gf.logistic() * c.array() + gi.logistic() * gg.tanh();
    h.array() = go.logistic() * c.array().tanh();
}

void LstmKernel::step(const Eigen::Ref<const Mat>& x, Mat& h, Mat& c) const {
    Mat gates = w_ih * x;
    gates.noalias() += w_hh * h;
    gates.colwise() += b;
    lstm_gate_activate(gates, h, c, hidden);
}

Mat LstmKernel::input_gates(const Eigen::Ref<const Mat>& x) const {
    Mat g = w_ih * x;
    g.colwise() += b;
    return g;
}

void LstmKernel::step_pre(const Eigen::Ref<const Vec>& pre_gates, Vec& h, Vec& c) const {
    Vec gates = pre_gates;
    gates.noalias() += w_hh * h;
    auto gi = gates.head(hidden).array();
    auto gf = gates.segment(hidden, hidden).array();
    auto gg = gates.segment(2 * hidden, hidden).array();
    auto go = gates.tail(hidden).array();
    c.array() = gf.logistic() * c.array() + gi.logistic() * gg.tanh();
    h.array() = go.logistic() * c.array().tanh();
}

}  // namespace tfacm
