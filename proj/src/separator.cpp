#include "tfacm/separator.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace tfacm {

namespace {

Mat to_mat(const Tensor& t, std::size_t rows, std::size_t cols) {
    // Row-major tensor [rows x cols] -> column-major Eigen matrix.
    Mat m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = t[r * cols + c];
    }
    return m;
}

Vec to_vec(const Tensor& t) {
    Vec v(t.numel());
    for (std::size_t i = 0; i < t.numel(); ++i) v[i] = t[i];
    return v;
}

LstmKernel to_lstm(const Model& m, const std::string& prefix, int hidden) {
    LstmKernel k;
    const Tensor& wih = m.get(prefix + ".w_ih");
    const Tensor& whh = m.get(prefix + ".w_hh");
    k.w_ih = to_mat(wih, wih.dim(0), wih.dim(1));
    k.w_hh = to_mat(whh, whh.dim(0), whh.dim(1));
    k.b = to_vec(m.get(prefix + ".b"));
    k.hidden = hidden;
    return k;
}

void check_finite(const Tensor& t, const std::string& where) {
    for (std::size_t i = 0; i < t.numel(); ++i) {
        if (!std::isfinite(t[i])) {
            throw std::runtime_error("non-finite value detected in " + where);
        }
    }
}

}  // namespace

CacheState CacheState::zeros(int hidden, int freq_bins, std::size_t segments) {
    CacheState s;
    s.h.assign(segments, Mat::Zero(hidden, freq_bins));
    s.c.assign(segments, Mat::Zero(hidden, freq_bins));
    return s;
}

SeparatorRt::SeparatorRt(const Model& m) : cfg(m.cfg), ft(m.cfg.stft) {
    cfg.validate();
    const int F = cfg.freq_bins();
    const int N = cfg.sep.channels;
    const int H = cfg.sep.hidden;
    const int W1 = cfg.sep.w1, S1 = cfg.sep.s1;
    const int W2 = cfg.sep.w2;
    const int E = cfg.sep.attn_channels;

    const int rem = (F - W1) % S1;
    freq_pad = rem ? S1 - rem : 0;
    lf = (F + freq_pad - W1) / S1 + 1;

    enc_w = m.get("enc.conv.w");
    enc_b = m.get("enc.conv.b");
    enc_ln_g = to_vec(m.get("enc.ln.g"));
    enc_ln_b = to_vec(m.get("enc.ln.b"));
    dec_w = m.get("dec.conv.w");
    dec_b = m.get("dec.conv.b");

    for (int i = 0; i < cfg.sep.blocks; ++i) {
        const std::string p = "blk" + std::to_string(i) + ".";
        BlockKernels blk;
        blk.f_ln_g = to_vec(m.get(p + "f.ln.g"));
        blk.f_ln_b = to_vec(m.get(p + "f.ln.b"));
        blk.f_lstm = to_lstm(m, p + "f.lstm", H);
        const Tensor& fdw = m.get(p + "f.deconv.w");  // [N x H x W1]
        for (int w = 0; w < W1; ++w) {
            Mat tap(N, H);
            for (int o = 0; o < N; ++o) {
                for (int hh = 0; hh < H; ++hh) tap(o, hh) = fdw[(o * H + hh) * W1 + w];
            }
            blk.f_deconv.push_back(std::move(tap));
        }
        blk.f_deconv_b = to_vec(m.get(p + "f.deconv.b"));

        blk.t_lstm = to_lstm(m, p + "t.lstm", H);
        const Tensor& tow = m.get(p + "t.out.w");  // [W2 x N x H]
        for (int w = 0; w < W2; ++w) {
            Mat tap(N, H);
            for (int o = 0; o < N; ++o) {
                for (int hh = 0; hh < H; ++hh) tap(o, hh) = tow[(w * static_cast<std::size_t>(N) + o) * H + hh];
            }
            blk.t_out.push_back(std::move(tap));
        }
        blk.t_out_b = to_vec(m.get(p + "t.out.b"));

        if (i + 1 < cfg.sep.blocks) {
            blk.has_cm = true;
            blk.cm_h = to_lstm(m, p + "cm.h", H);
            blk.cm_c = to_lstm(m, p + "cm.c", H);
        }

        auto proj = [&](const char* which, Mat& w, Vec& b, Vec& alpha, Vec& g, Vec& be) {
            const std::string q = p + "car." + which;
            const Tensor& wt = m.get(q + ".w");
            w = to_mat(wt, E, N);
            b = to_vec(m.get(q + ".b"));
            alpha = to_vec(m.get(q + ".prelu"));
            g = to_vec(m.get(q + ".ln.g"));
            be = to_vec(m.get(q + ".ln.b"));
        };
        proj("q", blk.q_w, blk.q_b, blk.q_prelu, blk.q_ln_g, blk.q_ln_b);
        proj("k", blk.k_w, blk.k_b, blk.k_prelu, blk.k_ln_g, blk.k_ln_b);
        proj("v", blk.v_w, blk.v_b, blk.v_prelu, blk.v_ln_g, blk.v_ln_b);

        const std::size_t EF = static_cast<std::size_t>(E) * F;
        blk.attn_wo = to_mat(m.get(p + "car.attn.w_o"), EF, EF);
        blk.attn_bo = to_vec(m.get(p + "car.attn.b_o"));
        blk.back_w = to_mat(m.get(p + "car.back.w"), N, E);
        blk.back_b = to_vec(m.get(p + "car.back.b"));

        blk.gate_dw_a = to_mat(m.get(p + "car.gate.dw_a"), N, 3);
        blk.gate_dwb_a = to_vec(m.get(p + "car.gate.dwb_a"));
        blk.gate_pw_a = to_mat(m.get(p + "car.gate.pw_a"), N, N);
        blk.gate_pwb_a = to_vec(m.get(p + "car.gate.pwb_a"));
        blk.gate_dw_b = to_mat(m.get(p + "car.gate.dw_b"), N, 3);
        blk.gate_dwb_b = to_vec(m.get(p + "car.gate.dwb_b"));
        blk.gate_pw_b = to_mat(m.get(p + "car.gate.pw_b"), N, N);
        blk.gate_pwb_b = to_vec(m.get(p + "car.gate.pwb_b"));
        blk.gate_out_w = to_mat(m.get(p + "car.gate.out.w"), N, N);
        blk.gate_out_b = to_vec(m.get(p + "car.gate.out.b"));
        blocks.push_back(std::move(blk));
    }
}

// --- frame kernels ---------------------------------------------------------

void ln_cols(Mat& x, const Vec& gamma, const Vec& beta, float eps) {
    const float inv_n = 1.0f / static_cast<float>(x.rows());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        auto col = x.col(c).array();
        const float mean = col.sum() * inv_n;
        col -= mean;
        const float var = col.square().sum() * inv_n;
        col *= 1.0f / std::sqrt(var + eps);
    }
    x.array().colwise() *= gamma.array();
    x.colwise() += beta;
}

void encode_frame(const SeparatorRt& rt, const Mat* prev2, const Mat* prev1, const Mat& cur,
                  Mat& out) {
    const int N = rt.cfg.sep.channels;
    const int F = rt.cfg.freq_bins();
    out.resize(N, F);
    const Mat* frames[3] = {prev2, prev1, &cur};
    const Tensor& w = rt.enc_w;  // [N x 2 x 3 x 3] (o, i, kf, kt)
    for (int o = 0; o < N; ++o) {
        for (int f = 0; f < F; ++f) {
            double acc = rt.enc_b[o];
            for (int i = 0; i < 2; ++i) {
                for (int kf = 0; kf < 3; ++kf) {
                    const int sf = f + kf - 1;
                    if (sf < 0 || sf >= F) continue;
                    for (int kt = 0; kt < 3; ++kt) {
                        const Mat* src = frames[kt];
                        if (!src) continue;
                        acc += static_cast<double>(w[((o * 2 + i) * 3 + kf) * 3 + kt]) *
                               (*src)(i, sf);
                    }
                }
            }
            out(o, f) = static_cast<float>(acc);
        }
    }
    ln_cols(out, rt.enc_ln_g, rt.enc_ln_b);
}

void flocal_frame(const SeparatorRt& rt, const BlockKernels& blk, const Mat& x, Mat& out) {
    const int N = rt.cfg.sep.channels;
    const int H = rt.cfg.sep.hidden;
    const int F = rt.cfg.freq_bins();
    const int W1 = rt.cfg.sep.w1, S1 = rt.cfg.sep.s1;
    const int LF = rt.lf;

    // Unfold frequency into overlapping sub-bands, tap-major feature layout.
    Mat u(W1 * N, LF);
    for (int l = 0; l < LF; ++l) {
        for (int w = 0; w < W1; ++w) {
            const int sf = l * S1 + w;
            if (sf < F) {
                u.block(w * N, l, N, 1) = x.col(sf);
            } else {
                u.block(w * N, l, N, 1).setZero();  // right zero padding
            }
        }
    }
    ln_cols(u, blk.f_ln_g, blk.f_ln_b);

    Mat pre = blk.f_lstm.input_gates(u);  // 4H x LF
    Mat ys(H, LF);
    Vec h = Vec::Zero(H), c = Vec::Zero(H);
    for (int l = 0; l < LF; ++l) {
        blk.f_lstm.step_pre(pre.col(l), h, c);
        ys.col(l) = h;
    }

    // Transposed conv back over frequency, trimmed to F, plus residual.
    const int full = (LF - 1) * S1 + W1;
    Mat full_out = Mat::Zero(N, full);
    if (S1 == 1) {
        for (int w = 0; w < W1; ++w) {
            full_out.middleCols(w, LF).noalias() += blk.f_deconv[w] * ys;
        }
    } else {
        for (int l = 0; l < LF; ++l) {
            for (int w = 0; w < W1; ++w) {
                full_out.col(l * S1 + w).noalias() += blk.f_deconv[w] * ys.col(l);
            }
        }
    }
    out = full_out.leftCols(F);
    out.colwise() += blk.f_deconv_b;
    out += x;
}

void tlocal_frame(const BlockKernels& blk, const Mat& x, int seg_pos, const Mat& seg_init_h,
                  const Mat& seg_init_c, Mat& h, Mat& c, Mat& out) {
    if (seg_pos == 0) {
        h = seg_init_h;
        c = seg_init_c;
    }
    blk.t_lstm.step(x, h, c);
    out.noalias() = blk.t_out[static_cast<std::size_t>(seg_pos)] * h;
    out.colwise() += blk.t_out_b;
    out += x;
}

void cm_step(const BlockKernels& blk, const Mat& h_seg, const Mat& c_seg, Mat& cmh_h, Mat& cmh_c,
             Mat& cmc_h, Mat& cmc_c) {
    blk.cm_h.step(h_seg, cmh_h, cmh_c);
    blk.cm_c.step(c_seg, cmc_h, cmc_c);
}

void qkv_frame(const SeparatorRt& rt, const Mat& proj_w, const Vec& proj_b, const Vec& alpha,
               const Vec& ln_g, const Vec& ln_b, const Mat& x, Eigen::RowVectorXf& token) {
    Mat m = proj_w * x;
    m.colwise() += proj_b;
    for (Eigen::Index e = 0; e < m.rows(); ++e) {
        m.row(e) = m.row(e).cwiseMax(0.0f) + alpha[e] * m.row(e).cwiseMin(0.0f);
    }
    ln_cols(m, ln_g, ln_b);
    token = Eigen::Map<const Eigen::RowVectorXf>(m.data(), m.size());
}

void car_post_frame(const SeparatorRt& rt, const BlockKernels& blk,
                    const Eigen::RowVectorXf& attn_token, const Mat& gate_hist1,
                    const Mat& gate_hist2, Mat& gate_in, Mat& out) {
    const int E = rt.cfg.sep.attn_channels;
    const int F = rt.cfg.freq_bins();
    Eigen::Map<const Mat> y(attn_token.data(), E, F);
    gate_in.noalias() = blk.back_w * y;
    gate_in.colwise() += blk.back_b;

    auto dw = [&](const Mat& dwm, const Vec& dwb, Mat& v) {
        v = gate_in.array().colwise() * dwm.col(2).array();
        v.array() += (gate_hist1.array().colwise() * dwm.col(1).array());
        v.array() += (gate_hist2.array().colwise() * dwm.col(0).array());
        v.colwise() += dwb;
    };
    Mat va, vb;
    dw(blk.gate_dw_a, blk.gate_dwb_a, va);
    dw(blk.gate_dw_b, blk.gate_dwb_b, vb);
    Mat ga = blk.gate_pw_a * va;
    ga.colwise() += blk.gate_pwb_a;
    Mat gb = blk.gate_pw_b * vb;
    gb.colwise() += blk.gate_pwb_b;
    ga = ga.array().logistic() * gb.array();
    out.noalias() = blk.gate_out_w * ga;
    out.colwise() += blk.gate_out_b;
}

void decode_frame(const SeparatorRt& rt, const Mat* prev2, const Mat* prev1, const Mat& cur,
                  Mat& out) {
    const int N = rt.cfg.sep.channels;
    const int F = rt.cfg.freq_bins();
    const int Co = 2 * rt.cfg.sep.speakers;
    out.resize(Co, F);
    const Mat* frames[3] = {&cur, prev1, prev2};  // kt = t - l
    const Tensor& w = rt.dec_w;                   // [2C x N x 3 x 3]
    for (int o = 0; o < Co; ++o) {
        for (int f = 0; f < F; ++f) {
            double acc = rt.dec_b[o];
            for (int kt = 0; kt < 3; ++kt) {
                const Mat* src = frames[kt];
                if (!src) continue;
                for (int kf = 0; kf < 3; ++kf) {
                    const int sf = f + 1 - kf;  // transposed conv, symmetric frequency
                    if (sf < 0 || sf >= F) continue;
                    const auto& sm = *src;
                    double a = 0.0;
                    for (int i = 0; i < N; ++i) {
                        a += static_cast<double>(w[((o * static_cast<std::size_t>(N) + i) * 3 + kf) * 3 + kt]) * sm(i, sf);
                    }
                    acc += a;
                }
            }
            out(o, f) = static_cast<float>(acc);
        }
    }
    if (rt.cfg.sep.output_activation == OutputActivation::Relu) {
        out = out.cwiseMax(0.0f);
    }
}

// --- offline separator -----------------------------------------------------

Mat frame_of(const Tensor& g, std::size_t t) {
    const std::size_t N = g.dim(0), F = g.dim(1), T = g.dim(2);
    Mat m(N, F);
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t f = 0; f < F; ++f) m(n, f) = g[(n * F + f) * T + t];
    }
    return m;
}

void set_frame(Tensor& g, std::size_t t, const Mat& m) {
    const std::size_t N = g.dim(0), F = g.dim(1), T = g.dim(2);
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t f = 0; f < F; ++f) g[(n * F + f) * T + t] = m(n, f);
    }
}

Separator::Separator(Model model) : model_(std::move(model)), rt_(model_) {}

std::size_t Separator::segment_count(std::size_t frames) const {
    const std::size_t w2 = static_cast<std::size_t>(rt_.cfg.sep.w2);
    return (frames + w2 - 1) / w2;
}

Tensor Separator::encode(const Tensor& mix) const {
    const Spectrogram spec = stft(mix, rt_.cfg.stft);
    const std::size_t F = spec.freq_bins(), T = spec.frames();
    const std::size_t N = rt_.cfg.sep.channels;
    const double* re = spec.planes.data();
    const double* im = re + F * T;

    Tensor g({N, F, T});
    Mat hist1, hist2, cur(2, F), out;
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t f = 0; f < F; ++f) {
            cur(0, f) = static_cast<float>(re[f * T + t]);
            cur(1, f) = static_cast<float>(im[f * T + t]);
        }
        encode_frame(rt_, t >= 2 ? &hist2 : nullptr, t >= 1 ? &hist1 : nullptr, cur, out);
        set_frame(g, t, out);
        hist2 = hist1;
        hist1 = cur;
    }
    check_finite(g, "encode output");
    return g;
}

Tensor Separator::f_local(const Tensor& g, int block) const {
    const std::size_t T = g.dim(2);
    const BlockKernels& blk = rt_.blocks.at(block);
    if (rt_.cfg.sep.w1 > static_cast<int>(g.dim(1))) {
        throw std::invalid_argument("f_local: W1 exceeds frequency bins");
    }
    Tensor out(g.shape());
    Mat x, y;
    for (std::size_t t = 0; t < T; ++t) {
        x = frame_of(g, t);
        flocal_frame(rt_, blk, x, y);
        set_frame(out, t, y);
    }
    return out;
}

Separator::TLocalOut Separator::t_local(const Tensor& g, const CacheState& cm_in,
                                        int block) const {
    const std::size_t T = g.dim(2);
    const int W2 = rt_.cfg.sep.w2;
    const std::size_t segs = segment_count(T);
    if (cm_in.segments() != segs) {
        throw std::invalid_argument("t_local: cache state has " + std::to_string(cm_in.segments()) +
                                    " segments, expected " + std::to_string(segs));
    }
    const BlockKernels& blk = rt_.blocks.at(block);
    const int H = rt_.cfg.sep.hidden;
    const int F = rt_.cfg.freq_bins();

    TLocalOut res;
    res.g = Tensor(g.shape());
    Mat h(H, F), c(H, F), x, y;
    const Mat zero_frame = Mat::Zero(rt_.cfg.sep.channels, F);
    for (std::size_t l = 0; l < segs; ++l) {
        for (int w = 0; w < W2; ++w) {
            const std::size_t t = l * W2 + w;
            x = t < T ? frame_of(g, t) : zero_frame;  // right zero padding
            tlocal_frame(blk, x, w, cm_in.h[l], cm_in.c[l], h, c, y);
            if (t < T) set_frame(res.g, t, y);
        }
        res.state.h.push_back(h);
        res.state.c.push_back(c);
    }
    return res;
}

CacheState Separator::cache_memory(const CacheState& s, int block) const {
    const BlockKernels& blk = rt_.blocks.at(block);
    if (!blk.has_cm) throw std::invalid_argument("cache_memory: block has no CM weights");
    if (s.segments() == 0) throw std::invalid_argument("cache_memory: empty state sequence");
    const int H = rt_.cfg.sep.hidden;
    const int F = rt_.cfg.freq_bins();
    Mat hh = Mat::Zero(H, F), hc = Mat::Zero(H, F);
    Mat ch = Mat::Zero(H, F), cc = Mat::Zero(H, F);
    CacheState out;
    for (std::size_t l = 0; l < s.segments(); ++l) {
        cm_step(blk, s.h[l], s.c[l], hh, hc, ch, cc);
        out.h.push_back(hh);
        out.c.push_back(ch);
    }
    return out;
}

CacheState Separator::misalign(const CacheState& s) {
    if (s.segments() == 0) throw std::invalid_argument("misalign: empty sequence");
    CacheState out;
    out.h.push_back(Mat::Zero(s.h[0].rows(), s.h[0].cols()));
    out.c.push_back(Mat::Zero(s.c[0].rows(), s.c[0].cols()));
    for (std::size_t l = 0; l + 1 < s.segments(); ++l) {
        out.h.push_back(s.h[l]);
        out.c.push_back(s.c[l]);
    }
    return out;
}

Tensor Separator::car(const Tensor& g, int block) const {
    const std::size_t T = g.dim(2);
    const BlockKernels& blk = rt_.blocks.at(block);
    const int E = rt_.cfg.sep.attn_channels;
    const int F = rt_.cfg.freq_bins();
    const std::size_t EF = static_cast<std::size_t>(E) * F;
    AttnSpec aspec{static_cast<int>(EF), rt_.cfg.sep.heads};

    RowMat K(T, EF), V(T, EF), Q(T, EF);
    Mat x;
    Eigen::RowVectorXf tok(EF);
    for (std::size_t t = 0; t < T; ++t) {
        x = frame_of(g, t);
        qkv_frame(rt_, blk.q_w, blk.q_b, blk.q_prelu, blk.q_ln_g, blk.q_ln_b, x, tok);
        Q.row(t) = tok;
        qkv_frame(rt_, blk.k_w, blk.k_b, blk.k_prelu, blk.k_ln_g, blk.k_ln_b, x, tok);
        K.row(t) = tok;
        qkv_frame(rt_, blk.v_w, blk.v_b, blk.v_prelu, blk.v_ln_g, blk.v_ln_b, x, tok);
        V.row(t) = tok;
    }

    Tensor out(g.shape());
    Mat hist1 = Mat::Zero(rt_.cfg.sep.channels, F);
    Mat hist2 = Mat::Zero(rt_.cfg.sep.channels, F);
    Mat gate_in, y;
    Eigen::RowVectorXf attn_out(EF);
    for (std::size_t t = 0; t < T; ++t) {
        const Eigen::Index rows = rt_.cfg.sep.attn_mask_disabled
                                      ? static_cast<Eigen::Index>(T)
                                      : static_cast<Eigen::Index>(t) + 1;
        attn_row(K.topRows(rows), V.topRows(rows), Q.row(t), aspec, blk.attn_wo, blk.attn_bo,
                 attn_out);
        car_post_frame(rt_, blk, attn_out, hist1, hist2, gate_in, y);
        hist2 = hist1;
        hist1 = gate_in;
        x = frame_of(g, t);
        set_frame(out, t, Mat(x + y));
    }
    return out;
}

Tensor Separator::decode(const Tensor& g, std::size_t out_len) const {
    const std::size_t T = g.dim(2);
    const std::size_t F = rt_.cfg.freq_bins();
    const std::size_t C = rt_.cfg.sep.speakers;

    // Per-speaker spectra, then iSTFT.
    std::vector<Spectrogram> specs(C);
    for (std::size_t c = 0; c < C; ++c) {
        specs[c].bins = F;
        specs[c].frame_count = T;
        specs[c].planes.assign(2 * F * T, 0.0);
    }

    Mat hist1, hist2, cur, s;
    for (std::size_t t = 0; t < T; ++t) {
        cur = frame_of(g, t);
        decode_frame(rt_, t >= 2 ? &hist2 : nullptr, t >= 1 ? &hist1 : nullptr, cur, s);
        for (std::size_t c = 0; c < C; ++c) {
            double* re = specs[c].planes.data();
            double* im = re + F * T;
            for (std::size_t f = 0; f < F; ++f) {
                re[f * T + t] = s(2 * c, f);
                im[f * T + t] = s(2 * c + 1, f);
            }
        }
        hist2 = hist1;
        hist1 = cur;
    }

    Tensor out({C, out_len});
    for (std::size_t c = 0; c < C; ++c) {
        Tensor wave = istft(specs[c], rt_.cfg.stft, out_len);
        std::copy(wave.data(), wave.data() + out_len, out.data() + c * out_len);
    }
    return out;
}

Tensor Separator::separate(const Tensor& mix) const {
    if (mix.rank() != 1) throw std::invalid_argument("separate: rank-1 mixture required");
    const std::size_t L = mix.numel();
    Tensor g = encode(mix);
    const std::size_t T = g.dim(2);
    const int H = rt_.cfg.sep.hidden;
    const int F = rt_.cfg.freq_bins();

    CacheState cm_in = CacheState::zeros(H, F, segment_count(T));
    for (int i = 0; i < rt_.cfg.sep.blocks; ++i) {
        g = f_local(g, i);
        TLocalOut tl = t_local(g, cm_in, i);
        g = std::move(tl.g);
        if (rt_.blocks[i].has_cm) {
            cm_in = misalign(cache_memory(tl.state, i));
        }
        g = car(g, i);
        check_finite(g, "separator block " + std::to_string(i));
    }
    return decode(g, L);
}

}  // namespace tfacm
