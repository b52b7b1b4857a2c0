#pragma once

// Small pre-norm transformer encoder with an MLM head and a classification
// head. Forward and backward passes are written out by hand; the backward
// pass is exact (verified against central differences in the test suite).
//
// Layout per sequence (n real tokens, PAD rows are left at zero):
//   x0 = drop(tok_emb[id] + pos_emb[t])
//   per layer: x += drop(Attn(LN1(x)));  x += drop(FFN(LN2(x)))
//   hidden = LNf(x)
// Attention only covers the n real positions, so PAD tokens can never
// influence a real position.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "clozefact/random.hpp"
#include "clozefact/tensor.hpp"
#include "clozefact/tokenizer.hpp"

namespace clozefact {

struct EncoderConfig {
    std::size_t vocab_size = 0;
    std::size_t max_len = 256;
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t n_layers = 2;
    std::size_t d_ff = 128;
    double dropout_rate = 0.1;
    std::size_t n_classes = 5;
    // Standard deviation of the normal used for every weight matrix and
    // embedding table. Biases and LN offsets start at 0, LN scales at 1.
    double init_std = 0.02;

    void validate() const {
        if (vocab_size <= static_cast<std::size_t>(kNumReserved) || max_len < 3 || d_model == 0 ||
            n_heads == 0 || n_layers == 0 || d_ff == 0 || n_classes == 0) {
            throw std::invalid_argument("EncoderConfig: dimensions must be positive (vocab > 5, "
                                        "max_len >= 3)");
        }
        if (d_model % n_heads != 0) {
            throw std::invalid_argument("EncoderConfig: d_model must be divisible by n_heads");
        }
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
            throw std::invalid_argument("EncoderConfig: dropout_rate must be in [0, 1)");
        }
        if (!(init_std > 0.0)) {
            throw std::invalid_argument("EncoderConfig: init_std must be positive");
        }
    }

    friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct LayerParams {
    Matrix ln1_gain, ln1_bias;
    Matrix wq, bq, wk, wv, bv, wo, bo; // no key bias
    Matrix ln2_gain, ln2_bias;
    Matrix w_ff1, b_ff1, w_ff2, b_ff2;

    friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

struct EncoderParams {
    EncoderConfig config;
    Matrix tok_emb; // vocab x d
    Matrix pos_emb; // max_len x d
    std::vector<LayerParams> layers;
    Matrix lnf_gain, lnf_bias;
    Matrix mlm_w, mlm_b; // d x vocab, 1 x vocab
    Matrix cls_w, cls_b; // d x classes, 1 x classes

    // Every tensor in declaration order. This order defines the checkpoint
    // layout and the optimizer state layout.
    std::vector<Matrix*> tensors() {
        std::vector<Matrix*> out{&tok_emb, &pos_emb};
        for (auto& l : layers) {
            for (Matrix* m : {&l.ln1_gain, &l.ln1_bias, &l.wq, &l.bq, &l.wk, &l.wv, &l.bv,
                              &l.wo, &l.bo, &l.ln2_gain, &l.ln2_bias, &l.w_ff1, &l.b_ff1,
                              &l.w_ff2, &l.b_ff2}) {
                out.push_back(m);
            }
        }
        for (Matrix* m : {&lnf_gain, &lnf_bias, &mlm_w, &mlm_b, &cls_w, &cls_b}) {
            out.push_back(m);
        }
        return out;
    }
    std::vector<const Matrix*> tensors() const {
        auto mut = const_cast<EncoderParams*>(this)->tensors();
        return {mut.begin(), mut.end()};
    }

    static std::vector<std::string> tensor_names(std::size_t n_layers) {
        std::vector<std::string> out{"tok_emb", "pos_emb"};
        for (std::size_t i = 0; i < n_layers; ++i) {
            const std::string p = "layer" + std::to_string(i) + ".";
            for (const char* n : {"ln1_gain", "ln1_bias", "wq", "bq", "wk", "wv", "bv", "wo",
                                  "bo", "ln2_gain", "ln2_bias", "w_ff1", "b_ff1", "w_ff2",
                                  "b_ff2"}) {
                out.push_back(p + n);
            }
        }
        for (const char* n : {"lnf_gain", "lnf_bias", "mlm_w", "mlm_b", "cls_w", "cls_b"}) {
            out.emplace_back(n);
        }
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const Matrix* m : tensors()) {
            n += m->size();
        }
        return n;
    }

    friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

// Gradients share the parameter layout.
using Gradients = EncoderParams;

namespace detail {

inline Matrix normal_matrix(std::size_t r, std::size_t c, double stddev, Rng& rng) {
    Matrix m(r, c);
    for (double& x : m.values()) {
        x = stddev * standard_normal(rng);
    }
    return m;
}

} // namespace detail

// Allocates a zero-filled parameter set with the shapes implied by `cfg`.
inline EncoderParams zero_params(const EncoderConfig& cfg) {
    cfg.validate();
    const std::size_t d = cfg.d_model;
    EncoderParams p;
    p.config = cfg;
    p.tok_emb = Matrix(cfg.vocab_size, d);
    p.pos_emb = Matrix(cfg.max_len, d);
    p.layers.resize(cfg.n_layers);
    for (auto& l : p.layers) {
        l.ln1_gain = Matrix(1, d);
        l.ln1_bias = Matrix(1, d);
        l.wq = Matrix(d, d);
        l.bq = Matrix(1, d);
        l.wk = Matrix(d, d);
        l.wv = Matrix(d, d);
        l.bv = Matrix(1, d);
        l.wo = Matrix(d, d);
        l.bo = Matrix(1, d);
        l.ln2_gain = Matrix(1, d);
        l.ln2_bias = Matrix(1, d);
        l.w_ff1 = Matrix(d, cfg.d_ff);
        l.b_ff1 = Matrix(1, cfg.d_ff);
        l.w_ff2 = Matrix(cfg.d_ff, d);
        l.b_ff2 = Matrix(1, d);
    }
    p.lnf_gain = Matrix(1, d);
    p.lnf_bias = Matrix(1, d);
    p.mlm_w = Matrix(d, cfg.vocab_size);
    p.mlm_b = Matrix(1, cfg.vocab_size);
    p.cls_w = Matrix(d, cfg.n_classes);
    p.cls_b = Matrix(1, cfg.n_classes);
    return p;
}

inline Gradients zero_grads_like(const EncoderParams& p) { return zero_params(p.config); }

inline EncoderParams init_params(const EncoderConfig& cfg, std::uint64_t seed) {
    EncoderParams p = zero_params(cfg);
    Rng rng = make_rng(seed, 0x656e63ULL);
    const double s = cfg.init_std;
    const std::size_t d = cfg.d_model;
    p.tok_emb = detail::normal_matrix(cfg.vocab_size, d, s, rng);
    p.pos_emb = detail::normal_matrix(cfg.max_len, d, s, rng);
    for (auto& l : p.layers) {
        l.ln1_gain.fill(1.0);
        l.ln2_gain.fill(1.0);
        l.wq = detail::normal_matrix(d, d, s, rng);
        l.wk = detail::normal_matrix(d, d, s, rng);
        l.wv = detail::normal_matrix(d, d, s, rng);
        l.wo = detail::normal_matrix(d, d, s, rng);
        l.w_ff1 = detail::normal_matrix(d, cfg.d_ff, s, rng);
        l.w_ff2 = detail::normal_matrix(cfg.d_ff, d, s, rng);
    }
    p.lnf_gain.fill(1.0);
    p.mlm_w = detail::normal_matrix(d, cfg.vocab_size, s, rng);
    p.cls_w = detail::normal_matrix(d, cfg.n_classes, s, rng);
    return p;
}

// Replaces the classification head with a freshly initialized one of the
// given width. Used when a pretrained encoder is finetuned on a class list.
inline void reset_class_head(EncoderParams& p, std::size_t n_classes, std::uint64_t seed) {
    if (n_classes == 0) {
        throw std::invalid_argument("reset_class_head: n_classes must be positive");
    }
    Rng rng = make_rng(seed, 0x636c73ULL);
    p.config.n_classes = n_classes;
    p.cls_w = detail::normal_matrix(p.config.d_model, n_classes, p.config.init_std, rng);
    p.cls_b = Matrix(1, n_classes);
}

// Per-sequence hidden states, each max_len x d_model. Rows at PAD positions
// are zero.
struct HiddenStates {
    std::vector<Matrix> seqs;

    std::size_t size() const noexcept { return seqs.size(); }
    const Matrix& operator[](std::size_t i) const { return seqs.at(i); }
};

namespace detail {

inline constexpr double kLnEps = 1e-5;
inline constexpr double kGeluC = 0.7978845608028654; // sqrt(2/pi)
inline constexpr double kGeluA = 0.044715;

inline double gelu(double x) {
    return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

inline double gelu_grad(double x) {
    const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

struct LnCache {
    Matrix xhat;
    std::vector<double> rstd;
};

inline Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, LnCache* cache) {
    const std::size_t n = x.rows(), d = x.cols();
    Matrix y(n, d);
    LnCache local;
    LnCache& c = cache ? *cache : local;
    c.xhat = Matrix(n, d);
    c.rstd.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        auto xr = x.row(i);
        double mean = 0.0;
        for (double v : xr) {
            mean += v;
        }
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (double v : xr) {
            var += (v - mean) * (v - mean);
        }
        var /= static_cast<double>(d);
        const double rstd = 1.0 / std::sqrt(var + kLnEps);
        c.rstd[i] = rstd;
        for (std::size_t j = 0; j < d; ++j) {
            const double xh = (xr[j] - mean) * rstd;
            c.xhat(i, j) = xh;
            y(i, j) = gain[j] * xh + bias[j];
        }
    }
    return y;
}

// Returns dL/dx and accumulates the gain/bias gradients.
inline Matrix layer_norm_backward(const Matrix& dy, const LnCache& c, const Matrix& gain,
                                  Matrix& dgain, Matrix& dbias) {
    const std::size_t n = dy.rows(), d = dy.cols();
    Matrix dx(n, d);
    std::vector<double> dxhat(d);
    for (std::size_t i = 0; i < n; ++i) {
        double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            dgain[j] += dy(i, j) * c.xhat(i, j);
            dbias[j] += dy(i, j);
            dxhat[j] = dy(i, j) * gain[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * c.xhat(i, j);
        }
        mean_dxhat /= static_cast<double>(d);
        mean_dxhat_xhat /= static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) {
            dx(i, j) = c.rstd[i] * (dxhat[j] - mean_dxhat - c.xhat(i, j) * mean_dxhat_xhat);
        }
    }
    return dx;
}

// Inverted dropout. `keep` is empty when dropout is inactive.
inline std::vector<std::uint8_t> dropout_inplace(Matrix& m, double rate, Rng* rng) {
    if (rate <= 0.0 || rng == nullptr) {
        return {};
    }
    std::vector<std::uint8_t> keep(m.size());
    const double scale = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < m.size(); ++i) {
        keep[i] = uniform01(*rng) >= rate ? 1 : 0;
        m[i] = keep[i] ? m[i] * scale : 0.0;
    }
    return keep;
}

inline void dropout_backward(Matrix& dm, const std::vector<std::uint8_t>& keep, double rate) {
    if (keep.empty()) {
        return;
    }
    const double scale = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < dm.size(); ++i) {
        dm[i] = keep[i] ? dm[i] * scale : 0.0;
    }
}

struct LayerCache {
    LnCache ln1;
    Matrix a, q, k, v;
    std::vector<Matrix> probs; // per head, n x n
    Matrix ctx;
    std::vector<std::uint8_t> keep_attn;
    LnCache ln2;
    Matrix b, u, g;
    std::vector<std::uint8_t> keep_ff;
};

struct SeqCache {
    std::size_t n = 0;
    std::vector<TokenId> ids;
    std::vector<std::uint8_t> keep_emb;
    std::vector<LayerCache> layers;
    LnCache lnf;
};

} // namespace detail

// Records what backward() needs from a forward pass.
class ForwardTape {
public:
    bool empty() const noexcept { return seqs_.empty(); }
    std::size_t size() const noexcept { return seqs_.size(); }
    void clear() { seqs_.clear(); }

private:
    friend HiddenStates forward(const EncoderParams&, std::span<const TokenSequence>, bool, Rng*,
                                ForwardTape*);
    friend void backward(const EncoderParams&, const ForwardTape&, std::span<const Matrix>,
                         Gradients&);
    std::vector<detail::SeqCache> seqs_;
    double dropout_rate_ = 0.0;
};

inline void check_sequence(const EncoderConfig& cfg, const TokenSequence& seq) {
    if (seq.ids.size() != cfg.max_len || seq.attention_mask.size() != cfg.max_len) {
        throw std::invalid_argument("forward: sequence length " + std::to_string(seq.ids.size()) +
                                    " does not match max_len " + std::to_string(cfg.max_len));
    }
    bool seen_pad = false;
    for (std::size_t t = 0; t < seq.ids.size(); ++t) {
        if (seq.ids[t] < 0 || static_cast<std::size_t>(seq.ids[t]) >= cfg.vocab_size) {
            throw std::invalid_argument("forward: token id " + std::to_string(seq.ids[t]) +
                                        " outside vocabulary");
        }
        if (seq.attention_mask[t] == 0) {
            seen_pad = true;
        } else if (seen_pad) {
            throw std::invalid_argument("forward: attention mask must be a real-token prefix");
        }
    }
    if (seq.attention_mask.empty() || seq.attention_mask[0] == 0) {
        throw std::invalid_argument("forward: sequence has no real tokens");
    }
}

// Runs the encoder over a batch. In train mode with a generator, dropout is
// applied; eval mode is deterministic. When `tape` is given the
// intermediates needed by backward() are recorded into it.
inline HiddenStates forward(const EncoderParams& params, std::span<const TokenSequence> batch,
                            bool train_mode, Rng* rng = nullptr, ForwardTape* tape = nullptr) {
    const auto& cfg = params.config;
    const std::size_t d = cfg.d_model, H = cfg.n_heads, dh = d / H;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const double rate = cfg.dropout_rate;
    Rng* drop_rng = train_mode ? rng : nullptr;

    HiddenStates out;
    out.seqs.reserve(batch.size());
    if (tape) {
        tape->seqs_.clear();
        tape->seqs_.reserve(batch.size());
        tape->dropout_rate_ = drop_rng ? rate : 0.0;
    }
    for (const auto& seq : batch) {
        check_sequence(cfg, seq);
        const std::size_t n = seq.real_length();
        detail::SeqCache local;
        detail::SeqCache& sc = tape ? tape->seqs_.emplace_back() : local;
        sc.n = n;
        sc.ids.assign(seq.ids.begin(), seq.ids.begin() + static_cast<std::ptrdiff_t>(n));
        sc.layers.resize(cfg.n_layers);

        Matrix x(n, d);
        for (std::size_t t = 0; t < n; ++t) {
            auto te = params.tok_emb.row(static_cast<std::size_t>(seq.ids[t]));
            auto pe = params.pos_emb.row(t);
            for (std::size_t j = 0; j < d; ++j) {
                x(t, j) = te[j] + pe[j];
            }
        }
        sc.keep_emb = detail::dropout_inplace(x, rate, drop_rng);

        for (std::size_t li = 0; li < cfg.n_layers; ++li) {
            const auto& L = params.layers[li];
            auto& lc = sc.layers[li];

            lc.a = detail::layer_norm(x, L.ln1_gain, L.ln1_bias, &lc.ln1);
            lc.q = matmul(lc.a, L.wq);
            add_row_bias(lc.q, L.bq);
            lc.k = matmul(lc.a, L.wk);
            lc.v = matmul(lc.a, L.wv);
            add_row_bias(lc.v, L.bv);

            lc.ctx = Matrix(n, d);
            lc.probs.assign(H, Matrix(n, n));
            for (std::size_t h = 0; h < H; ++h) {
                const std::size_t off = h * dh;
                Matrix& P = lc.probs[h];
                for (std::size_t i = 0; i < n; ++i) {
                    double mx = -std::numeric_limits<double>::infinity();
                    for (std::size_t j = 0; j < n; ++j) {
                        double s = 0.0;
                        for (std::size_t e = 0; e < dh; ++e) {
                            s += lc.q(i, off + e) * lc.k(j, off + e);
                        }
                        s *= scale;
                        P(i, j) = s;
                        mx = std::max(mx, s);
                    }
                    double sum = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        P(i, j) = std::exp(P(i, j) - mx);
                        sum += P(i, j);
                    }
                    for (std::size_t j = 0; j < n; ++j) {
                        P(i, j) /= sum;
                        const double pij = P(i, j);
                        for (std::size_t e = 0; e < dh; ++e) {
                            lc.ctx(i, off + e) += pij * lc.v(j, off + e);
                        }
                    }
                }
            }
            Matrix o = matmul(lc.ctx, L.wo);
            add_row_bias(o, L.bo);
            lc.keep_attn = detail::dropout_inplace(o, rate, drop_rng);
            add_inplace(x, o);

            lc.b = detail::layer_norm(x, L.ln2_gain, L.ln2_bias, &lc.ln2);
            lc.u = matmul(lc.b, L.w_ff1);
            add_row_bias(lc.u, L.b_ff1);
            lc.g = Matrix(n, cfg.d_ff);
            for (std::size_t i = 0; i < lc.u.size(); ++i) {
                lc.g[i] = detail::gelu(lc.u[i]);
            }
            Matrix f = matmul(lc.g, L.w_ff2);
            add_row_bias(f, L.b_ff2);
            lc.keep_ff = detail::dropout_inplace(f, rate, drop_rng);
            add_inplace(x, f);
        }

        Matrix hidden_real = detail::layer_norm(x, params.lnf_gain, params.lnf_bias, &sc.lnf);
        Matrix hidden(cfg.max_len, d);
        for (std::size_t t = 0; t < n; ++t) {
            auto src = hidden_real.row(t);
            std::copy(src.begin(), src.end(), hidden.row(t).begin());
        }
        out.seqs.push_back(std::move(hidden));
    }
    return out;
}

// Accumulates encoder-body gradients into `grads` given dL/dhidden for
// every sequence recorded on the tape.
inline void backward(const EncoderParams& params, const ForwardTape& tape,
                     std::span<const Matrix> dhidden, Gradients& grads) {
    if (tape.empty()) {
        throw std::logic_error("backward: no forward pass recorded on the tape");
    }
    if (dhidden.size() != tape.seqs_.size()) {
        throw std::invalid_argument("backward: gradient count does not match recorded batch");
    }
    const auto& cfg = params.config;
    const std::size_t d = cfg.d_model, H = cfg.n_heads, dh = d / H;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const double rate = tape.dropout_rate_;

    for (std::size_t s = 0; s < tape.seqs_.size(); ++s) {
        const auto& sc = tape.seqs_[s];
        const std::size_t n = sc.n;
        Matrix dy(n, d);
        for (std::size_t t = 0; t < n; ++t) {
            auto src = dhidden[s].row(t);
            std::copy(src.begin(), src.end(), dy.row(t).begin());
        }
        Matrix dx = detail::layer_norm_backward(dy, sc.lnf, params.lnf_gain, grads.lnf_gain,
                                                grads.lnf_bias);

        for (std::size_t li = cfg.n_layers; li-- > 0;) {
            const auto& L = params.layers[li];
            auto& G = grads.layers[li];
            const auto& lc = sc.layers[li];

            // Feed-forward branch.
            Matrix df = dx;
            detail::dropout_backward(df, lc.keep_ff, rate);
            matmul_at_b_acc(lc.g, df, G.w_ff2);
            acc_col_sums(df, G.b_ff2);
            Matrix du = matmul_a_bt(df, L.w_ff2);
            for (std::size_t i = 0; i < du.size(); ++i) {
                du[i] *= detail::gelu_grad(lc.u[i]);
            }
            matmul_at_b_acc(lc.b, du, G.w_ff1);
            acc_col_sums(du, G.b_ff1);
            Matrix db = matmul_a_bt(du, L.w_ff1);
            add_inplace(dx, detail::layer_norm_backward(db, lc.ln2, L.ln2_gain, G.ln2_gain,
                                                        G.ln2_bias));

            // Attention branch.
            Matrix dout = dx;
            detail::dropout_backward(dout, lc.keep_attn, rate);
            matmul_at_b_acc(lc.ctx, dout, G.wo);
            acc_col_sums(dout, G.bo);
            Matrix dctx = matmul_a_bt(dout, L.wo);

            Matrix dq(n, d), dk(n, d), dv(n, d);
            std::vector<double> dp(n);
            for (std::size_t h = 0; h < H; ++h) {
                const std::size_t off = h * dh;
                const Matrix& P = lc.probs[h];
                for (std::size_t i = 0; i < n; ++i) {
                    double dot_pdp = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        double g = 0.0;
                        for (std::size_t e = 0; e < dh; ++e) {
                            g += dctx(i, off + e) * lc.v(j, off + e);
                            dv(j, off + e) += P(i, j) * dctx(i, off + e);
                        }
                        dp[j] = g;
                        dot_pdp += P(i, j) * g;
                    }
                    for (std::size_t j = 0; j < n; ++j) {
                        const double ds = P(i, j) * (dp[j] - dot_pdp) * scale;
                        if (ds == 0.0) {
                            continue;
                        }
                        for (std::size_t e = 0; e < dh; ++e) {
                            dq(i, off + e) += ds * lc.k(j, off + e);
                            dk(j, off + e) += ds * lc.q(i, off + e);
                        }
                    }
                }
            }
            matmul_at_b_acc(lc.a, dq, G.wq);
            acc_col_sums(dq, G.bq);
            matmul_at_b_acc(lc.a, dk, G.wk);
            matmul_at_b_acc(lc.a, dv, G.wv);
            acc_col_sums(dv, G.bv);
            Matrix da = matmul_a_bt(dq, L.wq);
            add_inplace(da, matmul_a_bt(dk, L.wk));
            add_inplace(da, matmul_a_bt(dv, L.wv));
            add_inplace(dx, detail::layer_norm_backward(da, lc.ln1, L.ln1_gain, G.ln1_gain,
                                                        G.ln1_bias));
        }

        detail::dropout_backward(dx, sc.keep_emb, rate);
        for (std::size_t t = 0; t < n; ++t) {
            auto te = grads.tok_emb.row(static_cast<std::size_t>(sc.ids[t]));
            auto pe = grads.pos_emb.row(t);
            for (std::size_t j = 0; j < d; ++j) {
                te[j] += dx(t, j);
                pe[j] += dx(t, j);
            }
        }
    }
}

// Vocabulary logits at the requested positions of one sequence.
inline std::vector<std::vector<double>> mlm_logits(const EncoderParams& params,
                                                   const Matrix& hidden,
                                                   std::span<const std::size_t> positions) {
    const auto& cfg = params.config;
    std::vector<std::vector<double>> out;
    out.reserve(positions.size());
    for (std::size_t pos : positions) {
        if (pos >= hidden.rows()) {
            throw std::out_of_range("mlm_logits: position " + std::to_string(pos) +
                                    " out of range");
        }
        std::vector<double> logits(params.mlm_b.values().begin(), params.mlm_b.values().end());
        auto h = hidden.row(pos);
        for (std::size_t k = 0; k < cfg.d_model; ++k) {
            const double hk = h[k];
            auto wrow = params.mlm_w.row(k);
            for (std::size_t v = 0; v < cfg.vocab_size; ++v) {
                logits[v] += hk * wrow[v];
            }
        }
        out.push_back(std::move(logits));
    }
    return out;
}

// `dhidden` must be max_len x d_model; gradients are added to it.
inline void mlm_head_backward(const EncoderParams& params, const Matrix& hidden,
                              std::span<const std::size_t> positions,
                              std::span<const std::vector<double>> dlogits, Gradients& grads,
                              Matrix& dhidden) {
    const auto& cfg = params.config;
    for (std::size_t p = 0; p < positions.size(); ++p) {
        const std::size_t pos = positions[p];
        const auto& dl = dlogits[p];
        auto h = hidden.row(pos);
        auto dh = dhidden.row(pos);
        for (std::size_t v = 0; v < cfg.vocab_size; ++v) {
            grads.mlm_b[v] += dl[v];
        }
        for (std::size_t k = 0; k < cfg.d_model; ++k) {
            auto wrow = params.mlm_w.row(k);
            auto gw = grads.mlm_w.row(k);
            double acc = 0.0;
            for (std::size_t v = 0; v < cfg.vocab_size; ++v) {
                gw[v] += h[k] * dl[v];
                acc += wrow[v] * dl[v];
            }
            dh[k] += acc;
        }
    }
}

// Class logits read from the CLS position only.
inline std::vector<double> class_logits(const EncoderParams& params, const Matrix& hidden) {
    const auto& cfg = params.config;
    std::vector<double> logits(params.cls_b.values().begin(), params.cls_b.values().end());
    auto h = hidden.row(0);
    for (std::size_t k = 0; k < cfg.d_model; ++k) {
        auto wrow = params.cls_w.row(k);
        for (std::size_t c = 0; c < cfg.n_classes; ++c) {
            logits[c] += h[k] * wrow[c];
        }
    }
    return logits;
}

inline void class_head_backward(const EncoderParams& params, const Matrix& hidden,
                                std::span<const double> dlogits, Gradients& grads,
                                Matrix& dhidden) {
    const auto& cfg = params.config;
    auto h = hidden.row(0);
    auto dh = dhidden.row(0);
    for (std::size_t c = 0; c < cfg.n_classes; ++c) {
        grads.cls_b[c] += dlogits[c];
    }
    for (std::size_t k = 0; k < cfg.d_model; ++k) {
        auto wrow = params.cls_w.row(k);
        auto gw = grads.cls_w.row(k);
        double acc = 0.0;
        for (std::size_t c = 0; c < cfg.n_classes; ++c) {
            gw[c] += h[k] * dlogits[c];
            acc += wrow[c] * dlogits[c];
        }
        dh[k] += acc;
    }
}

// Zeroed dL/dhidden buffers matching a forward output.
inline std::vector<Matrix> zero_hidden_grads(const HiddenStates& hidden) {
    std::vector<Matrix> out;
    out.reserve(hidden.size());
    for (const auto& h : hidden.seqs) {
        out.push_back(zeros_like(h));
    }
    return out;
}

// Softmax cross-entropy of one logit vector against a target index; writes
// dL/dlogits scaled by `weight` into `dlogits`.
inline double softmax_xent(std::span<const double> logits, std::size_t target, double weight,
                           std::span<double> dlogits) {
    const auto p = softmax(logits);
    for (std::size_t i = 0; i < p.size(); ++i) {
        dlogits[i] = weight * (p[i] - (i == target ? 1.0 : 0.0));
    }
    return log_sum_exp(logits) - logits[target];
}

} // namespace clozefact
