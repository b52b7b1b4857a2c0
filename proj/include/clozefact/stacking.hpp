#pragma once

// Stacking meta-learner: a three-layer perceptron trained on concatenated
// out-of-fold base-model probabilities, applied to concatenated test-time
// base-model probabilities in the same column order.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "clozefact/checkpoint.hpp"
#include "clozefact/classifier.hpp"
#include "clozefact/optim.hpp"
#include "clozefact/pipeline.hpp"
#include "clozefact/random.hpp"
#include "clozefact/training.hpp"

namespace clozefact {

struct StackerParams {
    std::vector<Label> classes;
    Matrix w1, b1; // in x h1
    Matrix w2, b2; // h1 x h2
    Matrix w3, b3; // h2 x classes

    std::size_t input_width() const noexcept { return w1.rows(); }

    std::vector<Matrix*> tensors() { return {&w1, &b1, &w2, &b2, &w3, &b3}; }
    std::vector<const Matrix*> tensors() const { return {&w1, &b1, &w2, &b2, &w3, &b3}; }

    friend bool operator==(const StackerParams&, const StackerParams&) = default;
};

struct StackerConfig {
    std::size_t hidden1 = 64;
    std::size_t hidden2 = 32;
    std::size_t total_steps = 500;
    std::size_t batch_size = 64;
    double lr = 3e-3;
    double weight_decay = 0.01;
    std::uint64_t seed = 1234;
};

inline StackerParams init_stacker(std::size_t in, std::size_t h1, std::size_t h2,
                                  std::span<const Label> classes, std::uint64_t seed) {
    if (in == 0 || h1 == 0 || h2 == 0 || classes.empty()) {
        throw std::invalid_argument("stacker: layer widths must be positive");
    }
    Rng rng = make_rng(seed, 0x737461636bULL);
    auto he = [&](std::size_t r, std::size_t c) {
        Matrix m(r, c);
        const double s = std::sqrt(2.0 / static_cast<double>(r));
        for (double& x : m.values()) {
            x = s * standard_normal(rng);
        }
        return m;
    };
    StackerParams p;
    p.classes.assign(classes.begin(), classes.end());
    p.w1 = he(in, h1);
    p.b1 = Matrix(1, h1);
    p.w2 = he(h1, h2);
    p.b2 = Matrix(1, h2);
    p.w3 = he(h2, classes.size());
    p.b3 = Matrix(1, classes.size());
    return p;
}

namespace detail {

struct StackerActs {
    Matrix z1, a1, z2, a2, logits;
};

inline StackerActs stacker_forward(const StackerParams& p, const Matrix& x) {
    StackerActs s;
    s.z1 = matmul(x, p.w1);
    add_row_bias(s.z1, p.b1);
    s.a1 = s.z1;
    for (double& v : s.a1.values()) {
        v = std::max(0.0, v);
    }
    s.z2 = matmul(s.a1, p.w2);
    add_row_bias(s.z2, p.b2);
    s.a2 = s.z2;
    for (double& v : s.a2.values()) {
        v = std::max(0.0, v);
    }
    s.logits = matmul(s.a2, p.w3);
    add_row_bias(s.logits, p.b3);
    return s;
}

} // namespace detail

inline PredictionVector stacker_predict(const StackerParams& p, std::span<const double> base) {
    if (base.size() != p.input_width()) {
        throw std::invalid_argument("stacker_predict: input width " + std::to_string(base.size()) +
                                    " but stacker expects " + std::to_string(p.input_width()));
    }
    Matrix x(1, base.size());
    std::copy(base.begin(), base.end(), x.row(0).begin());
    const auto acts = detail::stacker_forward(p, x);
    return make_prediction(p.classes, acts.logits.row(0));
}

// Concatenates base-model predictions in spec order.
inline std::vector<double> concat_predictions(std::span<const PredictionVector> preds) {
    std::vector<double> out;
    for (const auto& p : preds) {
        out.insert(out.end(), p.probs.begin(), p.probs.end());
    }
    return out;
}

struct StackerTrainResult {
    StackerParams params;
    std::vector<TraceRow> trace;
};

// Minimizes mean cross-entropy with AdamW at a constant learning rate.
// `targets` are indices into `classes`.
inline StackerTrainResult train_stacker(const Matrix& inputs, std::span<const std::size_t> targets,
                                        std::span<const Label> classes,
                                        const StackerConfig& cfg = {}) {
    if (inputs.rows() != targets.size()) {
        throw std::invalid_argument("train_stacker: " + std::to_string(inputs.rows()) +
                                    " rows but " + std::to_string(targets.size()) + " labels");
    }
    if (inputs.rows() == 0) {
        throw std::invalid_argument("train_stacker: no training rows");
    }
    for (std::size_t t : targets) {
        if (t >= classes.size()) {
            throw std::invalid_argument("train_stacker: target outside class list");
        }
    }
    StackerTrainResult res{init_stacker(inputs.cols(), cfg.hidden1, cfg.hidden2, classes, cfg.seed),
                           {}};
    StackerParams& p = res.params;
    AdamWState<StackerParams> state(p);
    AdamWHyper hyper;
    hyper.base_lr = cfg.lr;
    hyper.weight_decay = cfg.weight_decay;
    BatchSampler sampler(inputs.rows(), derive_seed(cfg.seed, 0x6d657461ULL));
    const std::size_t bs = std::min(cfg.batch_size, inputs.rows());

    for (std::size_t step = 1; step <= cfg.total_steps; ++step) {
        const auto idx = sampler.next(bs);
        Matrix x(bs, inputs.cols());
        for (std::size_t r = 0; r < bs; ++r) {
            auto src = inputs.row(idx[r]);
            std::copy(src.begin(), src.end(), x.row(r).begin());
        }
        const auto acts = detail::stacker_forward(p, x);
        StackerParams g = p;
        for (Matrix* m : g.tensors()) {
            m->fill(0.0);
        }
        const double w = 1.0 / static_cast<double>(bs);
        Matrix dlogits(bs, classes.size());
        double loss = 0.0;
        for (std::size_t r = 0; r < bs; ++r) {
            loss += softmax_xent(acts.logits.row(r), targets[idx[r]], w, dlogits.row(r));
        }
        matmul_at_b_acc(acts.a2, dlogits, g.w3);
        acc_col_sums(dlogits, g.b3);
        Matrix dz2 = matmul_a_bt(dlogits, p.w3);
        for (std::size_t i = 0; i < dz2.size(); ++i) {
            dz2[i] = acts.z2[i] > 0.0 ? dz2[i] : 0.0;
        }
        matmul_at_b_acc(acts.a1, dz2, g.w2);
        acc_col_sums(dz2, g.b2);
        Matrix dz1 = matmul_a_bt(dz2, p.w2);
        for (std::size_t i = 0; i < dz1.size(); ++i) {
            dz1[i] = acts.z1[i] > 0.0 ? dz1[i] : 0.0;
        }
        matmul_at_b_acc(x, dz1, g.w1);
        acc_col_sums(dz1, g.b1);
        adamw_step(p, g, state, hyper, cfg.lr);
        res.trace.push_back({step, cfg.lr, loss * w});
    }
    return res;
}

inline StackerTrainResult train_stacker(const OofMatrix& oof, std::span<const Label> labels,
                                        const StackerConfig& cfg = {}) {
    if (oof.rows() != labels.size()) {
        throw std::invalid_argument("train_stacker: OOF rows and label count differ");
    }
    std::vector<std::size_t> targets;
    targets.reserve(labels.size());
    for (Label l : labels) {
        const auto it = std::find(oof.classes.begin(), oof.classes.end(), l);
        if (it == oof.classes.end()) {
            throw DataError("train_stacker: label " + std::string(label_name(l)) +
                            " not among OOF classes");
        }
        targets.push_back(static_cast<std::size_t>(it - oof.classes.begin()));
    }
    return train_stacker(oof.probs, targets, oof.classes, cfg);
}

// Stacker file: magic "CLZFSTCK", u32 version, u64 class count, u8 class
// indices, then the six tensors as (u64 rows, u64 cols, f64 values).
inline void save_stacker(const StackerParams& p, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write stacker '" + path + "'");
    }
    out.write("CLZFSTCK", 8);
    detail::put_u32(out, 1);
    detail::put_u64(out, p.classes.size());
    for (Label l : p.classes) {
        out.put(static_cast<char>(label_index(l)));
    }
    for (const Matrix* m : p.tensors()) {
        detail::put_u64(out, m->rows());
        detail::put_u64(out, m->cols());
        for (double x : m->values()) {
            detail::put_f64(out, x);
        }
    }
}

inline StackerParams load_stacker(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open stacker '" + path + "'");
    }
    std::array<char, 8> magic{};
    in.read(magic.data(), 8);
    if (!in || std::string(magic.data(), 8) != "CLZFSTCK") {
        throw DataError(path + ": not a stacker file");
    }
    if (detail::get_u32(in) != 1) {
        throw DataError(path + ": unsupported stacker version");
    }
    StackerParams p;
    const auto n_classes = detail::get_u64(in);
    for (std::uint64_t i = 0; i < n_classes; ++i) {
        const int c = in.get();
        if (c < 0 || static_cast<std::size_t>(c) >= kNumLabels) {
            throw DataError(path + ": bad class index");
        }
        p.classes.push_back(label_from_index(static_cast<std::size_t>(c)));
    }
    for (Matrix* m : p.tensors()) {
        const auto rows = detail::get_u64(in);
        const auto cols = detail::get_u64(in);
        if (rows > (1u << 20) || cols > (1u << 20)) {
            throw DataError(path + ": implausible tensor shape");
        }
        *m = Matrix(rows, cols);
        for (double& x : m->values()) {
            x = detail::get_f64(in);
        }
    }
    if (p.w1.cols() != p.w2.rows() || p.w2.cols() != p.w3.rows() ||
        p.w3.cols() != p.classes.size()) {
        throw DataError(path + ": stacker layer widths do not chain");
    }
    return p;
}

} // namespace clozefact
