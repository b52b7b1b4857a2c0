#pragma once

// Supervised classification path: class head on the CLS vector, trained
// with softmax cross-entropy.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "clozefact/corpus.hpp"
#include "clozefact/encoder.hpp"
#include "clozefact/mlm.hpp"
#include "clozefact/optim.hpp"
#include "clozefact/tokenizer.hpp"
#include "clozefact/training.hpp"

namespace clozefact {

struct PredictionVector {
    std::vector<Label> classes;
    std::vector<double> probs;

    std::size_t size() const noexcept { return probs.size(); }
    // Ties resolve to the earliest class in the list.
    Label top() const { return classes.at(argmax(probs)); }
    double prob(Label l) const {
        const auto it = std::find(classes.begin(), classes.end(), l);
        return it == classes.end() ? 0.0 : probs[static_cast<std::size_t>(it - classes.begin())];
    }
};

inline PredictionVector make_prediction(std::span<const Label> classes,
                                        std::span<const double> logits) {
    return {std::vector<Label>(classes.begin(), classes.end()), softmax(logits)};
}

struct ClassifierModel {
    EncoderParams params;
    std::vector<Label> classes;
    std::shared_ptr<const Vocabulary> vocab;
};

inline PredictionVector predict(const ClassifierModel& model, const Instance& inst) {
    const auto seq = encode(*model.vocab, preprocess_instance(inst), model.params.config.max_len);
    const HiddenStates h = forward(model.params, std::span<const TokenSequence>(&seq, 1), false);
    return make_prediction(model.classes, class_logits(model.params, h[0]));
}

inline std::vector<std::size_t> class_targets(const Dataset& ds, std::span<const Label> classes) {
    std::vector<std::size_t> out;
    out.reserve(ds.size());
    for (const auto& inst : ds.instances()) {
        if (!inst.label) {
            throw DataError("instance '" + inst.id + "' has no label");
        }
        const auto it = std::find(classes.begin(), classes.end(), *inst.label);
        if (it == classes.end()) {
            throw DataError("instance '" + inst.id + "' has class " +
                            std::string(label_name(*inst.label)) + " absent from the class list");
        }
        out.push_back(static_cast<std::size_t>(it - classes.begin()));
    }
    return out;
}

// Called after update s (1-based) with the current parameters.
using StepHook = std::function<void(std::size_t step, const EncoderParams&)>;

struct ClassifierTrainResult {
    ClassifierModel model;
    std::vector<TraceRow> trace;
    std::size_t steps = 0;
};

// Shared loop behind finetune() and snapshot_train(). The class head is
// re-initialized to the width of `classes` from cfg.seed.
inline ClassifierTrainResult train_classifier(const EncoderParams& init, const Dataset& train,
                                              std::span<const Label> classes,
                                              std::shared_ptr<const Vocabulary> vocab,
                                              const TrainConfig& cfg,
                                              const StepHook& hook = nullptr) {
    cfg.validate();
    if (classes.empty()) {
        throw std::invalid_argument("finetune: empty class list");
    }
    if (train.empty()) {
        throw DataError("finetune: empty training set");
    }
    if (init.config.vocab_size != vocab->size()) {
        throw std::invalid_argument("finetune: vocabulary size mismatch");
    }
    const auto targets = class_targets(train, classes);
    const auto seqs = encode_dataset(train, *vocab, init.config.max_len);

    ClassifierTrainResult res{
        ClassifierModel{init, std::vector<Label>(classes.begin(), classes.end()), vocab}, {}, 0};
    EncoderParams& params = res.model.params;
    reset_class_head(params, classes.size(), cfg.seed);
    AdamWState<EncoderParams> state(params);
    const AdamWHyper hyper = cfg.adamw();
    const ScheduleConfig sched = cfg.schedule_config();
    BatchSampler sampler(seqs.size(), derive_seed(cfg.seed, 0x66696e65ULL));
    res.trace.reserve(cfg.total_steps);

    std::vector<TokenSequence> batch;
    for (std::size_t step = 1; step <= cfg.total_steps; ++step) {
        const auto idx = sampler.next(cfg.batch_size);
        batch.clear();
        for (std::size_t i : idx) {
            batch.push_back(seqs[i]);
        }
        const double lr = learning_rate(step, sched);
        Rng drop_rng = make_rng(cfg.seed, 0x3000000 + step);
        ForwardTape tape;
        const HiddenStates hidden = forward(params, batch, true, &drop_rng, &tape);
        Gradients grads = zero_grads_like(params);
        auto dhidden = zero_hidden_grads(hidden);
        const double w = 1.0 / static_cast<double>(batch.size());
        double loss = 0.0;
        std::vector<double> dlogits(classes.size());
        for (std::size_t b = 0; b < batch.size(); ++b) {
            const auto logits = class_logits(params, hidden[b]);
            loss += softmax_xent(logits, targets[idx[b]], w, dlogits);
            class_head_backward(params, hidden[b], dlogits, grads, dhidden[b]);
        }
        backward(params, tape, dhidden, grads);
        adamw_step(params, grads, state, hyper, lr);
        res.trace.push_back({step, lr, loss * w});
        if (hook) {
            hook(step, params);
        }
    }
    res.steps = state.t;
    return res;
}

inline ClassifierTrainResult finetune(const EncoderParams& init, const Dataset& train,
                                      std::span<const Label> classes,
                                      std::shared_ptr<const Vocabulary> vocab,
                                      const TrainConfig& cfg = finetune_defaults()) {
    return train_classifier(init, train, classes, std::move(vocab), cfg);
}

} // namespace clozefact
