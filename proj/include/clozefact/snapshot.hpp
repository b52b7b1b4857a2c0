#pragma once

// Snapshot ensembling: one training run under a cyclic schedule, a checkpoint
// at the end of every cycle, predictions averaged over the checkpoints.

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "clozefact/classifier.hpp"

namespace clozefact {

// Arithmetic mean per class, summed in input order.
inline PredictionVector mean_ensemble(std::span<const PredictionVector> preds) {
    if (preds.empty()) {
        throw std::invalid_argument("mean_ensemble: no predictions");
    }
    PredictionVector out{preds.front().classes, std::vector<double>(preds.front().size(), 0.0)};
    for (const auto& p : preds) {
        if (p.classes != out.classes || p.probs.size() != out.probs.size()) {
            throw std::invalid_argument("mean_ensemble: mismatched class lists");
        }
        for (std::size_t c = 0; c < p.probs.size(); ++c) {
            out.probs[c] += p.probs[c];
        }
    }
    for (double& x : out.probs) {
        x /= static_cast<double>(preds.size());
    }
    return out;
}

struct SnapshotSet {
    std::vector<ClassifierModel> members;
    std::vector<std::size_t> cycle_index;  // 1-based cycle each member closes
    std::vector<std::size_t> capture_step; // update number at capture

    std::size_t size() const noexcept { return members.size(); }
    bool empty() const noexcept { return members.empty(); }

    static SnapshotSet single(ClassifierModel model, std::size_t step) {
        SnapshotSet s;
        s.members.push_back(std::move(model));
        s.cycle_index.push_back(1);
        s.capture_step.push_back(step);
        return s;
    }
};

struct SnapshotTrainResult {
    SnapshotSet snapshots;
    std::vector<TraceRow> trace;
    std::size_t steps = 0;
};

// Trains once under lr_cyclic and keeps the parameters at every cycle
// boundary (the LR minima). cfg.schedule is forced to cyclic.
inline SnapshotTrainResult snapshot_train(const EncoderParams& init, const Dataset& train,
                                          std::span<const Label> classes,
                                          std::shared_ptr<const Vocabulary> vocab,
                                          TrainConfig cfg) {
    if (cfg.cycles < 2) {
        throw std::invalid_argument("snapshot_train: at least 2 cycles required");
    }
    cfg.schedule = ScheduleKind::Cyclic;
    const std::size_t len = cycle_length(cfg.schedule_config());
    SnapshotTrainResult res;
    auto hook = [&](std::size_t step, const EncoderParams& params) {
        if (step % len == 0) {
            res.snapshots.members.push_back(
                ClassifierModel{params, std::vector<Label>(classes.begin(), classes.end()), vocab});
            res.snapshots.cycle_index.push_back(step / len);
            res.snapshots.capture_step.push_back(step);
        }
    };
    auto run = train_classifier(init, train, classes, vocab, cfg, hook);
    res.trace = std::move(run.trace);
    res.steps = run.steps;
    return res;
}

inline PredictionVector snapshot_predict(const SnapshotSet& set, const Instance& inst) {
    if (set.empty()) {
        throw std::invalid_argument("snapshot_predict: empty snapshot set");
    }
    std::vector<PredictionVector> preds;
    preds.reserve(set.size());
    for (const auto& m : set.members) {
        preds.push_back(predict(m, inst));
    }
    return mean_ensemble(preds);
}

} // namespace clozefact
