#pragma once

// Cross-validation with out-of-fold predictions. Also the two-stage flow:
// refute filter first, 4-way classifier for the rest.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "clozefact/classifier.hpp"
#include "clozefact/corpus.hpp"
#include "clozefact/csv.hpp"
#include "clozefact/prompt.hpp"
#include "clozefact/snapshot.hpp"

namespace clozefact {

// One base model: an encoder shape plus the seed that diversifies it. When
// `pretrained` is set training starts from it, otherwise from init_params.
struct ModelSpec {
    EncoderConfig config;
    std::uint64_t seed = 0;
    std::shared_ptr<const EncoderParams> pretrained;

    EncoderParams initial_params() const {
        if (pretrained) {
            return *pretrained;
        }
        return init_params(config, seed);
    }
};

struct CrossValConfig {
    TrainConfig train = finetune_defaults();
    // >= 2 switches each fold to snapshot training with this many cycles.
    std::size_t snapshot_cycles = 1;
};

struct FoldModel {
    std::size_t spec = 0;
    std::size_t fold = 0;
    SnapshotSet snapshots;
    std::vector<std::size_t> train_indices; // sorted, into the crossval dataset
    std::vector<TraceRow> trace;

    PredictionVector predict(const Instance& inst) const { return snapshot_predict(snapshots, inst); }

    bool trained_on(std::size_t index) const {
        return std::binary_search(train_indices.begin(), train_indices.end(), index);
    }
};

// Rows follow the dataset order; columns are model-major blocks of classes.
struct OofMatrix {
    std::vector<Label> classes;
    std::size_t n_models = 0;
    std::vector<std::string> ids;
    std::vector<std::size_t> fold;              // held-out fold per row
    std::vector<std::vector<std::size_t>> source; // [model][row] -> fold of producing model
    Matrix probs;                               // rows x (n_models * classes)

    std::size_t rows() const noexcept { return ids.size(); }
    std::size_t width() const noexcept { return n_models * classes.size(); }

    std::vector<std::string> column_names() const {
        std::vector<std::string> out;
        for (std::size_t m = 0; m < n_models; ++m) {
            for (Label c : classes) {
                out.push_back("m" + std::to_string(m) + "_" + std::string(label_name(c)));
            }
        }
        return out;
    }

    PredictionVector block(std::size_t row, std::size_t model) const {
        PredictionVector p{classes, {}};
        for (std::size_t c = 0; c < classes.size(); ++c) {
            p.probs.push_back(probs(row, model * classes.size() + c));
        }
        return p;
    }
};

struct CrossValResult {
    std::vector<std::vector<FoldModel>> models; // [spec][fold]
    OofMatrix oof;
};

// For every spec and fold f: train on all folds != f, predict fold f. The
// held-out predictions fill the OOF matrix in dataset order.
inline CrossValResult crossval_train(const Dataset& ds, const FoldAssignment& folds,
                                     std::span<const ModelSpec> specs,
                                     std::span<const Label> classes,
                                     std::shared_ptr<const Vocabulary> vocab,
                                     const CrossValConfig& cfg) {
    if (folds.fold_of.size() != ds.size()) {
        throw std::invalid_argument("crossval_train: fold assignment does not cover the dataset");
    }
    if (specs.empty()) {
        throw std::invalid_argument("crossval_train: no model specs");
    }
    CrossValResult res;
    auto& oof = res.oof;
    oof.classes.assign(classes.begin(), classes.end());
    oof.n_models = specs.size();
    oof.fold = folds.fold_of;
    for (const auto& inst : ds.instances()) {
        oof.ids.push_back(inst.id);
    }
    oof.probs = Matrix(ds.size(), oof.width());
    oof.source.assign(specs.size(), std::vector<std::size_t>(ds.size(), folds.k));
    std::vector<std::vector<bool>> filled(specs.size(), std::vector<bool>(ds.size(), false));

    res.models.resize(specs.size());
    for (std::size_t s = 0; s < specs.size(); ++s) {
        for (std::size_t f = 0; f < folds.k; ++f) {
            const auto train_idx = folds.training_members(f);
            const auto held_idx = folds.members(f);
            const Dataset train = ds.subset(train_idx);

            TrainConfig tc = cfg.train;
            tc.seed = derive_seed(specs[s].seed, 0x666f6c64ULL + f);
            FoldModel fm{s, f, {}, train_idx, {}};
            const EncoderParams init = specs[s].initial_params();
            if (cfg.snapshot_cycles >= 2) {
                tc.cycles = cfg.snapshot_cycles;
                auto run = snapshot_train(init, train, classes, vocab, tc);
                fm.snapshots = std::move(run.snapshots);
                fm.trace = std::move(run.trace);
            } else {
                auto run = train_classifier(init, train, classes, vocab, tc);
                fm.snapshots = SnapshotSet::single(std::move(run.model), run.steps);
                fm.trace = std::move(run.trace);
            }

            for (std::size_t i : held_idx) {
                const auto p = fm.predict(ds[i]);
                for (std::size_t c = 0; c < classes.size(); ++c) {
                    oof.probs(i, s * classes.size() + c) = p.probs[c];
                }
                oof.source[s][i] = f;
                filled[s][i] = true;
            }
            res.models[s].push_back(std::move(fm));
        }
        for (std::size_t i = 0; i < ds.size(); ++i) {
            if (!filled[s][i]) {
                throw std::logic_error("crossval_train: row without out-of-fold prediction");
            }
        }
    }
    return res;
}

// Mean over the fold models (and their snapshots) of one spec.
inline PredictionVector predict_folds(std::span<const FoldModel> fold_models,
                                      const Instance& inst) {
    std::vector<PredictionVector> preds;
    preds.reserve(fold_models.size());
    for (const auto& fm : fold_models) {
        preds.push_back(fm.predict(inst));
    }
    return mean_ensemble(preds);
}

inline void write_oof_csv(std::ostream& out, const OofMatrix& oof) {
    std::vector<std::string> header{"instance_id", "fold"};
    for (auto& n : oof.column_names()) {
        header.push_back(std::move(n));
    }
    csv::write_row(out, header);
    for (std::size_t r = 0; r < oof.rows(); ++r) {
        std::vector<std::string> row{oof.ids[r], std::to_string(oof.fold[r])};
        for (std::size_t c = 0; c < oof.width(); ++c) {
            std::ostringstream v;
            v << std::setprecision(17) << oof.probs(r, c);
            row.push_back(v.str());
        }
        csv::write_row(out, row);
    }
}

inline void save_oof_csv(const std::string& path, const OofMatrix& oof) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write OOF file '" + path + "'");
    }
    write_oof_csv(out, oof);
}

inline OofMatrix read_oof_csv(std::istream& in, const std::string& source = "<stream>") {
    csv::Reader reader(in);
    const auto header = reader.next();
    if (!header || header->fields.size() < 3 || header->fields[0] != "instance_id" ||
        header->fields[1] != "fold") {
        throw DataError(source + ": OOF header must start with instance_id,fold");
    }
    OofMatrix oof;
    std::vector<std::size_t> model_of_col;
    for (std::size_t i = 2; i < header->fields.size(); ++i) {
        const auto& name = header->fields[i];
        const auto us = name.find('_');
        if (name.size() < 3 || name[0] != 'm' || us == std::string::npos) {
            throw DataError(source + ": bad OOF column name '" + name + "'");
        }
        const auto model = static_cast<std::size_t>(std::stoul(name.substr(1, us - 1)));
        const auto label = parse_label(name.substr(us + 1));
        if (!label) {
            throw DataError(source + ": bad class in OOF column '" + name + "'");
        }
        if (model == 0) {
            oof.classes.push_back(*label);
        }
        model_of_col.push_back(model);
    }
    if (oof.classes.empty()) {
        throw DataError(source + ": OOF file has no model-0 columns");
    }
    const std::size_t n_classes = oof.classes.size();
    oof.n_models = model_of_col.back() + 1;
    if (oof.width() != model_of_col.size()) {
        throw DataError(source + ": OOF columns are not a full model x class grid");
    }
    for (std::size_t j = 0; j < model_of_col.size(); ++j) {
        const auto& name = header->fields[2 + j];
        if (model_of_col[j] != j / n_classes ||
            parse_label(name.substr(name.find('_') + 1)) != oof.classes[j % n_classes]) {
            throw DataError(source + ": OOF columns out of order at '" + name + "'");
        }
    }
    std::vector<std::vector<double>> rows;
    while (auto rec = reader.next()) {
        if (rec->fields.size() != header->fields.size()) {
            throw DataError(source + ": line " + std::to_string(rec->line) +
                            " has wrong field count");
        }
        oof.ids.push_back(rec->fields[0]);
        try {
            oof.fold.push_back(static_cast<std::size_t>(std::stoul(rec->fields[1])));
            std::vector<double> vals;
            for (std::size_t i = 2; i < rec->fields.size(); ++i) {
                vals.push_back(std::stod(rec->fields[i]));
            }
            rows.push_back(std::move(vals));
        } catch (const std::logic_error&) {
            throw DataError(source + ": line " + std::to_string(rec->line) +
                            " has a non-numeric value");
        }
    }
    oof.probs = Matrix(rows.size(), oof.width());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        std::copy(rows[r].begin(), rows[r].end(), oof.probs.row(r).begin());
    }
    oof.source.assign(oof.n_models, oof.fold);
    return oof;
}

inline OofMatrix load_oof_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open OOF file '" + path + "'");
    }
    return read_oof_csv(in, path);
}

struct TwoStageOutput {
    Label label = Label::Refute;
    PredictionVector probs; // over all five classes
    FilterResult filter;
};

// Gate on the filter; otherwise the 4-way prediction decides, ties to the
// lowest class index.
inline TwoStageOutput two_stage_combine(const FilterResult& filter,
                                        const PredictionVector& four_way) {
    TwoStageOutput out;
    out.filter = filter;
    out.probs.classes.assign(kAllLabels.begin(), kAllLabels.end());
    out.probs.probs.assign(kNumLabels, 0.0);
    if (filter.decision == FilterDecision::Refute) {
        out.label = Label::Refute;
        out.probs.probs[label_index(Label::Refute)] = 1.0;
        return out;
    }
    if (four_way.classes.size() != kNonRefuteLabels.size() ||
        !std::equal(four_way.classes.begin(), four_way.classes.end(), kNonRefuteLabels.begin())) {
        throw std::invalid_argument("two_stage_predict: classifier must cover the four "
                                    "non-Refute classes in canonical order");
    }
    for (std::size_t c = 0; c < four_way.size(); ++c) {
        out.probs.probs[label_index(four_way.classes[c])] = four_way.probs[c];
    }
    out.label = four_way.top();
    return out;
}

// Anything that maps an instance to a class distribution.
template <typename M>
concept InstanceClassifier = requires(const M& m, const Instance& inst) {
    { m.predict(inst) } -> std::same_as<PredictionVector>;
};

inline TwoStageOutput two_stage_predict(const FilterModel& filter, const ClassifierModel& four,
                                        const Instance& inst) {
    return two_stage_combine(refute_filter_predict(filter, inst), predict(four, inst));
}

template <InstanceClassifier M>
TwoStageOutput two_stage_predict(const FilterModel& filter, const M& four, const Instance& inst) {
    return two_stage_combine(refute_filter_predict(filter, inst), four.predict(inst));
}

} // namespace clozefact
