#pragma once

// Command-line front end. Everything a subcommand needs is read from the run
// configuration; artifacts land in `paths.output_dir`.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data or I/O error.
//
// Requires CLI11 on the include path.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "clozefact/clozefact.hpp"

#ifndef CLOZEFACT_VERSION
#define CLOZEFACT_VERSION "0.0.0"
#endif

namespace clozefact::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

namespace detail {

inline std::string hex64(std::uint64_t v) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << v;
    return s.str();
}

inline fs::path out_dir(const RunConfig& cfg) {
    fs::path dir(cfg.output_dir);
    fs::create_directories(dir);
    return dir;
}

inline void write_manifest(const RunConfig& cfg, const std::string& command,
                           const std::vector<std::string>& extra = {}) {
    const std::string canon = cfg.canonical();
    std::ofstream out(out_dir(cfg) / ("manifest_" + command + ".txt"), std::ios::binary);
    if (!out) {
        throw DataError("cannot write manifest for '" + command + "'");
    }
    out << "clozefact " << CLOZEFACT_VERSION << '\n';
    out << "command=" << command << '\n';
    out << "config_hash=" << hex64(fnv1a64(canon)) << '\n';
    for (const auto& e : extra) {
        out << e << '\n';
    }
    out << "--\n" << canon;
}

// Labels are read whenever the file carries a category column.
inline Dataset load_any(const std::string& path, Provenance prov) {
    if (path.empty()) {
        throw UsageError("no dataset path configured");
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open dataset file '" + path + "'");
    }
    std::string first;
    std::getline(in, first);
    const bool labeled = first.find("category") != std::string::npos;
    in.clear();
    in.seekg(0);
    return read_dataset(in, labeled, prov, path);
}

inline Dataset load_train(const RunConfig& cfg) {
    if (cfg.train_path.empty()) {
        throw UsageError("paths.train is not set");
    }
    return load_dataset(cfg.train_path, true, Provenance::Train);
}

struct Artifacts {
    std::shared_ptr<const Vocabulary> vocab;
    std::shared_ptr<const EncoderParams> pretrained;
};

inline Artifacts load_pretrained(const RunConfig& cfg) {
    const fs::path dir(cfg.output_dir);
    const fs::path vocab_path = dir / "vocab.txt";
    const fs::path ckpt_path = dir / "pretrained.ckpt";
    if (!fs::exists(vocab_path) || !fs::exists(ckpt_path)) {
        throw DataError("no pretrained encoder in '" + cfg.output_dir + "'; run `pretrain` first");
    }
    Artifacts a;
    a.vocab = std::make_shared<const Vocabulary>(load_vocab(vocab_path.string()));
    a.pretrained = std::make_shared<const EncoderParams>(load_checkpoint(ckpt_path.string()));
    if (a.pretrained->config.vocab_size != a.vocab->size()) {
        throw DataError("pretrained checkpoint does not match vocab.txt");
    }
    return a;
}

inline std::vector<ModelSpec> model_specs(const RunConfig& cfg, const Artifacts& a) {
    std::vector<ModelSpec> specs;
    for (auto seed : cfg.model_seeds) {
        specs.push_back({a.pretrained->config, seed, a.pretrained});
    }
    return specs;
}

inline std::string model_stem(bool four, std::size_t s, std::size_t f) {
    return std::string(four ? "four_" : "") + "m" + std::to_string(s) + "_f" + std::to_string(f);
}

inline std::string ckpt_name(bool four, std::size_t s, std::size_t f, std::size_t cycles,
                             std::size_t c) {
    std::string n = model_stem(four, s, f);
    if (cycles >= 2) {
        n += ".cycle" + std::to_string(c);
    }
    return n + ".ckpt";
}

inline std::vector<Label> class_list(bool four) {
    if (four) {
        return {kNonRefuteLabels.begin(), kNonRefuteLabels.end()};
    }
    return {kAllLabels.begin(), kAllLabels.end()};
}

// [spec][fold] models rebuilt from the checkpoints written by `finetune`.
inline std::vector<std::vector<FoldModel>> load_fold_models(const RunConfig& cfg,
                                                            const Artifacts& a, bool four) {
    const fs::path dir(cfg.output_dir);
    const auto classes = class_list(four);
    const std::size_t members = cfg.snapshot_cycles >= 2 ? cfg.snapshot_cycles : 1;
    std::vector<std::vector<FoldModel>> out(cfg.model_seeds.size());
    for (std::size_t s = 0; s < cfg.model_seeds.size(); ++s) {
        for (std::size_t f = 0; f < cfg.folds; ++f) {
            FoldModel fm;
            fm.spec = s;
            fm.fold = f;
            for (std::size_t c = 1; c <= members; ++c) {
                const fs::path p = dir / ckpt_name(four, s, f, cfg.snapshot_cycles, c);
                if (!fs::exists(p)) {
                    throw DataError("missing model checkpoint '" + p.string() +
                                    "'; run `finetune" + (four ? " --four-class" : "") + "` first");
                }
                fm.snapshots.members.push_back(ClassifierModel{load_checkpoint(p.string()), classes,
                                                               a.vocab});
                fm.snapshots.cycle_index.push_back(c);
                fm.snapshots.capture_step.push_back(0);
            }
            out[s].push_back(std::move(fm));
        }
    }
    return out;
}

// Mean over specs of each spec's fold mean.
struct FoldEnsemble {
    std::vector<std::vector<FoldModel>> models;

    PredictionVector predict(const Instance& inst) const {
        std::vector<PredictionVector> per_spec;
        for (const auto& folds : models) {
            per_spec.push_back(predict_folds(folds, inst));
        }
        return mean_ensemble(per_spec);
    }
};

inline FilterModel load_filter(const RunConfig& cfg, const Artifacts& a) {
    const fs::path p = fs::path(cfg.output_dir) / "filter.ckpt";
    if (!fs::exists(p)) {
        throw DataError("missing '" + p.string() + "'; run `prompt-filter` first");
    }
    return FilterModel{load_checkpoint(p.string()), a.vocab,
                       PromptTemplate(cfg.prompt.template_pattern),
                       Verbalizer(cfg.prompt.negative_words, cfg.prompt.positive_words, *a.vocab),
                       cfg.prompt.threshold};
}

inline std::string fmt(double v, int precision = 17) {
    std::ostringstream s;
    s << std::setprecision(precision) << v;
    return s.str();
}

inline void write_predictions(const fs::path& path, const Dataset& ds,
                              const std::vector<Label>& preds) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write predictions '" + path.string() + "'");
    }
    csv::write_row(out, std::vector<std::string>{"id", "category"});
    for (std::size_t i = 0; i < ds.size(); ++i) {
        csv::write_row(out, std::vector<std::string>{ds[i].id, std::string(label_name(preds[i]))});
    }
}

inline std::map<std::string, Label> read_predictions(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open predictions '" + path + "'");
    }
    csv::Reader reader(in);
    const auto header = reader.next();
    if (!header || header->fields.size() != 2 || header->fields[0] != "id" ||
        header->fields[1] != "category") {
        throw DataError(path + ": header must be id,category");
    }
    std::map<std::string, Label> out;
    while (auto rec = reader.next()) {
        if (rec->fields.size() == 1 && rec->fields[0].empty()) {
            continue;
        }
        if (rec->fields.size() != 2) {
            throw DataError(path + ": line " + std::to_string(rec->line) + " needs 2 fields");
        }
        const auto l = parse_label(rec->fields[1]);
        if (!l) {
            throw DataError(path + ": line " + std::to_string(rec->line) + ": unknown category '" +
                            rec->fields[1] + "'");
        }
        if (!out.emplace(rec->fields[0], *l).second) {
            throw DataError(path + ": duplicate id '" + rec->fields[0] + "'");
        }
    }
    return out;
}

inline Vocabulary build_run_vocab(const RunConfig& cfg, const Dataset& train) {
    std::vector<std::string> texts;
    for (const auto& inst : train.instances()) {
        texts.push_back(preprocess_instance(inst));
    }
    // Template literals and label words must be in-vocabulary.
    std::vector<std::string> forced;
    const PromptTemplate tmpl(cfg.prompt.template_pattern);
    for (auto& w : split_words(tmpl.literal_text())) {
        forced.push_back(std::move(w));
    }
    for (const auto* words : {&cfg.prompt.negative_words, &cfg.prompt.positive_words}) {
        for (const auto& w : *words) {
            forced.push_back(normalize_text(w));
        }
    }
    return build_vocab(texts, cfg.vocab_max_size, cfg.vocab_min_freq, forced);
}

// ---- subcommands ----

struct SynthOptions {
    std::string out;
    SyntheticSpec spec;
    bool unlabeled = false;
};

inline void cmd_synth(const SynthOptions& o, std::ostream& log) {
    Dataset ds = generate_synthetic(o.spec);
    if (o.unlabeled) {
        std::vector<Instance> stripped(ds.instances().begin(), ds.instances().end());
        for (auto& inst : stripped) {
            inst.label.reset();
        }
        ds = Dataset(std::move(stripped), Provenance::Synthetic);
    }
    std::ofstream out(o.out, std::ios::binary);
    if (!out) {
        throw DataError("cannot write '" + o.out + "'");
    }
    write_dataset(out, ds);
    log << "wrote " << ds.size() << " instances to " << o.out << '\n';
}

inline void cmd_pretrain(const RunConfig& cfg, std::ostream& log) {
    const Dataset train = load_train(cfg);
    const Vocabulary vocab = build_run_vocab(cfg, train);
    EncoderConfig ec = cfg.encoder;
    ec.vocab_size = vocab.size();
    ec.n_classes = kNumLabels;
    PretrainConfig pc{cfg.pretrain, cfg.masking};
    const auto res = pretrain(train, vocab, ec, pc);

    const fs::path dir = out_dir(cfg);
    save_vocab(vocab, (dir / "vocab.txt").string());
    save_checkpoint(res.params, (dir / "pretrained.ckpt").string());
    save_trace((dir / "pretrain_loss.csv").string(), res.trace);
    write_manifest(cfg, "pretrain", {"vocab_size=" + std::to_string(vocab.size()),
                                     "updates=" + std::to_string(res.steps)});
    const std::size_t window = std::min<std::size_t>(100, res.trace.size());
    log << "pretrain: " << res.steps << " updates, vocab " << vocab.size() << ", loss "
        << fmt(mean_loss(res.trace, 0, window), 6) << " -> "
        << fmt(mean_loss(res.trace, res.trace.size() - window, window), 6) << '\n';
    for (const auto& w : res.warnings) {
        log << "warning: " << w << '\n';
    }
}

inline void cmd_finetune(const RunConfig& cfg, bool four, std::ostream& log) {
    const Artifacts a = load_pretrained(cfg);
    const Dataset full = load_train(cfg);
    const FoldAssignment folds_full = stratified_kfold(full, cfg.folds, cfg.fold_seed);

    // The 4-way stage sees only non-Refute rows under the same fold split.
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < full.size(); ++i) {
        if (!four || *full[i].label != Label::Refute) {
            keep.push_back(i);
        }
    }
    const Dataset ds = full.subset(keep);
    FoldAssignment folds{cfg.folds, {}, cfg.fold_seed};
    for (std::size_t i : keep) {
        folds.fold_of.push_back(folds_full.fold_of[i]);
    }

    const auto classes = class_list(four);
    const auto specs = model_specs(cfg, a);
    const auto res =
        crossval_train(ds, folds, specs, classes, a.vocab, {cfg.finetune, cfg.snapshot_cycles});

    const fs::path dir = out_dir(cfg);
    for (const auto& per_spec : res.models) {
        for (const auto& fm : per_spec) {
            for (std::size_t c = 0; c < fm.snapshots.size(); ++c) {
                save_checkpoint(fm.snapshots.members[c].params,
                                (dir / ckpt_name(four, fm.spec, fm.fold, cfg.snapshot_cycles,
                                                 fm.snapshots.cycle_index[c]))
                                    .string());
            }
            save_trace((dir / (model_stem(four, fm.spec, fm.fold) + "_loss.csv")).string(),
                       fm.trace);
        }
    }
    save_oof_csv((dir / (four ? "four_oof.csv" : "oof.csv")).string(), res.oof);

    std::vector<Label> mean_pred;
    const auto gold = ds.labels();
    for (std::size_t r = 0; r < res.oof.rows(); ++r) {
        std::vector<PredictionVector> blocks;
        for (std::size_t m = 0; m < res.oof.n_models; ++m) {
            blocks.push_back(res.oof.block(r, m));
        }
        mean_pred.push_back(mean_ensemble(blocks).top());
    }
    const auto cm = confusion(gold, mean_pred, classes);
    write_manifest(cfg, four ? "finetune_four" : "finetune",
                   {"rows=" + std::to_string(ds.size()), "classes=" + std::to_string(classes.size())});
    log << "finetune" << (four ? " (4-way)" : "") << ": " << specs.size() << " specs x "
        << cfg.folds << " folds, OOF weighted F1 " << fmt(weighted_f1(cm), 6) << '\n';
}

inline void cmd_prompt_filter(const RunConfig& cfg, const std::string& apply, std::ostream& log) {
    const Artifacts a = load_pretrained(cfg);
    const fs::path dir = out_dir(cfg);
    if (apply.empty()) {
        const Dataset train = load_train(cfg);
        const auto res = refute_filter_train(train, *a.pretrained, a.vocab, cfg.prompt);
        save_checkpoint(res.model.params, (dir / "filter.ckpt").string());
        save_trace((dir / "filter_loss.csv").string(), res.trace);
        write_manifest(cfg, "prompt-filter");
        log << "prompt-filter: trained " << res.trace.size() << " updates\n";
        return;
    }
    const FilterModel model = load_filter(cfg, a);
    const Dataset ds = load_any(apply, Provenance::Test);
    const fs::path out_path = dir / "filter_scores.csv";
    std::ofstream out(out_path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write '" + out_path.string() + "'");
    }
    csv::write_row(out, std::vector<std::string>{"id", "p_negative", "p_positive", "decision"});
    std::size_t refuted = 0;
    for (const auto& inst : ds.instances()) {
        const auto r = refute_filter_predict(model, inst);
        refuted += r.decision == FilterDecision::Refute;
        csv::write_row(out, std::vector<std::string>{
                                inst.id, fmt(r.prediction.p_negative), fmt(r.prediction.p_positive),
                                r.decision == FilterDecision::Refute ? "Refute" : "Other"});
    }
    write_manifest(cfg, "prompt-filter-apply", {"input=" + apply});
    log << "prompt-filter: " << refuted << " of " << ds.size() << " flagged Refute\n";
}

inline void cmd_ensemble(const RunConfig& cfg, std::ostream& log) {
    const fs::path dir = out_dir(cfg);
    const OofMatrix oof = load_oof_csv((dir / "oof.csv").string());
    const Dataset train = load_train(cfg);
    if (oof.rows() != train.size()) {
        throw DataError("oof.csv has " + std::to_string(oof.rows()) + " rows but the training set has " +
                        std::to_string(train.size()));
    }
    for (std::size_t i = 0; i < train.size(); ++i) {
        if (oof.ids[i] != train[i].id) {
            throw DataError("oof.csv row " + std::to_string(i + 1) + " is '" + oof.ids[i] +
                            "' but the training set has '" + train[i].id + "'");
        }
    }
    const auto gold = train.labels();
    const auto res = train_stacker(oof, gold, cfg.stacker);
    save_stacker(res.params, (dir / "stacker.bin").string());
    save_trace((dir / "stacker_loss.csv").string(), res.trace);

    std::vector<Label> mean_pred, stack_pred;
    for (std::size_t r = 0; r < oof.rows(); ++r) {
        std::vector<PredictionVector> blocks;
        for (std::size_t m = 0; m < oof.n_models; ++m) {
            blocks.push_back(oof.block(r, m));
        }
        mean_pred.push_back(mean_ensemble(blocks).top());
        stack_pred.push_back(stacker_predict(res.params, oof.probs.row(r)).top());
    }
    const double f_mean = weighted_f1(confusion(gold, mean_pred, oof.classes));
    const double f_stack = weighted_f1(confusion(gold, stack_pred, oof.classes));
    write_manifest(cfg, "ensemble");
    log << "ensemble: OOF weighted F1 mean " << fmt(f_mean, 6) << ", stacker (in-sample) "
        << fmt(f_stack, 6) << '\n';
}

inline void cmd_predict(const RunConfig& cfg, int method, const std::string& input,
                        const std::string& out_path, std::ostream& log) {
    const Artifacts a = load_pretrained(cfg);
    const std::string in_path = !input.empty() ? input : cfg.test_path;
    const Dataset ds = load_any(in_path, Provenance::Test);
    std::vector<Label> preds;
    preds.reserve(ds.size());
    if (method == 1) {
        const auto models = load_fold_models(cfg, a, false);
        const fs::path stacker_path = fs::path(cfg.output_dir) / "stacker.bin";
        std::optional<StackerParams> stacker;
        if (fs::exists(stacker_path)) {
            stacker = load_stacker(stacker_path.string());
        }
        for (const auto& inst : ds.instances()) {
            std::vector<PredictionVector> per_spec;
            for (const auto& folds : models) {
                per_spec.push_back(predict_folds(folds, inst));
            }
            preds.push_back(stacker ? stacker_predict(*stacker, concat_predictions(per_spec)).top()
                                    : mean_ensemble(per_spec).top());
        }
    } else {
        const FilterModel filter = load_filter(cfg, a);
        const FoldEnsemble four{load_fold_models(cfg, a, true)};
        for (const auto& inst : ds.instances()) {
            preds.push_back(two_stage_predict(filter, four, inst).label);
        }
    }
    const fs::path out = !out_path.empty()
                             ? fs::path(out_path)
                             : out_dir(cfg) / ("predictions_method" + std::to_string(method) + ".csv");
    write_predictions(out, ds, preds);
    write_manifest(cfg, "predict_method" + std::to_string(method), {"input=" + in_path});
    log << "predict: method " << method << ", " << ds.size() << " rows -> " << out.string() << '\n';
}

inline void cmd_evaluate(const std::string& gold_path, const std::string& pred_path,
                         const std::string& out_path, std::ostream& log) {
    const Dataset gold = load_dataset(gold_path, true, Provenance::Val);
    const auto preds = read_predictions(pred_path);
    std::vector<Label> g, p;
    for (const auto& inst : gold.instances()) {
        const auto it = preds.find(inst.id);
        if (it == preds.end()) {
            throw DataError(pred_path + ": no prediction for id '" + inst.id + "'");
        }
        g.push_back(*inst.label);
        p.push_back(it->second);
    }
    const auto report = make_report(confusion(g, p), kAllLabels);
    write_metrics_table(log, report);
    if (!out_path.empty()) {
        std::ofstream out(out_path, std::ios::binary);
        if (!out) {
            throw DataError("cannot write '" + out_path + "'");
        }
        write_metrics_csv(out, report);
    }
}

} // namespace detail

// Parses and dispatches. Diagnostics go to `err`, progress to `out`.
inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"clozefact: prompt-based multimodal fact-verification pipeline", "clozefact"};
    app.require_subcommand(1);
    app.set_version_flag("--version", CLOZEFACT_VERSION);

    std::string config_path;
    auto add_config = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config_path, "run configuration file")->required();
    };

    detail::SynthOptions synth;
    auto* s_synth = app.add_subcommand("synth", "write a synthetic separable corpus");
    s_synth->add_option("--out", synth.out, "output CSV")->required();
    s_synth->add_option("--classes", synth.spec.classes)->capture_default_str();
    s_synth->add_option("--per-class", synth.spec.per_class)->capture_default_str();
    s_synth->add_option("--vocab-size", synth.spec.vocab_size)->capture_default_str();
    s_synth->add_option("--seed", synth.spec.seed)->capture_default_str();
    s_synth->add_option("--id-prefix", synth.spec.id_prefix)->capture_default_str();
    s_synth->add_flag("--unlabeled", synth.unlabeled, "omit the category column");

    auto* s_pre = app.add_subcommand("pretrain", "build the vocabulary and pretrain the encoder");
    add_config(s_pre);

    bool four = false;
    auto* s_fine = app.add_subcommand("finetune", "k-fold finetuning with out-of-fold predictions");
    add_config(s_fine);
    s_fine->add_flag("--four-class", four, "train the non-Refute 4-way stage");

    std::string apply;
    auto* s_prompt = app.add_subcommand("prompt-filter", "train or apply the Refute filter");
    add_config(s_prompt);
    s_prompt->add_option("--apply", apply, "score this dataset instead of training");

    auto* s_ens = app.add_subcommand("ensemble", "train the stacker on out-of-fold predictions");
    add_config(s_ens);

    int method = 1;
    std::string input, pred_out;
    auto* s_pred = app.add_subcommand("predict", "write id,category predictions");
    add_config(s_pred);
    s_pred->add_option("--method", method, "1 = stacked ensemble, 2 = two-stage")
        ->check(CLI::IsMember({1, 2}))
        ->capture_default_str();
    s_pred->add_option("--input", input, "dataset to predict (default paths.test)");
    s_pred->add_option("--out", pred_out, "output CSV");

    std::string gold, pred, metrics_out;
    auto* s_eval = app.add_subcommand("evaluate", "score predictions against gold labels");
    s_eval->add_option("--gold", gold)->required();
    s_eval->add_option("--pred", pred)->required();
    s_eval->add_option("--out", metrics_out, "metrics CSV");

    try {
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (s_synth->parsed()) {
            detail::cmd_synth(synth, out);
        } else if (s_eval->parsed()) {
            detail::cmd_evaluate(gold, pred, metrics_out, out);
        } else {
            const RunConfig cfg = load_config(config_path);
            if (s_pre->parsed()) {
                detail::cmd_pretrain(cfg, out);
            } else if (s_fine->parsed()) {
                detail::cmd_finetune(cfg, four, out);
            } else if (s_prompt->parsed()) {
                detail::cmd_prompt_filter(cfg, apply, out);
            } else if (s_ens->parsed()) {
                detail::cmd_ensemble(cfg, out);
            } else if (s_pred->parsed()) {
                detail::cmd_predict(cfg, method, input, pred_out, out);
            }
        }
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitOk;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) {
        args.emplace_back(argv[i]);
    }
    return run(std::move(args), out, err);
}

} // namespace clozefact::cli
