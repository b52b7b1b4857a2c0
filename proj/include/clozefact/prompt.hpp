#pragma once

// Cloze-style refute filter: the claim is wrapped in a template with one
// mask slot, the MLM head scores a small set of label words at that slot,
// and the word probabilities are summed per class.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "clozefact/corpus.hpp"
#include "clozefact/encoder.hpp"
#include "clozefact/optim.hpp"
#include "clozefact/tokenizer.hpp"
#include "clozefact/training.hpp"

namespace clozefact {

inline constexpr std::string_view kInputSlot = "<INPUT>";
inline constexpr std::string_view kMaskSlot = "<MASK>";
inline constexpr std::string_view kDefaultTemplate = "<INPUT>. The statement is <MASK>";

class PromptTemplate {
public:
    explicit PromptTemplate(std::string pattern = std::string(kDefaultTemplate))
        : pattern_(std::move(pattern)) {
        const auto count = [&](std::string_view slot) {
            std::size_t n = 0;
            for (auto pos = pattern_.find(slot); pos != std::string::npos;
                 pos = pattern_.find(slot, pos + slot.size())) {
                ++n;
            }
            return n;
        };
        if (count(kInputSlot) != 1 || count(kMaskSlot) != 1) {
            throw std::invalid_argument("prompt template must contain exactly one " +
                                        std::string(kInputSlot) + " and one " +
                                        std::string(kMaskSlot) + ": '" + pattern_ + "'");
        }
        const auto in_pos = pattern_.find(kInputSlot);
        const auto mask_pos = pattern_.find(kMaskSlot);
        input_first_ = in_pos < mask_pos;
        const auto first = std::min(in_pos, mask_pos);
        const auto first_len = input_first_ ? kInputSlot.size() : kMaskSlot.size();
        const auto second = std::max(in_pos, mask_pos);
        const auto second_len = input_first_ ? kMaskSlot.size() : kInputSlot.size();
        literals_[0] = pattern_.substr(0, first);
        literals_[1] = pattern_.substr(first + first_len, second - first - first_len);
        literals_[2] = pattern_.substr(second + second_len);
    }

    const std::string& pattern() const noexcept { return pattern_; }
    bool input_first() const noexcept { return input_first_; }
    // Text before the first slot, between the slots, after the second.
    const std::array<std::string, 3>& literals() const noexcept { return literals_; }

    // All template words, for forcing them into a vocabulary.
    std::string literal_text() const { return literals_[0] + " " + literals_[1] + " " + literals_[2]; }

private:
    std::string pattern_;
    bool input_first_ = true;
    std::array<std::string, 3> literals_;
};

// Fills the template. If the prompt does not fit, the input text is cut from
// its right end; the template words and the mask slot are always kept.
inline TokenSequence apply_template(const PromptTemplate& tmpl, std::string_view text,
                                    const Vocabulary& vocab, std::size_t max_len) {
    const auto& lit = tmpl.literals();
    std::array<std::vector<TokenId>, 3> parts;
    for (std::size_t i = 0; i < 3; ++i) {
        parts[i] = map_words(vocab, lit[i]);
    }
    const std::size_t fixed = parts[0].size() + parts[1].size() + parts[2].size() + 1;
    if (max_len < fixed + 2) {
        throw std::invalid_argument("apply_template: template needs " + std::to_string(fixed + 2) +
                                    " positions but max_len is " + std::to_string(max_len));
    }
    auto input = map_words(vocab, text);
    input.resize(std::min(input.size(), max_len - 2 - fixed));

    std::vector<TokenId> content(parts[0]);
    const std::vector<TokenId> mask{kMaskId};
    const auto& a = tmpl.input_first() ? input : mask;
    const auto& b = tmpl.input_first() ? mask : input;
    content.insert(content.end(), a.begin(), a.end());
    content.insert(content.end(), parts[1].begin(), parts[1].end());
    content.insert(content.end(), b.begin(), b.end());
    content.insert(content.end(), parts[2].begin(), parts[2].end());
    return pack_sequence(content, max_len);
}

inline const std::vector<std::string> kDefaultNegativeWords = {"false", "irrelevant", "incorrect"};
inline const std::vector<std::string> kDefaultPositiveWords = {"true", "relevant", "correct"};

// Label words resolved to single vocabulary ids. Negative words stand for
// the Refute class, positive words for everything else.
class Verbalizer {
public:
    Verbalizer(std::vector<std::string> negative, std::vector<std::string> positive,
               const Vocabulary& vocab)
        : negative_words_(std::move(negative)), positive_words_(std::move(positive)) {
        if (negative_words_.empty() || positive_words_.empty()) {
            throw std::invalid_argument("verbalizer: both label-word sets must be nonempty");
        }
        for (const auto& w : negative_words_) {
            if (std::find(positive_words_.begin(), positive_words_.end(), w) !=
                positive_words_.end()) {
                throw std::invalid_argument("verbalizer: word '" + w + "' in both sets");
            }
        }
        auto resolve = [&](const std::string& w) {
            const auto toks = split_words(w);
            if (toks.size() != 1) {
                throw std::invalid_argument("verbalizer: label word '" + w +
                                            "' is not a single token");
            }
            const auto id = vocab.find(toks[0]);
            if (!id) {
                throw std::invalid_argument("verbalizer: label word '" + w +
                                            "' missing from vocabulary");
            }
            return *id;
        };
        for (const auto& w : negative_words_) {
            negative_ids_.push_back(resolve(w));
        }
        for (const auto& w : positive_words_) {
            positive_ids_.push_back(resolve(w));
        }
        std::vector<TokenId> all = ids();
        std::sort(all.begin(), all.end());
        if (std::adjacent_find(all.begin(), all.end()) != all.end()) {
            throw std::invalid_argument("verbalizer: label words must be distinct tokens");
        }
    }

    static Verbalizer defaults(const Vocabulary& vocab) {
        return Verbalizer(kDefaultNegativeWords, kDefaultPositiveWords, vocab);
    }

    std::span<const TokenId> negative_ids() const noexcept { return negative_ids_; }
    std::span<const TokenId> positive_ids() const noexcept { return positive_ids_; }
    const std::vector<std::string>& negative_words() const noexcept { return negative_words_; }
    const std::vector<std::string>& positive_words() const noexcept { return positive_words_; }

    // Negative ids followed by positive ids.
    std::vector<TokenId> ids() const {
        std::vector<TokenId> all(negative_ids_);
        all.insert(all.end(), positive_ids_.begin(), positive_ids_.end());
        return all;
    }

private:
    std::vector<std::string> negative_words_;
    std::vector<std::string> positive_words_;
    std::vector<TokenId> negative_ids_;
    std::vector<TokenId> positive_ids_;
};

struct BinaryPrediction {
    double p_negative = 0.5;
    double p_positive = 0.5;
};

// Softmax restricted to the label words, then summed per class.
inline BinaryPrediction answer_map(std::span<const double> mask_logits, const Verbalizer& verb) {
    const auto ids = verb.ids();
    std::vector<double> restricted;
    restricted.reserve(ids.size());
    for (TokenId id : ids) {
        if (static_cast<std::size_t>(id) >= mask_logits.size()) {
            throw std::invalid_argument("answer_map: label word id " + std::to_string(id) +
                                        " outside logit vector");
        }
        restricted.push_back(mask_logits[static_cast<std::size_t>(id)]);
    }
    const auto q = softmax(restricted);
    BinaryPrediction out{0.0, 0.0};
    const std::size_t n_neg = verb.negative_ids().size();
    for (std::size_t i = 0; i < q.size(); ++i) {
        (i < n_neg ? out.p_negative : out.p_positive) += q[i];
    }
    return out;
}

enum class FilterDecision { Refute, Other };

inline FilterDecision decide(const BinaryPrediction& p, double threshold) {
    return p.p_negative > threshold ? FilterDecision::Refute : FilterDecision::Other;
}

// True when the instance belongs to the negative (Refute) side.
inline bool binary_target_negative(Label l) noexcept { return l == Label::Refute; }

struct FilterConfig {
    TrainConfig train = finetune_defaults();
    std::string template_pattern = std::string(kDefaultTemplate);
    std::vector<std::string> negative_words = kDefaultNegativeWords;
    std::vector<std::string> positive_words = kDefaultPositiveWords;
    double threshold = 0.5;
};

struct FilterModel {
    EncoderParams params;
    std::shared_ptr<const Vocabulary> vocab;
    PromptTemplate tmpl;
    Verbalizer verbalizer;
    double threshold = 0.5;
};

struct FilterResult {
    FilterDecision decision = FilterDecision::Other;
    BinaryPrediction prediction;
};

inline BinaryPrediction filter_score(const FilterModel& model, const Instance& inst) {
    const auto seq = apply_template(model.tmpl, preprocess_instance(inst), *model.vocab,
                                    model.params.config.max_len);
    const HiddenStates h = forward(model.params, std::span<const TokenSequence>(&seq, 1), false);
    const std::size_t pos = *seq.mask_position;
    const auto logits = mlm_logits(model.params, h[0], std::span<const std::size_t>(&pos, 1));
    return answer_map(logits[0], model.verbalizer);
}

inline FilterResult refute_filter_predict(const FilterModel& model, const Instance& inst,
                                          double threshold) {
    const auto p = filter_score(model, inst);
    return {decide(p, threshold), p};
}

inline FilterResult refute_filter_predict(const FilterModel& model, const Instance& inst) {
    return refute_filter_predict(model, inst, model.threshold);
}

struct FilterTrainResult {
    FilterModel model;
    std::vector<TraceRow> trace;
};

// Finetunes the MLM head through the template. Target mass is split evenly
// over the label words of the instance's binary class; the loss is the
// cross-entropy against the label-word-restricted softmax.
inline FilterTrainResult refute_filter_train(const Dataset& train, const EncoderParams& init,
                                             std::shared_ptr<const Vocabulary> vocab,
                                             const FilterConfig& cfg) {
    cfg.train.validate();
    const auto labels = train.labels();
    if (std::none_of(labels.begin(), labels.end(), binary_target_negative)) {
        throw DataError("refute_filter_train: training data contains no Refute instance");
    }
    if (init.config.vocab_size != vocab->size()) {
        throw std::invalid_argument("refute_filter_train: vocabulary size mismatch");
    }
    PromptTemplate tmpl(cfg.template_pattern);
    Verbalizer verb(cfg.negative_words, cfg.positive_words, *vocab);
    const auto ids = verb.ids();
    const std::size_t n_neg = verb.negative_ids().size();
    const std::size_t n_pos = verb.positive_ids().size();

    std::vector<TokenSequence> seqs;
    seqs.reserve(train.size());
    for (const auto& inst : train.instances()) {
        seqs.push_back(apply_template(tmpl, preprocess_instance(inst), *vocab, init.config.max_len));
    }

    FilterTrainResult res{FilterModel{init, vocab, tmpl, verb, cfg.threshold}, {}};
    EncoderParams& params = res.model.params;
    AdamWState<EncoderParams> state(params);
    const AdamWHyper hyper = cfg.train.adamw();
    const ScheduleConfig sched = cfg.train.schedule_config();
    BatchSampler sampler(seqs.size(), derive_seed(cfg.train.seed, 0x70726f6dULL));

    std::vector<TokenSequence> batch;
    std::vector<std::size_t> batch_idx;
    for (std::size_t step = 0; step < cfg.train.total_steps; ++step) {
        batch_idx = sampler.next(cfg.train.batch_size);
        batch.clear();
        for (std::size_t i : batch_idx) {
            batch.push_back(seqs[i]);
        }
        const double lr = learning_rate(step + 1, sched);
        Rng drop_rng = make_rng(cfg.train.seed, 0x2000000 + step);
        ForwardTape tape;
        const HiddenStates hidden = forward(params, batch, true, &drop_rng, &tape);
        Gradients grads = zero_grads_like(params);
        auto dhidden = zero_hidden_grads(hidden);
        const double w = 1.0 / static_cast<double>(batch.size());
        double loss = 0.0;
        for (std::size_t b = 0; b < batch.size(); ++b) {
            const std::size_t pos = *batch[b].mask_position;
            auto logits = mlm_logits(params, hidden[b], std::span<const std::size_t>(&pos, 1));
            std::vector<double> restricted;
            for (TokenId id : ids) {
                restricted.push_back(logits[0][static_cast<std::size_t>(id)]);
            }
            const auto q = softmax(restricted);
            const bool negative = binary_target_negative(labels[batch_idx[b]]);
            std::vector<std::vector<double>> dlogits(1,
                                                     std::vector<double>(params.config.vocab_size));
            for (std::size_t i = 0; i < ids.size(); ++i) {
                const bool word_negative = i < n_neg;
                const double target =
                    word_negative == negative ? 1.0 / static_cast<double>(negative ? n_neg : n_pos)
                                              : 0.0;
                if (target > 0.0) {
                    loss -= target * std::log(q[i]);
                }
                dlogits[0][static_cast<std::size_t>(ids[i])] = w * (q[i] - target);
            }
            mlm_head_backward(params, hidden[b], std::span<const std::size_t>(&pos, 1), dlogits,
                              grads, dhidden[b]);
        }
        backward(params, tape, dhidden, grads);
        adamw_step(params, grads, state, hyper, lr);
        res.trace.push_back({step + 1, lr, loss * w});
    }
    return res;
}

} // namespace clozefact
