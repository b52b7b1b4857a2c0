#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "clozefact/corpus.hpp"
#include "clozefact/encoder.hpp"
#include "clozefact/optim.hpp"
#include "clozefact/random.hpp"
#include "clozefact/tokenizer.hpp"
#include "clozefact/training.hpp"

namespace clozefact {

struct MaskingConfig {
    double select_fraction = 0.15;
    double mask_fraction = 0.80;
    double random_fraction = 0.10;
    double keep_fraction = 0.10;

    void validate() const {
        if (!(select_fraction > 0.0 && select_fraction < 1.0)) {
            throw std::invalid_argument("MaskingConfig: select_fraction must be in (0, 1)");
        }
        if (mask_fraction < 0.0 || random_fraction < 0.0 || keep_fraction < 0.0 ||
            std::abs(mask_fraction + random_fraction + keep_fraction - 1.0) > 1e-12) {
            throw std::invalid_argument(
                "MaskingConfig: mask/random/keep fractions must be non-negative and sum to 1");
        }
    }
};

enum class Corruption : std::uint8_t { Masked, Random, Kept };

struct MaskedBatch {
    std::vector<TokenSequence> sequences;             // corrupted copies
    std::vector<std::vector<std::size_t>> positions;  // selected positions per sequence
    std::vector<std::vector<TokenId>> originals;      // true ids at those positions
    std::vector<std::vector<Corruption>> corruptions; // what happened at each position
    std::vector<std::string> warnings;

    std::size_t selected_count() const {
        std::size_t n = 0;
        for (const auto& p : positions) {
            n += p.size();
        }
        return n;
    }
};

// Number of positions chosen out of m maskable ones.
inline std::size_t masked_count(std::size_t maskable, double select_fraction) {
    if (maskable == 0) {
        return 0;
    }
    const auto k = static_cast<std::size_t>(
        std::llround(select_fraction * static_cast<double>(maskable)));
    return std::clamp<std::size_t>(k, 1, maskable);
}

// Maskable = real token that is not one of the reserved ids.
inline bool is_maskable(const TokenSequence& seq, std::size_t t) {
    return seq.attention_mask[t] != 0 && !is_reserved(seq.ids[t]);
}

inline MaskedBatch apply_masking(std::span<const TokenSequence> batch, const MaskingConfig& cfg,
                                 std::size_t vocab_size, Rng& rng) {
    cfg.validate();
    if (batch.empty()) {
        throw std::invalid_argument("apply_masking: empty batch");
    }
    if (vocab_size <= static_cast<std::size_t>(kNumReserved)) {
        throw std::invalid_argument("apply_masking: vocabulary has no ordinary tokens");
    }
    const std::uint64_t n_ordinary = vocab_size - kNumReserved;
    MaskedBatch mb;
    mb.sequences.assign(batch.begin(), batch.end());
    mb.positions.resize(batch.size());
    mb.originals.resize(batch.size());
    mb.corruptions.resize(batch.size());
    for (std::size_t s = 0; s < batch.size(); ++s) {
        auto& seq = mb.sequences[s];
        std::vector<std::size_t> candidates;
        for (std::size_t t = 0; t < seq.ids.size(); ++t) {
            if (is_maskable(seq, t)) {
                candidates.push_back(t);
            }
        }
        if (candidates.empty()) {
            mb.warnings.push_back("sequence " + std::to_string(s) +
                                  " has no maskable positions; skipped");
            continue;
        }
        const std::size_t k = masked_count(candidates.size(), cfg.select_fraction);
        // Partial Fisher-Yates: the first k entries become a uniform sample.
        for (std::size_t i = 0; i < k; ++i) {
            const auto j = i + static_cast<std::size_t>(uniform_below(rng, candidates.size() - i));
            std::swap(candidates[i], candidates[j]);
        }
        candidates.resize(k);
        std::sort(candidates.begin(), candidates.end());
        for (std::size_t pos : candidates) {
            mb.positions[s].push_back(pos);
            mb.originals[s].push_back(seq.ids[pos]);
            const double u = uniform01(rng);
            if (u < cfg.mask_fraction) {
                seq.ids[pos] = kMaskId;
                mb.corruptions[s].push_back(Corruption::Masked);
            } else if (u < cfg.mask_fraction + cfg.random_fraction) {
                seq.ids[pos] = static_cast<TokenId>(kNumReserved + uniform_below(rng, n_ordinary));
                mb.corruptions[s].push_back(Corruption::Random);
            } else {
                mb.corruptions[s].push_back(Corruption::Kept);
            }
        }
    }
    return mb;
}

// Mean categorical cross-entropy over the selected positions.
inline double mlm_loss(std::span<const std::vector<double>> logits,
                       std::span<const TokenId> originals) {
    if (logits.empty()) {
        throw std::invalid_argument("mlm_loss: no selected positions");
    }
    if (logits.size() != originals.size()) {
        throw std::invalid_argument("mlm_loss: one logit vector per selected position required");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const auto target = static_cast<std::size_t>(originals[i]);
        total += log_sum_exp(logits[i]) - logits[i][target];
    }
    return total / static_cast<double>(logits.size());
}

struct PretrainConfig {
    TrainConfig train = pretrain_defaults();
    MaskingConfig masking;
};

struct PretrainResult {
    EncoderParams params;
    std::vector<TraceRow> trace;
    std::size_t steps = 0; // optimizer updates applied
    std::vector<std::string> warnings;
};

inline std::vector<TokenSequence> encode_dataset(const Dataset& ds, const Vocabulary& vocab,
                                                 std::size_t max_len) {
    std::vector<TokenSequence> out;
    out.reserve(ds.size());
    for (const auto& inst : ds.instances()) {
        out.push_back(encode(vocab, preprocess_instance(inst), max_len));
    }
    return out;
}

// One MLM training step on already-encoded sequences. Returns the batch loss.
inline double mlm_train_step(EncoderParams& params, AdamWState<EncoderParams>& state,
                             const AdamWHyper& hyper, double lr,
                             std::span<const TokenSequence> batch, const MaskingConfig& masking,
                             Rng& mask_rng, Rng& drop_rng, std::vector<std::string>* warnings) {
    const MaskedBatch mb = apply_masking(batch, masking, params.config.vocab_size, mask_rng);
    if (warnings) {
        warnings->insert(warnings->end(), mb.warnings.begin(), mb.warnings.end());
    }
    const std::size_t n_sel = mb.selected_count();
    if (n_sel == 0) {
        return 0.0;
    }
    ForwardTape tape;
    const HiddenStates hidden = forward(params, mb.sequences, true, &drop_rng, &tape);
    Gradients grads = zero_grads_like(params);
    auto dhidden = zero_hidden_grads(hidden);
    const double w = 1.0 / static_cast<double>(n_sel);
    double loss = 0.0;
    for (std::size_t s = 0; s < mb.sequences.size(); ++s) {
        if (mb.positions[s].empty()) {
            continue;
        }
        auto logits = mlm_logits(params, hidden[s], mb.positions[s]);
        std::vector<std::vector<double>> dlogits(logits.size(),
                                                 std::vector<double>(params.config.vocab_size));
        for (std::size_t p = 0; p < logits.size(); ++p) {
            loss += softmax_xent(logits[p], static_cast<std::size_t>(mb.originals[s][p]), w,
                                 dlogits[p]);
        }
        mlm_head_backward(params, hidden[s], mb.positions[s], dlogits, grads, dhidden[s]);
    }
    backward(params, tape, dhidden, grads);
    adamw_step(params, grads, state, hyper, lr);
    return loss * w;
}

// Masked-language-model pretraining from a fresh initialization. Every
// iteration re-masks its batch with a stream derived from (seed, step).
// Updates are numbered 1..total_steps and update s uses the schedule at s.
inline PretrainResult pretrain(const Dataset& corpus, const Vocabulary& vocab,
                               const EncoderConfig& config, const PretrainConfig& cfg) {
    if (corpus.empty()) {
        throw DataError("pretrain: empty corpus");
    }
    cfg.train.validate();
    cfg.masking.validate();
    if (config.vocab_size != vocab.size()) {
        throw std::invalid_argument("pretrain: config vocab_size differs from vocabulary size");
    }
    const auto seqs = encode_dataset(corpus, vocab, config.max_len);
    PretrainResult res{init_params(config, cfg.train.seed), {}, 0, {}};
    AdamWState<EncoderParams> state(res.params);
    const AdamWHyper hyper = cfg.train.adamw();
    const ScheduleConfig sched = cfg.train.schedule_config();
    BatchSampler sampler(seqs.size(), cfg.train.seed);
    res.trace.reserve(cfg.train.total_steps);

    std::vector<TokenSequence> batch;
    for (std::size_t step = 0; step < cfg.train.total_steps; ++step) {
        batch.clear();
        for (std::size_t i : sampler.next(cfg.train.batch_size)) {
            batch.push_back(seqs[i]);
        }
        const double lr = learning_rate(step + 1, sched);
        Rng mask_rng = make_rng(cfg.train.seed, 2 * step + 0x1000);
        Rng drop_rng = make_rng(cfg.train.seed, 2 * step + 0x1001);
        const double loss = mlm_train_step(res.params, state, hyper, lr, batch, cfg.masking,
                                           mask_rng, drop_rng, &res.warnings);
        res.trace.push_back({step + 1, lr, loss});
    }
    res.steps = state.t;
    return res;
}

} // namespace clozefact
