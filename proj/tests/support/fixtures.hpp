#pragma once

// Small synthetic corpora and encoder shapes shared by the training tests.

#include <memory>
#include <string>
#include <vector>

#include "clozefact/corpus.hpp"
#include "clozefact/encoder.hpp"
#include "clozefact/tokenizer.hpp"

namespace clozefact::testing {

inline std::shared_ptr<const Vocabulary> vocab_for(const Dataset& ds) {
    std::vector<std::string> texts;
    for (const auto& i : ds.instances()) {
        texts.push_back(preprocess_instance(i));
    }
    const std::vector<std::string> forced{". the statement is", "true relevant correct",
                                          "false irrelevant incorrect"};
    return std::make_shared<const Vocabulary>(build_vocab(texts, 5000, 1, forced));
}

inline EncoderConfig small_encoder(std::size_t vocab_size, std::size_t n_classes = 5) {
    EncoderConfig c;
    c.vocab_size = vocab_size;
    c.max_len = 24;
    c.d_model = 16;
    c.n_heads = 2;
    c.n_layers = 1;
    c.d_ff = 32;
    c.n_classes = n_classes;
    return c;
}

inline Dataset without_refute(const Dataset& ds) {
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (*ds[i].label != Label::Refute) {
            keep.push_back(i);
        }
    }
    return ds.subset(keep);
}

} // namespace clozefact::testing
