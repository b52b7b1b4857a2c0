#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "clozefact/corpus.hpp"
#include "clozefact/prompt.hpp"

using namespace clozefact;

namespace {

Vocabulary prompt_vocab() {
    const std::vector<std::string> words{"x",     "y",        "z",    ".",         "the",
                                         "statement", "is",   "true", "relevant", "correct",
                                         "false", "irrelevant", "incorrect"};
    return Vocabulary(words);
}

std::vector<double> logits_for(const Vocabulary& v, std::vector<std::pair<std::string, double>> m) {
    std::vector<double> out(v.size(), -5.0);
    for (auto& [w, x] : m) {
        out[static_cast<std::size_t>(*v.find(w))] = x;
    }
    return out;
}

} // namespace

TEST(Template, ParsesSlots) {
    const PromptTemplate t;
    EXPECT_TRUE(t.input_first());
    EXPECT_EQ(t.literals()[0], "");
    EXPECT_EQ(t.literals()[1], ". The statement is ");
    EXPECT_EQ(t.literals()[2], "");
    const PromptTemplate r("Answer: <MASK> because <INPUT>");
    EXPECT_FALSE(r.input_first());
}

TEST(Template, RejectsMissingOrRepeatedSlots) {
    EXPECT_THROW(PromptTemplate("<INPUT> only"), std::invalid_argument);
    EXPECT_THROW(PromptTemplate("<MASK> only"), std::invalid_argument);
    EXPECT_THROW(PromptTemplate("<INPUT> <INPUT> <MASK>"), std::invalid_argument);
}

TEST(Template, DefaultLayout) {
    const Vocabulary v = prompt_vocab();
    const auto seq = apply_template(PromptTemplate{}, "X", v, 12);
    EXPECT_EQ(decode(v, seq.ids), "x . the statement is");
    const std::vector<TokenId> expect{kClsId,         *v.find("x"),  *v.find("."), *v.find("the"),
                                      *v.find("statement"), *v.find("is"), kMaskId, kSepId};
    EXPECT_EQ(std::vector<TokenId>(seq.ids.begin(), seq.ids.begin() + 8), expect);
    ASSERT_TRUE(seq.mask_position);
    EXPECT_EQ(*seq.mask_position, 6u);
    EXPECT_EQ(seq.ids[*seq.mask_position], kMaskId);
}

// However long the input, the template suffix and mask survive at the end.
TEST(Template, SuffixPreservedForLongInputs) {
    const Vocabulary v = prompt_vocab();
    const std::size_t max_len = 16;
    for (std::size_t n = 0; n <= 10 * max_len; n += 7) {
        std::string text;
        for (std::size_t i = 0; i < n; ++i) {
            text += (i % 2 ? "y " : "z ");
        }
        const auto seq = apply_template(PromptTemplate{}, text, v, max_len);
        ASSERT_EQ(seq.length(), max_len);
        const std::size_t real = seq.real_length();
        ASSERT_GE(real, 7u);
        EXPECT_EQ(seq.ids[real - 1], kSepId);
        EXPECT_EQ(seq.ids[real - 2], kMaskId);
        EXPECT_EQ(seq.ids[real - 3], *v.find("is"));
        EXPECT_EQ(seq.ids[real - 6], *v.find("."));
        EXPECT_EQ(*seq.mask_position, real - 2);
        EXPECT_EQ(seq, apply_template(PromptTemplate{}, text, v, max_len));
    }
}

TEST(Template, TooShortMaxLenThrows) {
    EXPECT_THROW(apply_template(PromptTemplate{}, "x", prompt_vocab(), 6), std::invalid_argument);
}

TEST(Verbalizer, ResolvesDefaultWords) {
    const Vocabulary v = prompt_vocab();
    const auto verb = Verbalizer::defaults(v);
    ASSERT_EQ(verb.ids().size(), 6u);
    EXPECT_EQ(verb.negative_ids()[0], *v.find("false"));
    EXPECT_EQ(verb.positive_ids()[0], *v.find("true"));
}

TEST(Verbalizer, Errors) {
    const Vocabulary v = prompt_vocab();
    EXPECT_THROW(Verbalizer({"false"}, {"missing"}, v), std::invalid_argument);
    EXPECT_THROW(Verbalizer({"false"}, {"false"}, v), std::invalid_argument);
    EXPECT_THROW(Verbalizer({"not true"}, {"true"}, v), std::invalid_argument);
    EXPECT_THROW(Verbalizer({}, {"true"}, v), std::invalid_argument);
    EXPECT_THROW(Verbalizer({"False"}, {"FALSE", "true"}, v), std::invalid_argument);
}

TEST(AnswerMap, SummationOracle) {
    const Vocabulary v = prompt_vocab();
    const auto verb = Verbalizer::defaults(v);
    const auto logits = logits_for(v, {{"true", std::log(0.3)},
                                       {"correct", std::log(0.2)},
                                       {"relevant", std::log(0.1)},
                                       {"false", std::log(0.1)},
                                       {"incorrect", std::log(0.1)},
                                       {"irrelevant", std::log(0.2)}});
    const auto p = answer_map(logits, verb);
    EXPECT_NEAR(p.p_positive, 0.6, 1e-12);
    EXPECT_NEAR(p.p_negative, 0.4, 1e-12);
}

TEST(AnswerMap, EdgeCases) {
    const Vocabulary v = prompt_vocab();
    const auto verb = Verbalizer::defaults(v);
    const auto all_false = logits_for(v, {{"false", 800.0}});
    EXPECT_NEAR(answer_map(all_false, verb).p_negative, 1.0, 1e-12);
    const std::vector<double> flat(v.size(), 0.25);
    const auto even = answer_map(flat, verb);
    EXPECT_NEAR(even.p_negative, 0.5, 1e-12);
    EXPECT_NEAR(even.p_positive, 0.5, 1e-12);
    EXPECT_THROW(answer_map(std::vector<double>(3, 0.0), verb), std::invalid_argument);
}

TEST(AnswerMap, SumsToOneShiftInvariantAndMonotone) {
    const Vocabulary v = prompt_vocab();
    const auto verb = Verbalizer::defaults(v);
    Rng rng = make_rng(9);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> logits(v.size());
        for (double& x : logits) {
            x = 3.0 * standard_normal(rng);
        }
        const auto p = answer_map(logits, verb);
        EXPECT_NEAR(p.p_negative + p.p_positive, 1.0, 1e-9);
        auto shifted = logits;
        for (double& x : shifted) {
            x += 17.5;
        }
        const auto q = answer_map(shifted, verb);
        EXPECT_NEAR(p.p_negative, q.p_negative, 1e-12);
        EXPECT_EQ(decide(p, 0.5), decide(q, 0.5));
        auto bumped = logits;
        bumped[static_cast<std::size_t>(verb.negative_ids()[trial % 3])] += 0.5;
        EXPECT_GE(answer_map(bumped, verb).p_negative, p.p_negative);
    }
}

TEST(Decide, StrictThreshold) {
    EXPECT_EQ(decide({1.0, 0.0}, 0.5), FilterDecision::Refute);
    EXPECT_EQ(decide({0.5, 0.5}, 0.5), FilterDecision::Other);
    EXPECT_EQ(decide({0.3, 0.7}, 0.2), FilterDecision::Refute);
}

TEST(BinaryTarget, RefuteIsNegative) {
    EXPECT_TRUE(binary_target_negative(Label::Refute));
    for (Label l : kNonRefuteLabels) {
        EXPECT_FALSE(binary_target_negative(l));
    }
}

namespace {

struct FilterFixture {
    Dataset ds = generate_synthetic({5, 24, 120, 3});
    std::shared_ptr<const Vocabulary> vocab;
    EncoderConfig cfg;
    FilterConfig fc;

    FilterFixture() {
        std::vector<std::string> texts;
        for (const auto& i : ds.instances()) {
            texts.push_back(preprocess_instance(i));
        }
        const std::vector<std::string> forced{". the statement is", "true relevant correct",
                                              "false irrelevant incorrect"};
        vocab = std::make_shared<const Vocabulary>(build_vocab(texts, 1000, 1, forced));
        cfg.vocab_size = vocab->size();
        cfg.max_len = 24;
        cfg.d_model = 16;
        cfg.n_heads = 2;
        cfg.n_layers = 1;
        cfg.d_ff = 32;
        fc.train.total_steps = 300;
        fc.train.warmup_steps = 30;
        fc.train.batch_size = 8;
        fc.train.peak_lr = 3e-3;
    }
};

} // namespace

TEST(FilterTrain, LearnsNegationMarkersDeterministically) {
    FilterFixture f;
    const auto init = init_params(f.cfg, 1);
    const auto a = refute_filter_train(f.ds, init, f.vocab, f.fc);
    const auto b = refute_filter_train(f.ds, init, f.vocab, f.fc);
    EXPECT_EQ(a.model.params, b.model.params);
    ASSERT_EQ(a.trace.size(), 300u);
    std::size_t correct = 0;
    for (const auto& inst : f.ds.instances()) {
        const auto r = refute_filter_predict(a.model, inst);
        EXPECT_NEAR(r.prediction.p_negative + r.prediction.p_positive, 1.0, 1e-9);
        correct += (r.decision == FilterDecision::Refute) == (*inst.label == Label::Refute);
    }
    EXPECT_GE(static_cast<double>(correct) / static_cast<double>(f.ds.size()), 0.95);
}

TEST(FilterTrain, RequiresRefuteInstances) {
    FilterFixture f;
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < f.ds.size(); ++i) {
        if (*f.ds[i].label != Label::Refute) {
            keep.push_back(i);
        }
    }
    EXPECT_THROW(refute_filter_train(f.ds.subset(keep), init_params(f.cfg, 1), f.vocab, f.fc),
                 DataError);
}

TEST(FilterTrain, ThresholdOverride) {
    FilterFixture f;
    f.fc.train.total_steps = 5;
    f.fc.train.warmup_steps = 1;
    const auto a = refute_filter_train(f.ds, init_params(f.cfg, 1), f.vocab, f.fc);
    const auto& inst = f.ds[0];
    EXPECT_EQ(refute_filter_predict(a.model, inst, -0.1).decision, FilterDecision::Refute);
    EXPECT_EQ(refute_filter_predict(a.model, inst, 1.0).decision, FilterDecision::Other);
}
