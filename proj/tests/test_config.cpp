#include <gtest/gtest.h>

#include <sstream>
#include <string>

#include "clozefact/config.hpp"

using namespace clozefact;

namespace {

RunConfig parse(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in, "test.ini");
}

std::string usage_message(const std::string& text) {
    try {
        parse(text);
    } catch (const UsageError& e) {
        return e.what();
    }
    return "<no error>";
}

} // namespace

TEST(Config, Defaults) {
    const RunConfig c = parse("");
    EXPECT_EQ(c.pretrain.total_steps, 3000u);
    EXPECT_EQ(c.pretrain.batch_size, 64u);
    EXPECT_EQ(c.pretrain.warmup_steps, 500u);
    EXPECT_DOUBLE_EQ(c.pretrain.peak_lr, 1e-4);
    EXPECT_EQ(c.pretrain.schedule, ScheduleKind::WarmupLinear);
    EXPECT_EQ(c.finetune.total_steps, 2000u);
    EXPECT_EQ(c.finetune.batch_size, 32u);
    EXPECT_EQ(c.finetune.warmup_steps, 100u);
    EXPECT_DOUBLE_EQ(c.finetune.peak_lr, 5e-6);
    EXPECT_EQ(c.finetune.schedule, ScheduleKind::WarmupCosine);
    EXPECT_DOUBLE_EQ(c.masking.select_fraction, 0.15);
    EXPECT_DOUBLE_EQ(c.masking.mask_fraction, 0.80);
    EXPECT_EQ(c.folds, 5u);
    EXPECT_EQ(c.snapshot_cycles, 1u);
    EXPECT_DOUBLE_EQ(c.prompt.threshold, 0.5);
    EXPECT_EQ(c.prompt.template_pattern, "<INPUT>. The statement is <MASK>");
    EXPECT_EQ(c.prompt.negative_words,
              (std::vector<std::string>{"false", "irrelevant", "incorrect"}));
    EXPECT_EQ(c.model_seeds.size(), 4u);
}

TEST(Config, ParsesValues) {
    const RunConfig c = parse(R"(
# comment
; also a comment
[paths]
train = data/train.csv
output_dir = results

[encoder]
d_model = 32
dropout = 0.25

[finetune]
steps = 150
peak_lr = 1e-3
snapshot_cycles = 3

[prompt]
negative_words = no , wrong
threshold = 0.7

[models]
seeds = 5, 6 ,7
)");
    EXPECT_EQ(c.train_path, "data/train.csv");
    EXPECT_EQ(c.output_dir, "results");
    EXPECT_EQ(c.encoder.d_model, 32u);
    EXPECT_DOUBLE_EQ(c.encoder.dropout_rate, 0.25);
    EXPECT_EQ(c.finetune.total_steps, 150u);
    EXPECT_DOUBLE_EQ(c.finetune.peak_lr, 1e-3);
    EXPECT_EQ(c.snapshot_cycles, 3u);
    EXPECT_EQ(c.prompt.negative_words, (std::vector<std::string>{"no", "wrong"}));
    EXPECT_DOUBLE_EQ(c.prompt.threshold, 0.7);
    EXPECT_EQ(c.model_seeds, (std::vector<std::uint64_t>{5, 6, 7}));
}

TEST(Config, Errors) {
    EXPECT_NE(usage_message("[encoder]\nwidth = 3\n").find("unknown key 'encoder.width'"),
              std::string::npos);
    const auto dup = usage_message("[encoder]\nd_model = 3\n\nd_model = 4\n");
    EXPECT_NE(dup.find("line 4"), std::string::npos) << dup;
    EXPECT_NE(dup.find("line 2"), std::string::npos) << dup;
    EXPECT_NE(usage_message("[encoder]\nd_model = 3x\n").find("invalid number"),
              std::string::npos);
    EXPECT_NE(usage_message("[encoder]\nd_model = -3\n").find("invalid number"),
              std::string::npos);
    EXPECT_NE(usage_message("d_model = 3\n").find("outside"), std::string::npos);
    EXPECT_NE(usage_message("[models]\nseeds =\n").find("at least one"), std::string::npos);
    EXPECT_NE(usage_message("[models]\nseeds = 1,,2\n").find("invalid number"),
              std::string::npos);
    EXPECT_NE(usage_message("[encoder\n").find("unterminated"), std::string::npos);
    EXPECT_NE(usage_message("[]\n").find("empty section"), std::string::npos);
    EXPECT_NE(usage_message("[encoder]\nd_model\n").find("key = value"), std::string::npos);
    EXPECT_NE(usage_message("[nosuch]\nx = 1\n").find("unknown key"), std::string::npos);
    EXPECT_THROW(load_config("/nonexistent/run.ini"), UsageError);
}

TEST(Config, CanonicalFormAndHash) {
    const RunConfig a = parse("[encoder]\nd_model = 32\n");
    const RunConfig b = parse("\n[encoder]\n   d_model=32   \n");
    EXPECT_EQ(a.canonical(), b.canonical());
    EXPECT_NE(a.canonical().find("encoder.d_model=32\n"), std::string::npos);
    const RunConfig c = parse("[encoder]\nd_model = 48\n");
    EXPECT_NE(fnv1a64(a.canonical()), fnv1a64(c.canonical()));

    // Reparsing the canonical text round-trips every value.
    std::string ini;
    std::string section;
    std::istringstream lines(a.canonical());
    for (std::string line; std::getline(lines, line);) {
        const auto dot = line.find('.');
        const auto sec = line.substr(0, dot);
        if (sec != section) {
            ini += "[" + sec + "]\n";
            section = sec;
        }
        ini += line.substr(dot + 1) + "\n";
    }
    EXPECT_EQ(parse(ini).canonical(), a.canonical());
}

TEST(Config, Fnv1a64KnownValues) {
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}
