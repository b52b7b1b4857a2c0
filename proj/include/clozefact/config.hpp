#pragma once

// Run configuration: a line-oriented `key = value` file grouped under
// `[section]` headers. `#` and `;` start comment lines. Unknown sections or
// keys and repeated keys are errors, reported with their line number.
// Every key has a default.

#include <cctype>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "clozefact/encoder.hpp"
#include "clozefact/error.hpp"
#include "clozefact/mlm.hpp"
#include "clozefact/prompt.hpp"
#include "clozefact/stacking.hpp"
#include "clozefact/training.hpp"

namespace clozefact {

struct RunConfig {
    // [paths]
    std::string train_path;
    std::string val_path;
    std::string test_path;
    std::string output_dir = "out";

    // [vocab]
    std::size_t vocab_max_size = 30000;
    std::size_t vocab_min_freq = 1;

    // [encoder]; vocab_size and n_classes are filled in at run time
    EncoderConfig encoder;

    MaskingConfig masking;          // [masking]
    TrainConfig pretrain = pretrain_defaults(); // [pretrain]
    TrainConfig finetune = finetune_defaults(); // [finetune]
    std::size_t folds = 5;
    std::uint64_t fold_seed = 42;
    std::size_t snapshot_cycles = 1;
    FilterConfig prompt;            // [prompt]
    StackerConfig stacker;          // [stacker]
    std::vector<std::uint64_t> model_seeds = {11, 12, 13, 14}; // [models]

    // Canonical `section.key=value` lines for every setting, sorted; the
    // manifest hash is computed over this text.
    std::string canonical() const;
};

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) {
        ++b;
    }
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) {
        --e;
    }
    return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!trim(cur).empty() || !out.empty()) {
        out.push_back(trim(cur));
    }
    return out;
}

template <typename T>
T parse_number(const std::string& v, std::size_t line, const std::string& key) {
    T out{};
    const char* first = v.data();
    const char* last = v.data() + v.size();
    const auto r = std::from_chars(first, last, out);
    if (r.ec != std::errc{} || r.ptr != last) {
        throw UsageError("config line " + std::to_string(line) + ": invalid number '" + v +
                         "' for " + key);
    }
    return out;
}

inline std::string fmt_double(double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
}

inline std::string join_list(const std::vector<std::string>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        out += (i ? "," : "") + xs[i];
    }
    return out;
}

// Binds every `section.key` to a setter and a getter.
class ConfigSchema {
public:
    using Setter = std::function<void(const std::string&, std::size_t line, const std::string& key)>;
    using Getter = std::function<std::string()>;

    explicit ConfigSchema(RunConfig& c) { bind(c); }

    bool has(const std::string& key) const { return setters_.count(key) != 0; }
    void set(const std::string& key, const std::string& v, std::size_t line) {
        setters_.at(key)(v, line, key);
    }
    const std::map<std::string, Getter>& getters() const { return getters_; }

private:
    void add(const std::string& key, Setter s, Getter g) {
        setters_.emplace(key, std::move(s));
        getters_.emplace(key, std::move(g));
    }
    void str(const std::string& key, std::string& ref) {
        add(key, [&ref](const std::string& v, std::size_t, const std::string&) { ref = v; },
            [&ref] { return ref; });
    }
    void size(const std::string& key, std::size_t& ref) {
        add(key,
            [&ref](const std::string& v, std::size_t line, const std::string& k) {
                ref = parse_number<std::size_t>(v, line, k);
            },
            [&ref] { return std::to_string(ref); });
    }
    void u64(const std::string& key, std::uint64_t& ref) {
        add(key,
            [&ref](const std::string& v, std::size_t line, const std::string& k) {
                ref = parse_number<std::uint64_t>(v, line, k);
            },
            [&ref] { return std::to_string(ref); });
    }
    void real(const std::string& key, double& ref) {
        add(key,
            [&ref](const std::string& v, std::size_t line, const std::string& k) {
                ref = parse_number<double>(v, line, k);
            },
            [&ref] { return fmt_double(ref); });
    }
    void words(const std::string& key, std::vector<std::string>& ref) {
        add(key,
            [&ref](const std::string& v, std::size_t, const std::string&) { ref = split_list(v); },
            [&ref] { return join_list(ref); });
    }
    void train(const std::string& sec, TrainConfig& t) {
        size(sec + ".steps", t.total_steps);
        size(sec + ".batch_size", t.batch_size);
        size(sec + ".warmup", t.warmup_steps);
        real(sec + ".peak_lr", t.peak_lr);
        real(sec + ".weight_decay", t.weight_decay);
        u64(sec + ".seed", t.seed);
    }

    void bind(RunConfig& c) {
        str("paths.train", c.train_path);
        str("paths.val", c.val_path);
        str("paths.test", c.test_path);
        str("paths.output_dir", c.output_dir);

        size("vocab.max_size", c.vocab_max_size);
        size("vocab.min_freq", c.vocab_min_freq);

        size("encoder.max_len", c.encoder.max_len);
        size("encoder.d_model", c.encoder.d_model);
        size("encoder.n_heads", c.encoder.n_heads);
        size("encoder.n_layers", c.encoder.n_layers);
        size("encoder.d_ff", c.encoder.d_ff);
        real("encoder.dropout", c.encoder.dropout_rate);
        real("encoder.init_std", c.encoder.init_std);

        real("masking.select_fraction", c.masking.select_fraction);
        real("masking.mask_fraction", c.masking.mask_fraction);
        real("masking.random_fraction", c.masking.random_fraction);
        real("masking.keep_fraction", c.masking.keep_fraction);

        train("pretrain", c.pretrain);
        train("finetune", c.finetune);
        size("finetune.folds", c.folds);
        u64("finetune.fold_seed", c.fold_seed);
        size("finetune.snapshot_cycles", c.snapshot_cycles);

        train("prompt", c.prompt.train);
        str("prompt.template", c.prompt.template_pattern);
        words("prompt.negative_words", c.prompt.negative_words);
        words("prompt.positive_words", c.prompt.positive_words);
        real("prompt.threshold", c.prompt.threshold);

        size("stacker.hidden1", c.stacker.hidden1);
        size("stacker.hidden2", c.stacker.hidden2);
        size("stacker.steps", c.stacker.total_steps);
        size("stacker.batch_size", c.stacker.batch_size);
        real("stacker.lr", c.stacker.lr);
        real("stacker.weight_decay", c.stacker.weight_decay);
        u64("stacker.seed", c.stacker.seed);

        add("models.seeds",
            [&c](const std::string& v, std::size_t line, const std::string& k) {
                c.model_seeds.clear();
                for (const auto& s : split_list(v)) {
                    c.model_seeds.push_back(parse_number<std::uint64_t>(s, line, k));
                }
                if (c.model_seeds.empty()) {
                    throw UsageError("config line " + std::to_string(line) +
                                     ": models.seeds must list at least one seed");
                }
            },
            [&c] {
                std::string out;
                for (std::size_t i = 0; i < c.model_seeds.size(); ++i) {
                    out += (i ? "," : "") + std::to_string(c.model_seeds[i]);
                }
                return out;
            });
    }

    std::map<std::string, Setter> setters_;
    std::map<std::string, Getter> getters_;
};

} // namespace detail

inline std::string RunConfig::canonical() const {
    RunConfig copy = *this;
    detail::ConfigSchema schema(copy);
    std::string out;
    for (const auto& [key, get] : schema.getters()) {
        out += key + "=" + get() + "\n";
    }
    return out;
}

inline RunConfig parse_config(std::istream& in, const std::string& source = "<config>") {
    RunConfig cfg;
    detail::ConfigSchema schema(cfg);
    std::map<std::string, std::size_t> seen;
    std::string section;
    std::string raw;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& msg) {
        throw UsageError(source + ": line " + std::to_string(line_no) + ": " + msg);
    };
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = detail::trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') {
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']') {
                fail("unterminated section header");
            }
            section = detail::trim(std::string_view(line).substr(1, line.size() - 2));
            if (section.empty()) {
                fail("empty section name");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            fail("expected key = value");
        }
        if (section.empty()) {
            fail("key outside of any [section]");
        }
        const std::string key = section + "." + detail::trim(std::string_view(line).substr(0, eq));
        const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
        if (!schema.has(key)) {
            fail("unknown key '" + key + "'");
        }
        if (const auto it = seen.find(key); it != seen.end()) {
            fail("duplicate key '" + key + "' (first set on line " + std::to_string(it->second) +
                 ")");
        }
        seen.emplace(key, line_no);
        try {
            schema.set(key, value, line_no);
        } catch (const UsageError& e) {
            throw UsageError(source + ": " + e.what());
        }
    }
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw UsageError("cannot open config file '" + path + "'");
    }
    return parse_config(in, path);
}

// FNV-1a, 64-bit.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace clozefact
