#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "clozefact/csv.hpp"
#include "clozefact/error.hpp"
#include "clozefact/random.hpp"

namespace clozefact {

// The five categories in canonical order. The integer value is the
// class index used by every probability vector and file in the project.
enum class Label : std::uint8_t {
    SupportMultimodal = 0,
    SupportText = 1,
    InsufficientMultimodal = 2,
    InsufficientText = 3,
    Refute = 4,
};

inline constexpr std::size_t kNumLabels = 5;

inline constexpr std::array<Label, kNumLabels> kAllLabels = {
    Label::SupportMultimodal, Label::SupportText, Label::InsufficientMultimodal,
    Label::InsufficientText, Label::Refute};

// The four classes left once refutes are filtered out.
inline constexpr std::array<Label, 4> kNonRefuteLabels = {
    Label::SupportMultimodal, Label::SupportText, Label::InsufficientMultimodal,
    Label::InsufficientText};

constexpr std::size_t label_index(Label l) noexcept { return static_cast<std::size_t>(l); }

inline Label label_from_index(std::size_t i) {
    if (i >= kNumLabels) {
        throw std::out_of_range("label index " + std::to_string(i));
    }
    return static_cast<Label>(i);
}

inline std::string_view label_name(Label l) noexcept {
    switch (l) {
    case Label::SupportMultimodal: return "Support_Multimodal";
    case Label::SupportText: return "Support_Text";
    case Label::InsufficientMultimodal: return "Insufficient_Multimodal";
    case Label::InsufficientText: return "Insufficient_Text";
    case Label::Refute: return "Refute";
    }
    return "?";
}

// Case-insensitive; '-', '_' and ' ' are interchangeable separators.
inline std::optional<Label> parse_label(std::string_view s) {
    auto norm = [](std::string_view v) {
        std::string out;
        for (char c : v) {
            if (c == '-' || c == ' ') {
                c = '_';
            }
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
        return out;
    };
    const std::string key = norm(s);
    for (Label l : kAllLabels) {
        if (norm(label_name(l)) == key) {
            return l;
        }
    }
    return std::nullopt;
}

struct Instance {
    std::string id;
    std::string claim_text;
    std::string claim_ocr_text;
    std::string document_text;
    std::string document_ocr_text;
    std::optional<Label> label;
};

enum class Provenance { Train, Val, Test, Synthetic };

class Dataset {
public:
    Dataset() = default;
    Dataset(std::vector<Instance> instances, Provenance provenance)
        : instances_(std::move(instances)), provenance_(provenance) {
        validate();
    }

    std::span<const Instance> instances() const noexcept { return instances_; }
    const Instance& operator[](std::size_t i) const { return instances_.at(i); }
    std::size_t size() const noexcept { return instances_.size(); }
    bool empty() const noexcept { return instances_.empty(); }
    Provenance provenance() const noexcept { return provenance_; }

    bool labeled() const noexcept {
        return !instances_.empty() && instances_.front().label.has_value();
    }

    // Labels in instance order. Throws if the dataset is unlabeled.
    std::vector<Label> labels() const {
        std::vector<Label> out;
        out.reserve(instances_.size());
        for (const auto& inst : instances_) {
            if (!inst.label) {
                throw DataError("instance '" + inst.id + "' has no label");
            }
            out.push_back(*inst.label);
        }
        return out;
    }

    Dataset subset(std::span<const std::size_t> indices) const {
        std::vector<Instance> out;
        out.reserve(indices.size());
        for (std::size_t i : indices) {
            out.push_back(instances_.at(i));
        }
        return Dataset(std::move(out), provenance_);
    }

private:
    void validate() const {
        std::unordered_set<std::string_view> seen;
        const bool first_labeled = !instances_.empty() && instances_.front().label.has_value();
        for (const auto& inst : instances_) {
            if (inst.id.empty()) {
                throw DataError("instance with empty id");
            }
            if (!seen.insert(inst.id).second) {
                throw DataError("duplicate instance id '" + inst.id + "'");
            }
            if (inst.claim_text.empty()) {
                throw DataError("instance '" + inst.id + "' has empty claim text");
            }
            if (inst.label.has_value() != first_labeled) {
                throw DataError("dataset mixes labeled and unlabeled instances (at '" + inst.id +
                                "')");
            }
        }
    }

    std::vector<Instance> instances_;
    Provenance provenance_ = Provenance::Train;
};

inline constexpr std::array<std::string_view, 6> kDatasetColumns = {
    "id", "claim", "claim_ocr", "document", "document_ocr", "category"};

inline Dataset read_dataset(std::istream& in, bool has_labels, Provenance provenance,
                            const std::string& source = "<stream>") {
    csv::Reader reader(in);
    auto header = reader.next();
    if (!header) {
        throw DataError(source + ": missing header row");
    }
    auto& cols = header->fields;
    if (!cols.empty() && cols[0].starts_with("\xEF\xBB\xBF")) {
        cols[0].erase(0, 3);
    }
    const bool has_category_col = cols.size() == 6;
    bool header_ok = cols.size() == 5 || cols.size() == 6;
    for (std::size_t i = 0; header_ok && i < cols.size(); ++i) {
        header_ok = cols[i] == kDatasetColumns[i];
    }
    if (!header_ok) {
        throw DataError(source +
                        ": header must be id,claim,claim_ocr,document,document_ocr[,category]");
    }
    if (has_labels && !has_category_col) {
        throw DataError(source + ": labeled dataset requires a category column");
    }

    std::vector<Instance> out;
    std::size_t row = 0;
    while (auto rec = reader.next()) {
        ++row;
        auto& f = rec->fields;
        if (f.size() == 1 && f[0].empty()) {
            continue; // blank line
        }
        if (f.size() != cols.size()) {
            throw DataError(source + ": row " + std::to_string(row) + " (line " +
                            std::to_string(rec->line) + ") has " + std::to_string(f.size()) +
                            " fields, expected " + std::to_string(cols.size()));
        }
        Instance inst{f[0], f[1], f[2], f[3], f[4], std::nullopt};
        if (has_labels) {
            inst.label = parse_label(f[5]);
            if (!inst.label) {
                throw DataError(source + ": row " + std::to_string(row) + " (line " +
                                std::to_string(rec->line) + ") has unknown category '" + f[5] +
                                "'");
            }
        }
        out.push_back(std::move(inst));
    }
    try {
        return Dataset(std::move(out), provenance);
    } catch (const DataError& e) {
        throw DataError(source + ": " + e.what());
    }
}

inline Dataset load_dataset(const std::string& path, bool has_labels,
                            Provenance provenance = Provenance::Train) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open dataset file '" + path + "'");
    }
    return read_dataset(in, has_labels, provenance, path);
}

inline void write_dataset(std::ostream& out, const Dataset& ds) {
    const bool labeled = ds.labeled();
    std::vector<std::string> header(kDatasetColumns.begin(),
                                    kDatasetColumns.begin() + (labeled ? 6 : 5));
    csv::write_row(out, header);
    for (const auto& inst : ds.instances()) {
        std::vector<std::string> row{inst.id, inst.claim_text, inst.claim_ocr_text,
                                     inst.document_text, inst.document_ocr_text};
        if (labeled) {
            row.emplace_back(label_name(*inst.label));
        }
        csv::write_row(out, row);
    }
}

// Model input text: claim followed by the claim OCR text. Document text is
// never used. Optional clipping is by bytes, backed off to a UTF-8 boundary.
inline std::string preprocess_instance(const Instance& inst,
                                       std::optional<std::size_t> max_chars = std::nullopt) {
    std::string out = inst.claim_text;
    if (!inst.claim_ocr_text.empty()) {
        out.push_back(' ');
        out += inst.claim_ocr_text;
    }
    if (max_chars && out.size() > *max_chars) {
        std::size_t cut = *max_chars;
        while (cut > 0 && (static_cast<unsigned char>(out[cut]) & 0xC0) == 0x80) {
            --cut;
        }
        out.resize(cut);
    }
    return out;
}

struct FoldAssignment {
    std::size_t k = 0;
    std::vector<std::size_t> fold_of; // instance index -> fold
    std::uint64_t seed = 0;

    std::vector<std::size_t> members(std::size_t fold) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < fold_of.size(); ++i) {
            if (fold_of[i] == fold) {
                out.push_back(i);
            }
        }
        return out;
    }

    std::vector<std::size_t> training_members(std::size_t fold) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < fold_of.size(); ++i) {
            if (fold_of[i] != fold) {
                out.push_back(i);
            }
        }
        return out;
    }
};

// Per class: shuffle the member indices with the seeded generator, then deal
// them round-robin. The dealing position carries over from one class to the
// next so total fold sizes also stay within one of each other.
inline FoldAssignment stratified_kfold(const Dataset& ds, std::size_t k, std::uint64_t seed) {
    if (k < 2) {
        throw std::invalid_argument("stratified_kfold: k must be at least 2");
    }
    const auto labels = ds.labels();
    std::array<std::vector<std::size_t>, kNumLabels> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        by_class[label_index(labels[i])].push_back(i);
    }
    for (Label l : kAllLabels) {
        const auto n = by_class[label_index(l)].size();
        if (n > 0 && n < k) {
            throw DataError("stratified_kfold: class " + std::string(label_name(l)) + " has " +
                            std::to_string(n) + " members, fewer than k=" + std::to_string(k));
        }
    }
    FoldAssignment fa{k, std::vector<std::size_t>(ds.size(), 0), seed};
    std::size_t dealer = 0;
    for (std::size_t c = 0; c < kNumLabels; ++c) {
        auto& idx = by_class[c];
        Rng rng = make_rng(seed, 0x6b666f6c64ULL + c);
        shuffle(std::span<std::size_t>(idx), rng);
        for (std::size_t i : idx) {
            fa.fold_of[i] = dealer % k;
            ++dealer;
        }
    }
    return fa;
}

struct SyntheticSpec {
    std::size_t classes = 5;
    std::size_t per_class = 100;
    std::size_t vocab_size = 500;
    std::uint64_t seed = 7;
    std::string id_prefix = "syn";
};

// Negation markers carried by every synthetic Refute claim.
inline constexpr std::array<std::string_view, 5> kNegationMarkers = {"not", "never", "fake",
                                                                     "hoax", "debunked"};

// Each class owns a disjoint keyword pool ("c<class>w<j>"); filler words
// ("f<j>") are shared. Every claim carries three keywords from its class pool,
// so a bag-of-words model separates the classes exactly.
inline Dataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.classes == 0 || spec.per_class == 0 || spec.vocab_size == 0) {
        throw std::invalid_argument("generate_synthetic: counts must be positive");
    }
    if (spec.classes > kNumLabels) {
        throw std::invalid_argument("generate_synthetic: at most 5 classes");
    }
    const std::size_t markers = kNegationMarkers.size();
    if (spec.vocab_size < markers + spec.classes * 6 + 10) {
        throw std::invalid_argument("generate_synthetic: vocab size " +
                                    std::to_string(spec.vocab_size) + " too small for " +
                                    std::to_string(spec.classes) + " classes");
    }
    const std::size_t pool = (spec.vocab_size - markers) / (2 * spec.classes);
    const std::size_t filler = spec.vocab_size - markers - pool * spec.classes;

    Rng rng = make_rng(spec.seed, 0x73796e7468ULL);
    auto keyword = [&](std::size_t c) {
        return "c" + std::to_string(c) + "w" + std::to_string(uniform_below(rng, pool));
    };
    auto filler_word = [&] { return "f" + std::to_string(uniform_below(rng, filler)); };
    auto join = [](const std::vector<std::string>& words) {
        std::string s;
        for (const auto& w : words) {
            if (!s.empty()) {
                s.push_back(' ');
            }
            s += w;
        }
        return s;
    };

    std::vector<Instance> out;
    out.reserve(spec.classes * spec.per_class);
    for (std::size_t c = 0; c < spec.classes; ++c) {
        const Label label = label_from_index(c);
        for (std::size_t n = 0; n < spec.per_class; ++n) {
            std::vector<std::string> claim;
            const std::size_t n_filler = 5 + uniform_below(rng, 7);
            for (std::size_t i = 0; i < n_filler; ++i) {
                claim.push_back(filler_word());
            }
            for (int i = 0; i < 3; ++i) {
                claim.push_back(keyword(c));
            }
            if (label == Label::Refute) {
                for (int i = 0; i < 2; ++i) {
                    claim.emplace_back(kNegationMarkers[uniform_below(rng, markers)]);
                }
            }
            shuffle(std::span<std::string>(claim), rng);

            std::vector<std::string> ocr;
            if (uniform01(rng) < 0.5) {
                const std::size_t n_ocr = 2 + uniform_below(rng, 4);
                for (std::size_t i = 0; i < n_ocr; ++i) {
                    ocr.push_back(filler_word());
                }
                ocr.push_back(keyword(c));
            }

            std::vector<std::string> doc;
            const std::size_t n_doc = 10 + uniform_below(rng, 10);
            for (std::size_t i = 0; i < n_doc; ++i) {
                doc.push_back(filler_word());
            }
            doc.push_back(keyword(c));

            out.push_back(Instance{"", join(claim), join(ocr), join(doc), "", label});
        }
    }
    shuffle(std::span<Instance>(out), rng);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::ostringstream id;
        id << spec.id_prefix << i;
        out[i].id = id.str();
    }
    return Dataset(std::move(out), Provenance::Synthetic);
}

} // namespace clozefact
