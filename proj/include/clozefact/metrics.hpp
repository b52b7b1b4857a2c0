#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "clozefact/corpus.hpp"

namespace clozefact {

// counts[gold][predicted]
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t n) : counts_(n, std::vector<std::size_t>(n, 0)) {}

    static ConfusionMatrix from_counts(std::vector<std::vector<std::size_t>> counts) {
        for (const auto& r : counts) {
            if (r.size() != counts.size()) {
                throw std::invalid_argument("confusion matrix must be square");
            }
        }
        ConfusionMatrix cm(0);
        cm.counts_ = std::move(counts);
        return cm;
    }

    std::size_t classes() const noexcept { return counts_.size(); }
    std::size_t operator()(std::size_t gold, std::size_t pred) const {
        return counts_.at(gold).at(pred);
    }
    void add(std::size_t gold, std::size_t pred) { ++counts_.at(gold).at(pred); }

    std::size_t total() const {
        std::size_t t = 0;
        for (const auto& r : counts_) {
            for (auto c : r) {
                t += c;
            }
        }
        return t;
    }
    std::size_t gold_count(std::size_t c) const {
        std::size_t t = 0;
        for (auto v : counts_.at(c)) {
            t += v;
        }
        return t;
    }
    std::size_t predicted_count(std::size_t c) const {
        std::size_t t = 0;
        for (const auto& r : counts_) {
            t += r.at(c);
        }
        return t;
    }
    bool is_diagonal() const {
        for (std::size_t i = 0; i < counts_.size(); ++i) {
            for (std::size_t j = 0; j < counts_.size(); ++j) {
                if (i != j && counts_[i][j] != 0) {
                    return false;
                }
            }
        }
        return true;
    }

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    std::vector<std::vector<std::size_t>> counts_;
};

inline ConfusionMatrix confusion(std::span<const Label> golds, std::span<const Label> preds,
                                 std::span<const Label> classes = kAllLabels) {
    if (golds.size() != preds.size()) {
        throw std::invalid_argument("confusion: " + std::to_string(golds.size()) + " golds but " +
                                    std::to_string(preds.size()) + " predictions");
    }
    auto index_of = [&](Label l) {
        for (std::size_t i = 0; i < classes.size(); ++i) {
            if (classes[i] == l) {
                return i;
            }
        }
        throw std::invalid_argument("confusion: label " + std::string(label_name(l)) +
                                    " outside class list");
    };
    ConfusionMatrix cm(classes.size());
    for (std::size_t i = 0; i < golds.size(); ++i) {
        cm.add(index_of(golds[i]), index_of(preds[i]));
    }
    return cm;
}

// F1 per class; a class with zero precision and recall (including one never
// predicted and never gold) scores 0.
inline std::vector<double> per_class_f1(const ConfusionMatrix& cm) {
    std::vector<double> out(cm.classes(), 0.0);
    for (std::size_t c = 0; c < cm.classes(); ++c) {
        const auto tp = static_cast<double>(cm(c, c));
        const auto pred = static_cast<double>(cm.predicted_count(c));
        const auto gold = static_cast<double>(cm.gold_count(c));
        const double precision = pred > 0 ? tp / pred : 0.0;
        const double recall = gold > 0 ? tp / gold : 0.0;
        out[c] = precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    }
    return out;
}

// Support-weighted mean of per-class F1.
inline double weighted_f1(const ConfusionMatrix& cm) {
    const auto total = cm.total();
    if (total == 0) {
        throw std::invalid_argument("weighted_f1: empty confusion matrix");
    }
    const auto f1 = per_class_f1(cm);
    double s = 0.0;
    for (std::size_t c = 0; c < cm.classes(); ++c) {
        s += f1[c] * static_cast<double>(cm.gold_count(c));
    }
    return s / static_cast<double>(total);
}

inline double accuracy(const ConfusionMatrix& cm) {
    const auto total = cm.total();
    if (total == 0) {
        return 0.0;
    }
    std::size_t hit = 0;
    for (std::size_t c = 0; c < cm.classes(); ++c) {
        hit += cm(c, c);
    }
    return static_cast<double>(hit) / static_cast<double>(total);
}

struct MetricsReport {
    std::vector<Label> classes;
    std::vector<double> f1;
    double final_f1 = 0.0;
    double accuracy = 0.0;
    std::size_t evaluated = 0;
};

inline MetricsReport make_report(const ConfusionMatrix& cm, std::span<const Label> classes) {
    return {std::vector<Label>(classes.begin(), classes.end()), per_class_f1(cm), weighted_f1(cm),
            accuracy(cm), cm.total()};
}

inline void write_metrics_csv(std::ostream& out, const MetricsReport& r) {
    out << "class,f1\n";
    std::ostringstream body;
    body << std::setprecision(10);
    for (std::size_t c = 0; c < r.classes.size(); ++c) {
        body << label_name(r.classes[c]) << ',' << r.f1[c] << '\n';
    }
    body << "final," << r.final_f1 << '\n';
    out << body.str();
}

// Aligned table: one column per class in display order (Support-Text,
// Support-Multimodal, Insufficient-Text, Insufficient-Multimodal, Refute)
// followed by the final score.
inline void write_metrics_table(std::ostream& out, const MetricsReport& r,
                                const std::string& method = "Result") {
    static const std::array<std::pair<Label, const char*>, 5> order = {{
        {Label::SupportText, "Support-Text"},
        {Label::SupportMultimodal, "Support-Multimodal"},
        {Label::InsufficientText, "Insufficient-Text"},
        {Label::InsufficientMultimodal, "Insufficient-Multimodal"},
        {Label::Refute, "Refute"},
    }};
    std::vector<std::string> head{"Method"};
    std::vector<std::string> row{method};
    for (const auto& [label, title] : order) {
        for (std::size_t c = 0; c < r.classes.size(); ++c) {
            if (r.classes[c] == label) {
                head.emplace_back(title);
                std::ostringstream v;
                v << std::fixed << std::setprecision(4) << r.f1[c];
                row.push_back(v.str());
            }
        }
    }
    head.emplace_back("Final");
    std::ostringstream fin;
    fin << std::fixed << std::setprecision(4) << r.final_f1;
    row.push_back(fin.str());

    std::ostringstream text;
    auto emit = [&](const std::vector<std::string>& cells) {
        text << '|';
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const std::size_t w = std::max(head[i].size(), row[i].size());
            text << ' ' << std::setw(static_cast<int>(w)) << std::left << cells[i] << " |";
        }
        text << '\n';
    };
    emit(head);
    emit(row);
    out << text.str();
}

} // namespace clozefact
