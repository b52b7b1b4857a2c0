#pragma once

// Pieces shared by every training loop: run configuration, mini-batch
// sampling and the loss trace.

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "clozefact/error.hpp"
#include "clozefact/optim.hpp"
#include "clozefact/random.hpp"

namespace clozefact {

struct TrainConfig {
    std::size_t total_steps = 2000;
    std::size_t batch_size = 32;
    std::size_t warmup_steps = 100;
    double peak_lr = 5e-6;
    double weight_decay = 0.01;
    ScheduleKind schedule = ScheduleKind::WarmupCosine;
    std::size_t cycles = 1; // only read by the cyclic schedule
    std::uint64_t seed = 42;

    ScheduleConfig schedule_config() const {
        return ScheduleConfig{schedule, warmup_steps, peak_lr, total_steps, cycles};
    }
    AdamWHyper adamw() const {
        AdamWHyper h;
        h.base_lr = peak_lr;
        h.weight_decay = weight_decay;
        return h;
    }
    void validate() const {
        if (total_steps == 0 || batch_size == 0) {
            throw std::invalid_argument("TrainConfig: total_steps and batch_size must be positive");
        }
        if (schedule != ScheduleKind::Cyclic) {
            schedule_config().validate();
        } else {
            cycle_length(schedule_config());
        }
    }
};

// Default pretraining recipe.
inline TrainConfig pretrain_defaults() {
    TrainConfig c;
    c.total_steps = 3000;
    c.batch_size = 64;
    c.warmup_steps = 500;
    c.peak_lr = 1e-4;
    c.schedule = ScheduleKind::WarmupLinear;
    return c;
}

inline TrainConfig finetune_defaults() { return TrainConfig{}; }

// Draws mini-batches by walking seeded permutations of [0, n); a fresh
// permutation is drawn whenever one is exhausted.
class BatchSampler {
public:
    BatchSampler(std::size_t n, std::uint64_t seed) : order_(n), rng_(make_rng(seed, 0x62617463ULL)) {
        if (n == 0) {
            throw std::invalid_argument("BatchSampler: empty dataset");
        }
        reshuffle();
    }

    std::vector<std::size_t> next(std::size_t batch_size) {
        std::vector<std::size_t> out;
        out.reserve(batch_size);
        while (out.size() < batch_size) {
            if (cursor_ == order_.size()) {
                reshuffle();
            }
            out.push_back(order_[cursor_++]);
        }
        return out;
    }

private:
    void reshuffle() {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        shuffle(std::span<std::size_t>(order_), rng_);
        cursor_ = 0;
    }

    std::vector<std::size_t> order_;
    Rng rng_;
    std::size_t cursor_ = 0;
};

struct TraceRow {
    std::size_t step = 0;
    double lr = 0.0;
    double loss = 0.0;
};

inline void write_trace(std::ostream& out, std::span<const TraceRow> rows) {
    out << "step,lr,loss\n";
    for (const auto& r : rows) {
        std::ostringstream line;
        line << r.step << ',' << std::setprecision(17) << r.lr << ',' << r.loss << '\n';
        out << line.str();
    }
}

inline void save_trace(const std::string& path, std::span<const TraceRow> rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write loss trace '" + path + "'");
    }
    write_trace(out, rows);
}

inline double mean_loss(std::span<const TraceRow> rows, std::size_t first, std::size_t count) {
    if (count == 0 || first + count > rows.size()) {
        throw std::invalid_argument("mean_loss: window outside the trace");
    }
    double s = 0.0;
    for (std::size_t i = first; i < first + count; ++i) {
        s += rows[i].loss;
    }
    return s / static_cast<double>(count);
}

} // namespace clozefact
