#pragma once

// LEN baseline: empirical CDF of the training inter-event lengths, pooled
// over all training sequences.

#include <algorithm>
#include <vector>

#include <nlohmann/json.hpp>

#include <ppod/events.hpp>

namespace ppod {

class len_model {
public:
    explicit len_model(std::vector<double> lengths): pool_(std::move(lengths)) {
        if (pool_.empty()) throw validation_error("LEN needs at least one inter-event interval");
        std::sort(pool_.begin(), pool_.end());
    }

    // Fraction of pooled lengths <= l.
    double cdf(double l) const {
        auto n = std::upper_bound(pool_.begin(), pool_.end(), l) - pool_.begin();
        return static_cast<double>(n)/static_cast<double>(pool_.size());
    }

    // -min(F(gap), 1 - F(gap)): gaps in either tail score high.
    double commission_score(double gap) const {
        double f = cdf(gap);
        return -std::min(f, 1 - f);
    }

    static double omission_score(double begin, double end) { return end - begin; }
    static double omission_score(const blank_interval& b) { return b.length(); }

    const std::vector<double>& pool() const { return pool_; }

    nlohmann::json to_json() const { return {{"kind", "len"}, {"pool", pool_}}; }
    static len_model from_json(const nlohmann::json& j) { return len_model(j.at("pool").get<std::vector<double>>()); }

private:
    std::vector<double> pool_;
};

// Gaps between consecutive target events; span-edge gaps are excluded.
inline len_model len_fit(const dataset& train) {
    std::vector<double> lengths;
    for (const auto& ls: train.sequences) {
        auto t = ls.sequence.target_times();
        for (std::size_t i = 1; i < t.size(); ++i) lengths.push_back(t[i] - t[i-1]);
    }
    return len_model(std::move(lengths));
}

} // namespace ppod
