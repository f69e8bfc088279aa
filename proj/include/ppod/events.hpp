#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <ppod/common.hpp>

namespace ppod {

// The reserved mark of the monitored event type. Every other mark is a
// context type.
inline constexpr std::string_view target_mark = "x";

struct time_span {
    double begin = 0;
    double end = 0;

    double length() const { return end - begin; }
    bool contains(double t) const { return t >= begin && t <= end; }
    bool operator==(const time_span&) const = default;
};

struct event {
    double t = 0;
    std::string mark;

    bool is_target() const { return mark == target_mark; }
    bool operator==(const event&) const = default;
};

// Event order: by time; at equal times context events precede target
// events, so a context event at t is part of the history used to score a
// target event at t.
inline bool event_before(const event& a, const event& b) {
    if (a.t != b.t) return a.t < b.t;
    return !a.is_target() && b.is_target();
}

struct event_sequence {
    std::string id;
    time_span span;
    std::vector<event> events;

    std::vector<double> target_times() const {
        std::vector<double> out;
        for (const auto& e: events) {
            if (e.is_target()) out.push_back(e.t);
        }
        return out;
    }

    std::size_t target_count() const {
        return static_cast<std::size_t>(std::count_if(events.begin(), events.end(),
            [](const event& e) { return e.is_target(); }));
    }

    bool operator==(const event_sequence&) const = default;
};

// Ground truth attached to a (corrupted) sequence: times of injected
// commission events, and times of normal target events that were removed.
struct outlier_labels {
    std::vector<double> commission;
    std::vector<double> removed;

    bool is_commission(double t) const {
        return std::binary_search(commission.begin(), commission.end(), t);
    }

    // Any removed time in the half-open interval (begin, end].
    bool removed_in(double begin, double end) const {
        auto it = std::upper_bound(removed.begin(), removed.end(), begin);
        return it != removed.end() && *it <= end;
    }

    std::size_t removed_count_in(double begin, double end) const {
        auto lo = std::upper_bound(removed.begin(), removed.end(), begin);
        auto hi = std::upper_bound(removed.begin(), removed.end(), end);
        return static_cast<std::size_t>(hi - lo);
    }

    bool operator==(const outlier_labels&) const = default;
};

struct labeled_sequence {
    event_sequence sequence;
    std::optional<outlier_labels> labels;

    bool operator==(const labeled_sequence&) const = default;
};

struct dataset {
    std::vector<std::string> context_marks;
    std::vector<labeled_sequence> sequences;

    std::size_t size() const { return sequences.size(); }
    bool operator==(const dataset&) const = default;
};

inline void validate_context_marks(const std::vector<std::string>& marks) {
    std::set<std::string> seen;
    for (const auto& m: marks) {
        if (m == target_mark) throw validation_error("mark \"x\" is reserved for target events and cannot be a context mark");
        if (m.empty()) throw validation_error("empty context mark");
        if (!seen.insert(m).second) throw validation_error("duplicate context mark \"" + m + "\"");
    }
}

// Checks every sequence invariant; throws validation_error naming the
// first violation.
inline void validate_sequence(const event_sequence& seq, const std::vector<std::string>& context_marks) {
    const auto& span = seq.span;
    if (!std::isfinite(span.begin) || !std::isfinite(span.end) || !(span.begin < span.end)) {
        throw validation_error("sequence '" + seq.id + "': span must be a finite interval with begin < end");
    }
    for (std::size_t i = 0; i < seq.events.size(); ++i) {
        const auto& e = seq.events[i];
        if (!std::isfinite(e.t) || !span.contains(e.t)) {
            throw validation_error("sequence '" + seq.id + "': event " + std::to_string(i) + " lies outside the span");
        }
        if (!e.is_target() && std::find(context_marks.begin(), context_marks.end(), e.mark) == context_marks.end()) {
            throw validation_error("sequence '" + seq.id + "': event " + std::to_string(i) + " has undeclared mark \"" + e.mark + "\"");
        }
        if (i > 0) {
            const auto& prev = seq.events[i-1];
            if (event_before(e, prev)) {
                throw validation_error("sequence '" + seq.id + "': events not sorted at index " + std::to_string(i));
            }
            if (prev.is_target() && e.is_target() && prev.t == e.t) {
                throw validation_error("sequence '" + seq.id + "': duplicate target event at index " + std::to_string(i));
            }
        }
    }
}

inline void validate_labels(const event_sequence& seq, const outlier_labels& labels) {
    if (!std::is_sorted(labels.commission.begin(), labels.commission.end()) ||
        !std::is_sorted(labels.removed.begin(), labels.removed.end())) {
        throw validation_error("sequence '" + seq.id + "': label times must be sorted");
    }
    auto targets = seq.target_times();
    for (double t: labels.commission) {
        if (!std::binary_search(targets.begin(), targets.end(), t)) {
            throw validation_error("sequence '" + seq.id + "': commission label at a time with no target event");
        }
    }
    for (double t: labels.removed) {
        if (!seq.span.contains(t) || std::binary_search(targets.begin(), targets.end(), t)) {
            throw validation_error("sequence '" + seq.id + "': removed time collides with an observed target event or lies outside the span");
        }
    }
}

inline void validate_dataset(const dataset& data) {
    validate_context_marks(data.context_marks);
    std::set<std::string> ids;
    for (const auto& ls: data.sequences) {
        validate_sequence(ls.sequence, data.context_marks);
        if (!ids.insert(ls.sequence.id).second) {
            throw validation_error("duplicate sequence id '" + ls.sequence.id + "'");
        }
        if (ls.labels) validate_labels(ls.sequence, *ls.labels);
    }
}

enum class history_view { target_only, combined };

inline std::string_view to_string(history_view v) {
    return v == history_view::combined? "combined": "target_only";
}

inline history_view parse_history_view(std::string_view s) {
    if (s == "combined") return history_view::combined;
    if (s == "target_only") return history_view::target_only;
    throw validation_error("unknown history view '" + std::string(s) + "'");
}

// Prefix of a sequence visible when scoring at time t: every event before
// t, plus context events stamped exactly t (the tie rule). The target-only
// view drops context events.
class history {
public:
    history(const event_sequence& seq, double t, history_view view):
        seq_(&seq), t_(t), view_(view)
    {
        auto it = std::partition_point(seq.events.begin(), seq.events.end(),
            [t](const event& e) { return e.t < t || (e.t == t && !e.is_target()); });
        end_ = static_cast<std::size_t>(it - seq.events.begin());
    }

    double query_time() const { return t_; }
    history_view view() const { return view_; }

    std::vector<event> events() const {
        std::vector<event> out;
        for (std::size_t i = 0; i < end_; ++i) {
            const auto& e = seq_->events[i];
            if (view_ == history_view::combined || e.is_target()) out.push_back(e);
        }
        return out;
    }

    // Most recent target event in the history, if any.
    std::optional<double> last_target() const {
        for (std::size_t i = end_; i-- > 0;) {
            if (seq_->events[i].is_target()) return seq_->events[i].t;
        }
        return std::nullopt;
    }

private:
    const event_sequence* seq_;
    double t_;
    history_view view_;
    std::size_t end_ = 0;
};

struct blank_interval {
    double begin = 0;
    double end = 0;
    std::string sequence_id;

    double length() const { return end - begin; }
};

// Gaps between consecutive target events plus the two gaps at the span
// edges. Zero-length edge gaps (a target exactly on the span boundary) are
// dropped.
inline std::vector<blank_interval> blank_intervals(const event_sequence& seq) {
    std::vector<blank_interval> out;
    double prev = seq.span.begin;
    for (double t: seq.target_times()) {
        if (t > prev) out.push_back({prev, t, seq.id});
        prev = t;
    }
    if (seq.span.end > prev) out.push_back({prev, seq.span.end, seq.id});
    return out;
}

// Random partition into (train, test) with ceil(fraction * n) training
// sequences, clamped so both parts are non-empty. File order is preserved
// inside each part.
inline std::pair<dataset, dataset> split_train_test(const dataset& data, double fraction, std::uint64_t seed) {
    if (!(fraction > 0 && fraction < 1)) throw validation_error("split fraction must lie in (0, 1)");
    const std::size_t n = data.size();
    if (n < 2) throw validation_error("split needs at least 2 sequences");

    std::size_t n_train = static_cast<std::size_t>(std::ceil(fraction*static_cast<double>(n)));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::mt19937_64 rng(derive_seed(seed, "split"));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> in_train(n, false);
    for (std::size_t i = 0; i < n_train; ++i) in_train[order[i]] = true;

    dataset train{data.context_marks, {}}, test{data.context_marks, {}};
    for (std::size_t i = 0; i < n; ++i) {
        (in_train[i]? train: test).sequences.push_back(data.sequences[i]);
    }
    return {std::move(train), std::move(test)};
}

// Pooled target rate: total target count over total span length.
inline double empirical_rate(const dataset& data) {
    double count = 0, length = 0;
    for (const auto& ls: data.sequences) {
        count += static_cast<double>(ls.sequence.target_count());
        length += ls.sequence.span.length();
    }
    if (!(length > 0)) throw validation_error("empirical rate needs a positive total span");
    return count/length;
}

} // namespace ppod
