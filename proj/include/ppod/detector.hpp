#pragma once

// Online outlier scoring. Commission scores are produced at every observed
// target event; omission scores over the interval between consecutive
// checkpoints. Scorers only look at history strictly before the scored
// point (context events stamped at that point included).

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <memory>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <ppod/common.hpp>
#include <ppod/events.hpp>
#include <ppod/injector.hpp>
#include <ppod/models/cif.hpp>
#include <ppod/models/len.hpp>

namespace ppod {

// ---- posteriors and p-values ------------------------------------------

// Finite discrete distribution given by support points and weights; the
// weights are normalized on construction.
struct discrete_distribution {
    std::vector<double> support;
    std::vector<double> weights;

    discrete_distribution(std::vector<double> s, std::vector<double> w): support(std::move(s)), weights(std::move(w)) {
        if (support.empty() || support.size() != weights.size()) throw validation_error("discrete distribution: support and weights must be non-empty and of equal length");
        double total = 0;
        for (double x: weights) {
            if (!(x >= 0) || !std::isfinite(x)) throw validation_error("discrete distribution: weights must be finite and non-negative");
            total += x;
        }
        if (!(total > 0)) throw validation_error("discrete distribution: weights sum to zero");
        for (double& x: weights) x /= total;
    }

    static discrete_distribution point(double x) { return {{x}, {1.0}}; }

    static discrete_distribution uniform(std::vector<double> s) {
        std::vector<double> w(s.size(), 1.0);
        return {std::move(s), std::move(w)};
    }
};

inline double commission_score(const cif_session& session, double t_n) {
    return -session.intensity(t_n);
}

inline double omission_score(const cif_session& session, double begin, double end) {
    return session.cumulative(begin, end);
}

// p(Z = 1 | t) = lambda1 / (lambda0 + lambda1).
inline double commission_posterior(double lambda0, double lambda1) {
    if (!(lambda0 >= 0) || !(lambda1 >= 0)) throw validation_error("commission posterior: intensities must be non-negative");
    if (!(lambda0 + lambda1 > 0)) throw validation_error("commission posterior: both intensities are zero");
    return lambda1/(lambda0 + lambda1);
}

// 1 + E[s_c / (lambda1 - s_c)] over a discrete lambda1 distribution.
inline double commission_posterior_marginal(double s_c, const discrete_distribution& lambda1) {
    if (!(s_c <= 0)) throw validation_error("commission posterior: score must be <= 0");
    double e = 0;
    for (std::size_t i = 0; i < lambda1.support.size(); ++i) {
        double l1 = lambda1.support[i];
        if (!(l1 > 0)) throw validation_error("commission posterior: lambda1 support must be positive");
        e += lambda1.weights[i]*s_c/(l1 - s_c);
    }
    return 1 + e;
}

inline double omission_pvalue(double s_o) {
    if (!(s_o >= 0)) throw validation_error("omission p-value: score must be >= 0");
    return std::exp(-s_o);
}

inline double omission_posterior_poisson(double s_o, double p1) {
    if (!(s_o >= 0)) throw validation_error("omission posterior: score must be >= 0");
    if (!(p1 >= 0 && p1 <= 1)) throw validation_error("omission posterior: p1 must lie in [0, 1]");
    return -std::expm1(-p1*s_o);
}

// 1 - E[exp(-p1 s_o)] over a discrete p1 distribution.
inline double omission_posterior_marginal(double s_o, const discrete_distribution& p1) {
    if (!(s_o >= 0)) throw validation_error("omission posterior: score must be >= 0");
    double e = 0;
    for (std::size_t i = 0; i < p1.support.size(); ++i) {
        double p = p1.support[i];
        if (!(p >= 0 && p <= 1)) throw validation_error("omission posterior: p1 support must lie in [0, 1]");
        e += p1.weights[i]*std::expm1(-p*s_o);
    }
    return -e;
}

// ---- checkpoints ------------------------------------------------------

struct checkpoint {
    double t;
    bool at_event;
    double prev;   // previous checkpoint, or the span start
};

// Checkpoint width w = 2 / lambda_hat_train.
inline double checkpoint_width(double lambda_hat_train) {
    if (!(lambda_hat_train > 0) || !std::isfinite(lambda_hat_train)) throw validation_error("checkpoints: training rate must be positive");
    return 2/lambda_hat_train;
}

// A checkpoint at every target event. Whenever more than w passes after the
// previous checkpoint without reaching the next target event (or the span
// end), a checkpoint is drawn uniformly in (prev, prev + w) and becomes the
// new previous checkpoint. The span end itself is not a checkpoint.
inline std::vector<checkpoint> generate_checkpoints(const event_sequence& seq, double lambda_hat_train, std::uint64_t seed) {
    const double w = checkpoint_width(lambda_hat_train);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<checkpoint> out;
    double prev = seq.span.begin;
    auto fill = [&](double until) {
        while (prev + w < until) {
            double c = prev + unif(rng)*w;
            if (!(c > prev)) c = std::nextafter(prev, until);
            out.push_back({c, false, prev});
            prev = c;
        }
    };
    for (double t: seq.target_times()) {
        fill(t);
        out.push_back({t, true, prev});
        prev = t;
    }
    fill(seq.span.end);
    return out;
}

// ---- scorers ----------------------------------------------------------

class scorer_session {
public:
    virtual ~scorer_session() = default;
    // Score of the observed target event at t_n.
    virtual double commission(double t_n) = 0;
    // Score of the blank interval (begin, end).
    virtual double omission(double begin, double end) = 0;
};

class outlier_scorer {
public:
    virtual ~outlier_scorer() = default;
    virtual std::unique_ptr<scorer_session> bind(const event_sequence& seq, std::uint64_t seed) const = 0;
    virtual std::string name() const = 0;
};

// s_c = -lambda0(t_n), s_o = integral of lambda0 over the interval.
class cif_scorer: public outlier_scorer {
public:
    cif_scorer(const cif_model& model, std::string name): model_(model), name_(std::move(name)) {}

    std::unique_ptr<scorer_session> bind(const event_sequence& seq, std::uint64_t) const override {
        struct session: scorer_session {
            std::unique_ptr<cif_session> cif;
            double commission(double t) override { return commission_score(*cif, t); }
            double omission(double b, double e) override { return omission_score(*cif, b, e); }
        };
        auto s = std::make_unique<session>();
        s->cif = model_.bind(seq);
        return s;
    }

    std::string name() const override { return name_; }

private:
    const cif_model& model_;
    std::string name_;
};

class len_scorer: public outlier_scorer {
public:
    explicit len_scorer(len_model model): model_(std::move(model)) {}

    std::unique_ptr<scorer_session> bind(const event_sequence& seq, std::uint64_t) const override {
        struct session: scorer_session {
            const len_model* model;
            double origin;
            std::vector<double> targets;
            double commission(double t) override {
                auto it = std::lower_bound(targets.begin(), targets.end(), t);
                double last = it == targets.begin()? origin: *std::prev(it);
                return model->commission_score(t - last);
            }
            double omission(double b, double e) override { return len_model::omission_score(b, e); }
        };
        auto s = std::make_unique<session>();
        s->model = &model_;
        s->origin = seq.span.begin;
        s->targets = seq.target_times();
        return s;
    }

    std::string name() const override { return "LEN"; }
    const len_model& model() const { return model_; }

private:
    len_model model_;
};

// Uniform(0, 1) scores, drawn in scoring order from the session seed.
class random_scorer: public outlier_scorer {
public:
    std::unique_ptr<scorer_session> bind(const event_sequence&, std::uint64_t seed) const override {
        struct session: scorer_session {
            std::mt19937_64 rng;
            double draw() { return unit_double(rng()); }
            double commission(double) override { return draw(); }
            double omission(double, double) override { return draw(); }
        };
        auto s = std::make_unique<session>();
        s->rng.seed(seed);
        return s;
    }

    std::string name() const override { return "RND"; }
};

// ---- detection --------------------------------------------------------

struct scored_item {
    std::string seq_id;
    outlier_kind kind;
    double begin;   // event time for commission items
    double end;     // NaN for commission items
    double score;
    int truth;
};

inline bool operator==(const scored_item& a, const scored_item& b) {
    auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
    return a.seq_id == b.seq_id && a.kind == b.kind && same(a.begin, b.begin) && same(a.end, b.end) &&
           same(a.score, b.score) && a.truth == b.truth;
}

namespace detail {

inline std::vector<scored_item> detect_sequence(const outlier_scorer& scorer, const labeled_sequence& ls, double lambda_hat_train,
                                                std::uint64_t seed, std::size_t index) {
    const auto& seq = ls.sequence;
    auto session = scorer.bind(seq, derive_seed(seed, "detect/score", index));
    std::vector<scored_item> out;
    for (const auto& cp: generate_checkpoints(seq, lambda_hat_train, derive_seed(seed, "detect/checkpoints", index))) {
        int removed = ls.labels && ls.labels->removed_in(cp.prev, cp.t)? 1: 0;
        out.push_back({seq.id, outlier_kind::omission, cp.prev, cp.t, session->omission(cp.prev, cp.t), removed});
        if (cp.at_event) {
            int commission = ls.labels && ls.labels->is_commission(cp.t)? 1: 0;
            out.push_back({seq.id, outlier_kind::commission, cp.t, std::numeric_limits<double>::quiet_NaN(),
                           session->commission(cp.t), commission});
        }
    }
    return out;
}

} // namespace detail

// Scores every target event (commission) and every checkpoint interval
// (omission). Output is ordered by sequence, then time; at an event time the
// omission item ending there precedes the event's commission item.
inline std::vector<scored_item> run_detection(const outlier_scorer& scorer, const dataset& data, double lambda_hat_train,
                                              std::uint64_t seed, unsigned jobs = 1) {
    checkpoint_width(lambda_hat_train);
    std::vector<std::vector<scored_item>> parts(data.size());
    parallel_for(data.size(), jobs, [&](std::size_t i) {
        parts[i] = detail::detect_sequence(scorer, data.sequences[i], lambda_hat_train, seed, i);
    });
    std::vector<scored_item> out;
    for (auto& p: parts) out.insert(out.end(), std::make_move_iterator(p.begin()), std::make_move_iterator(p.end()));
    return out;
}

// Omission items over every interval between consecutive observed target
// events, ignoring generated checkpoints.
inline std::vector<scored_item> score_inter_event_intervals(const outlier_scorer& scorer, const dataset& data,
                                                            std::uint64_t seed, unsigned jobs = 1) {
    std::vector<std::vector<scored_item>> parts(data.size());
    parallel_for(data.size(), jobs, [&](std::size_t i) {
        const auto& ls = data.sequences[i];
        auto session = scorer.bind(ls.sequence, derive_seed(seed, "detect/inter-event", i));
        auto t = ls.sequence.target_times();
        for (std::size_t n = 1; n < t.size(); ++n) {
            int removed = ls.labels && ls.labels->removed_in(t[n - 1], t[n])? 1: 0;
            parts[i].push_back({ls.sequence.id, outlier_kind::omission, t[n - 1], t[n], session->omission(t[n - 1], t[n]), removed});
        }
    });
    std::vector<scored_item> out;
    for (auto& p: parts) out.insert(out.end(), p.begin(), p.end());
    return out;
}

inline std::vector<scored_item> filter_kind(const std::vector<scored_item>& items, outlier_kind kind) {
    std::vector<scored_item> out;
    std::copy_if(items.begin(), items.end(), std::back_inserter(out), [kind](const auto& it) { return it.kind == kind; });
    return out;
}

// ---- CSV --------------------------------------------------------------

inline constexpr std::string_view scored_items_header = "seq_id,kind,t_or_begin,end,score,truth";

inline void write_scored_items(std::ostream& out, const std::vector<scored_item>& items) {
    out << scored_items_header << '\n';
    for (const auto& it: items) {
        if (it.seq_id.find_first_of(",\"\r\n") != std::string::npos) {
            throw validation_error("sequence id '" + it.seq_id + "' cannot be written to CSV");
        }
        out << it.seq_id << ',' << to_string(it.kind) << ',' << format_double(it.begin) << ','
            << (it.kind == outlier_kind::omission? format_double(it.end): std::string()) << ','
            << format_double(it.score) << ',' << it.truth << '\n';
    }
}

inline std::vector<scored_item> read_scored_items(std::istream& in) {
    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(in, line) || line != scored_items_header) throw parse_error(1, "expected header '" + std::string(scored_items_header) + "'");
    std::vector<scored_item> out;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
        if (!line.empty() && line.back() == ',') f.emplace_back();
        if (f.size() != 6) throw parse_error(lineno, "expected 6 fields, got " + std::to_string(f.size()));
        try {
            scored_item it;
            it.seq_id = f[0];
            if (f[1] == "commission") it.kind = outlier_kind::commission;
            else if (f[1] == "omission") it.kind = outlier_kind::omission;
            else throw validation_error("unknown kind '" + f[1] + "'");
            it.begin = parse_double(f[2]);
            if (it.kind == outlier_kind::commission) {
                if (!f[3].empty()) throw validation_error("commission items have no end");
                it.end = std::numeric_limits<double>::quiet_NaN();
            }
            else {
                it.end = parse_double(f[3]);
                if (!(it.end >= it.begin)) throw validation_error("omission interval ends before it begins");
            }
            it.score = parse_double(f[4]);
            if (f[5] != "0" && f[5] != "1") throw validation_error("truth must be 0 or 1");
            it.truth = f[5] == "1";
            out.push_back(std::move(it));
        }
        catch (const parse_error&) {
            throw;
        }
        catch (const validation_error& e) {
            throw parse_error(lineno, e.what());
        }
    }
    return out;
}

} // namespace ppod
