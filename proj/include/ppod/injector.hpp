#pragma once

// Outlier injection. Commission outliers are extra target events from an
// independent inhomogeneous Poisson process with intensity alpha(t) times
// the empirical target rate; omission outliers are target events removed by
// independent Bernoulli(alpha(t)) trials, never removing the earliest target
// event of a sequence.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <variant>

#include <nlohmann/json.hpp>

#include <ppod/common.hpp>
#include <ppod/events.hpp>

namespace ppod {

struct constant_rate {
    double alpha0 = 0;
};

// alpha0 * (1 + sin(2 pi t / period)) / 2
struct periodic_rate {
    double alpha0 = 0;
    double period = 1;
};

// alpha0 * g(t), g constant on [k step, (k+1) step) with level k drawn
// uniform on [0, 1] from (seed, k).
struct piecewise_rate {
    double alpha0 = 0;
    double step = 1;
    std::uint64_t seed = 0;

    double level(double t) const {
        auto k = static_cast<std::int64_t>(std::floor(t/step));
        return unit_double(derive_seed(seed, "piecewise-level", static_cast<std::uint64_t>(k)));
    }
};

using rate_schedule = std::variant<constant_rate, periodic_rate, piecewise_rate>;

inline double eval_schedule(const rate_schedule& schedule, double t) {
    return std::visit([t](const auto& s) -> double {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, constant_rate>) return s.alpha0;
        else if constexpr (std::is_same_v<S, periodic_rate>) return s.alpha0*(1 + std::sin(2*std::numbers::pi*t/s.period))/2;
        else return s.alpha0*s.level(t);
    }, schedule);
}

inline double schedule_scale(const rate_schedule& schedule) {
    return std::visit([](const auto& s) { return s.alpha0; }, schedule);
}

inline void validate_schedule(const rate_schedule& schedule) {
    std::visit([](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if (!(s.alpha0 >= 0) || !std::isfinite(s.alpha0)) throw validation_error("alpha0 must be finite and non-negative");
        if constexpr (std::is_same_v<S, periodic_rate>) {
            if (!(s.period > 0)) throw validation_error("periodic schedule needs period > 0");
        }
        if constexpr (std::is_same_v<S, piecewise_rate>) {
            if (!(s.step > 0)) throw validation_error("piecewise schedule needs step > 0");
        }
    }, schedule);
}

// The piecewise function is drawn independently per sequence; other
// variants are shared.
inline rate_schedule schedule_for_sequence(const rate_schedule& schedule, std::size_t index) {
    if (auto* p = std::get_if<piecewise_rate>(&schedule)) {
        auto copy = *p;
        copy.seed = derive_seed(p->seed, "piecewise-sequence", index);
        return copy;
    }
    return schedule;
}

inline nlohmann::json schedule_to_json(const rate_schedule& schedule) {
    return std::visit([](const auto& s) -> nlohmann::json {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, constant_rate>) return {{"kind", "constant"}, {"alpha0", s.alpha0}};
        else if constexpr (std::is_same_v<S, periodic_rate>) return {{"kind", "periodic"}, {"alpha0", s.alpha0}, {"period", s.period}};
        else return {{"kind", "piecewise"}, {"alpha0", s.alpha0}, {"step", s.step}, {"seed", s.seed}};
    }, schedule);
}

inline rate_schedule schedule_from_json(const nlohmann::json& j) {
    auto kind = j.at("kind").get<std::string>();
    rate_schedule out;
    if (kind == "constant") out = constant_rate{j.at("alpha0").get<double>()};
    else if (kind == "periodic") out = periodic_rate{j.at("alpha0").get<double>(), j.value("period", 100.0)};
    else if (kind == "piecewise") out = piecewise_rate{j.at("alpha0").get<double>(), j.value("step", 10.0), j.value("seed", std::uint64_t{0})};
    else throw validation_error("unknown schedule kind '" + kind + "'");
    validate_schedule(out);
    return out;
}

enum class outlier_kind { commission, omission };

inline std::string_view to_string(outlier_kind k) {
    return k == outlier_kind::commission? "commission": "omission";
}

struct injection_report {
    outlier_kind kind = outlier_kind::commission;
    double lambda_hat = 0;       // empirical target rate of the input dataset
    std::size_t original_targets = 0;
    std::size_t added = 0;
    std::size_t removed = 0;
    std::size_t collisions = 0;  // injected times nudged off an existing target time
    nlohmann::json schedule;
    std::uint64_t seed = 0;

    // Commission: added / targets after injection. Omission: removed /
    // targets before injection. The ratio over scored test items is
    // computed by the evaluator.
    double realized_ratio() const {
        if (kind == outlier_kind::commission) {
            auto total = original_targets + added;
            return total? static_cast<double>(added)/static_cast<double>(total): 0.0;
        }
        return original_targets? static_cast<double>(removed)/static_cast<double>(original_targets): 0.0;
    }

    nlohmann::json to_json() const {
        return {{"kind", to_string(kind)}, {"lambda_hat", lambda_hat}, {"original_targets", original_targets},
                {"added", added}, {"removed", removed}, {"collisions", collisions},
                {"realized_ratio", realized_ratio()}, {"schedule", schedule}, {"seed", seed}};
    }
};

struct injection_result {
    dataset data;
    injection_report report;
};

inline injection_result inject_commission(const dataset& input, const rate_schedule& schedule, std::uint64_t seed) {
    validate_schedule(schedule);
    injection_result res{input, {}};
    auto& rep = res.report;
    rep.kind = outlier_kind::commission;
    rep.lambda_hat = empirical_rate(input);
    rep.schedule = schedule_to_json(schedule);
    rep.seed = seed;

    const double bound = schedule_scale(schedule)*rep.lambda_hat;
    for (std::size_t i = 0; i < res.data.sequences.size(); ++i) {
        auto& ls = res.data.sequences[i];
        auto& seq = ls.sequence;
        rep.original_targets += seq.target_count();
        if (!ls.labels) ls.labels.emplace();
        if (!(bound > 0)) continue;

        auto local = schedule_for_sequence(schedule, i);
        std::mt19937_64 rng(derive_seed(seed, "inject/commission", i));
        std::exponential_distribution<double> gap(bound);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        auto targets = seq.target_times();

        // Thinning against the constant bound alpha0 * lambda_hat.
        std::vector<double> added;
        for (double t = seq.span.begin + gap(rng); t < seq.span.end; t += gap(rng)) {
            double accept = eval_schedule(local, t)*rep.lambda_hat/bound;
            if (unif(rng) < accept) added.push_back(t);
        }
        for (double& t: added) {
            bool moved = false;
            while (std::binary_search(targets.begin(), targets.end(), t)) {
                t = std::nextafter(t, seq.span.end);
                moved = true;
            }
            if (moved) ++rep.collisions;
            seq.events.insert(std::upper_bound(seq.events.begin(), seq.events.end(), t,
                [](double x, const event& e) { return x < e.t; }), event{t, std::string(target_mark)});
            auto& c = ls.labels->commission;
            c.insert(std::upper_bound(c.begin(), c.end(), t), t);
        }
        rep.added += added.size();
    }
    return res;
}

inline injection_result inject_omission(const dataset& input, const rate_schedule& schedule, std::uint64_t seed) {
    validate_schedule(schedule);
    if (schedule_scale(schedule) > 1) throw validation_error("omission probability alpha(t) must lie in [0, 1]");
    injection_result res{input, {}};
    auto& rep = res.report;
    rep.kind = outlier_kind::omission;
    rep.lambda_hat = empirical_rate(input);
    rep.schedule = schedule_to_json(schedule);
    rep.seed = seed;

    for (std::size_t i = 0; i < res.data.sequences.size(); ++i) {
        auto& ls = res.data.sequences[i];
        auto& seq = ls.sequence;
        rep.original_targets += seq.target_count();
        if (!ls.labels) ls.labels.emplace();

        auto local = schedule_for_sequence(schedule, i);
        std::mt19937_64 rng(derive_seed(seed, "inject/omission", i));
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        std::vector<event> kept;
        kept.reserve(seq.events.size());
        bool first_target = true;
        for (auto& e: seq.events) {
            if (e.is_target()) {
                double p = eval_schedule(local, e.t);
                bool remove = !first_target && unif(rng) < p;
                first_target = false;
                if (remove) {
                    auto& r = ls.labels->removed;
                    r.insert(std::upper_bound(r.begin(), r.end(), e.t), e.t);
                    ++rep.removed;
                    continue;
                }
            }
            kept.push_back(std::move(e));
        }
        seq.events = std::move(kept);
    }
    return res;
}

} // namespace ppod
