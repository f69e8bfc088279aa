#pragma once

// Normal (outlier-free) synthetic data: a continuous-time Markov chain
// drives a context state; the target process is either a piecewise-constant
// Poisson process or a Gamma renewal process whose parameters depend on the
// state.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <ppod/common.hpp>
#include <ppod/events.hpp>

namespace ppod {

struct ctmc_spec {
    // Row-major square rate matrix; off-diagonals >= 0, rows sum to 0.
    std::vector<std::vector<double>> rates;
    // Initial-state distribution; empty means uniform.
    std::vector<double> initial;

    std::size_t states() const { return rates.size(); }

    void validate() const {
        const auto n = rates.size();
        if (n == 0) throw validation_error("CTMC needs at least one state");
        for (std::size_t i = 0; i < n; ++i) {
            if (rates[i].size() != n) throw validation_error("CTMC rate matrix must be square");
            double sum = 0, scale = 0;
            for (std::size_t j = 0; j < n; ++j) {
                double q = rates[i][j];
                if (!std::isfinite(q)) throw validation_error("CTMC rate matrix has a non-finite entry");
                if (i != j && q < 0) throw validation_error("CTMC off-diagonal rates must be non-negative");
                sum += q;
                scale += std::abs(q);
            }
            if (std::abs(sum) > 1e-9*std::max(1.0, scale)) throw validation_error("CTMC rate matrix rows must sum to zero");
        }
        if (!initial.empty()) {
            if (initial.size() != n) throw validation_error("CTMC initial distribution has the wrong size");
            double total = 0;
            for (double p: initial) {
                if (!(p >= 0)) throw validation_error("CTMC initial probabilities must be non-negative");
                total += p;
            }
            if (std::abs(total - 1) > 1e-9) throw validation_error("CTMC initial distribution must sum to 1");
        }
    }
};

struct poisson_spec {
    std::vector<double> intensity;  // per state

    void validate(std::size_t states) const {
        if (intensity.size() != states) throw validation_error("Poisson spec needs one intensity per context state");
        for (double l: intensity) {
            if (!(l >= 0) || !std::isfinite(l)) throw validation_error("Poisson intensities must be finite and non-negative");
        }
    }
};

struct gamma_params {
    double shape = 1;
    double rate = 1;
};

struct gamma_spec {
    std::vector<gamma_params> params;  // per state

    void validate(std::size_t states) const {
        if (params.size() != states) throw validation_error("Gamma spec needs one (shape, rate) pair per context state");
        for (auto p: params) {
            if (!(p.shape > 0) || !(p.rate > 0) || !std::isfinite(p.shape) || !std::isfinite(p.rate)) {
                throw validation_error("Gamma shape and rate must be positive");
            }
        }
    }
};

using target_spec = std::variant<poisson_spec, gamma_spec>;

struct process_spec {
    ctmc_spec context;
    target_spec target;

    bool is_poisson() const { return std::holds_alternative<poisson_spec>(target); }

    void validate() const {
        context.validate();
        std::visit([&](const auto& t) { t.validate(context.states()); }, target);
    }
};

// Two-state chain with symmetric switching rate 0.05.
inline ctmc_spec default_context() {
    return {{{-0.05, 0.05}, {0.05, -0.05}}, {}};
}

inline process_spec default_poisson() {
    return {default_context(), poisson_spec{{0.1, 1.0}}};
}

inline process_spec default_gamma() {
    return {default_context(), gamma_spec{{{10, 10}, {100, 10}}}};
}

inline std::string context_mark(std::size_t state) {
    return "c" + std::to_string(state);
}

inline std::vector<std::string> context_marks(std::size_t states) {
    std::vector<std::string> out;
    for (std::size_t s = 0; s < states; ++s) out.push_back(context_mark(s));
    return out;
}

struct state_switch {
    double t;
    std::size_t state;
};

struct context_trajectory {
    time_span span;
    std::size_t initial_state = 0;
    std::vector<state_switch> switches;  // strictly increasing times inside the span

    // State in force at t; a switch at exactly t is already in force.
    std::size_t state_at(double t) const {
        auto it = std::upper_bound(switches.begin(), switches.end(), t,
            [](double x, const state_switch& s) { return x < s.t; });
        return it == switches.begin()? initial_state: std::prev(it)->state;
    }

    // One context event announcing the initial state at the span start,
    // then one per switch, marked with the new state.
    std::vector<event> context_events() const {
        std::vector<event> out;
        out.push_back({span.begin, context_mark(initial_state)});
        for (const auto& s: switches) out.push_back({s.t, context_mark(s.state)});
        return out;
    }
};

template <typename Rng>
context_trajectory sample_ctmc(const ctmc_spec& spec, const time_span& span, Rng& rng) {
    const std::size_t n = spec.states();
    context_trajectory traj;
    traj.span = span;
    if (spec.initial.empty()) {
        traj.initial_state = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    }
    else {
        traj.initial_state = std::discrete_distribution<std::size_t>(spec.initial.begin(), spec.initial.end())(rng);
    }

    std::size_t state = traj.initial_state;
    double t = span.begin;
    for (;;) {
        double leave = -spec.rates[state][state];
        if (!(leave > 0)) break;  // absorbing
        t += std::exponential_distribution<double>(leave)(rng);
        if (t >= span.end) break;
        std::vector<double> weights(n, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j != state) weights[j] = spec.rates[state][j];
        }
        state = std::discrete_distribution<std::size_t>(weights.begin(), weights.end())(rng);
        traj.switches.push_back({t, state});
    }
    return traj;
}

inline context_trajectory sample_ctmc(const ctmc_spec& spec, const time_span& span, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return sample_ctmc(spec, span, rng);
}

// Exact sampling segment by segment: within a constant-state segment the
// process is homogeneous, and memorylessness lets each segment restart.
template <typename Rng>
std::vector<double> sample_poisson_targets(const poisson_spec& spec, const context_trajectory& traj, Rng& rng) {
    std::vector<double> out;
    double seg_begin = traj.span.begin;
    std::size_t state = traj.initial_state;
    auto run_segment = [&](double seg_end) {
        double rate = spec.intensity[state];
        if (!(rate > 0)) return;
        std::exponential_distribution<double> gap(rate);
        for (double t = seg_begin + gap(rng); t < seg_end; t += gap(rng)) out.push_back(t);
    };
    for (const auto& s: traj.switches) {
        run_segment(s.t);
        seg_begin = s.t;
        state = s.state;
    }
    run_segment(traj.span.end);
    return out;
}

// Renewal process: each gap is Gamma(shape, rate) with the parameters of the
// state at the previous event (the span start for the first gap). A state
// switch during a gap does not resample it.
template <typename Rng>
std::vector<double> sample_gamma_targets(const gamma_spec& spec, const context_trajectory& traj, Rng& rng) {
    std::vector<double> out;
    double t = traj.span.begin;
    for (;;) {
        auto p = spec.params[traj.state_at(t)];
        t += std::gamma_distribution<double>(p.shape, 1/p.rate)(rng);
        if (t >= traj.span.end) break;
        out.push_back(t);
    }
    return out;
}

inline event_sequence make_sequence(std::string id, const context_trajectory& traj, const std::vector<double>& targets) {
    event_sequence seq{std::move(id), traj.span, traj.context_events()};
    for (double t: targets) seq.events.push_back({t, std::string(target_mark)});
    std::stable_sort(seq.events.begin(), seq.events.end(), event_before);
    return seq;
}

// One sequence: CTMC trajectory plus targets, both from streams derived
// from (seed, index).
inline event_sequence simulate_sequence(const process_spec& spec, const time_span& span, std::uint64_t seed, std::size_t index) {
    std::mt19937_64 ctx_rng(derive_seed(seed, "simulate/context", index));
    std::mt19937_64 tgt_rng(derive_seed(seed, "simulate/target", index));
    auto traj = sample_ctmc(spec.context, span, ctx_rng);
    auto targets = std::visit([&](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, poisson_spec>) return sample_poisson_targets(t, traj, tgt_rng);
        else return sample_gamma_targets(t, traj, tgt_rng);
    }, spec.target);
    return make_sequence("s" + std::to_string(index), traj, targets);
}

inline dataset simulate_dataset(const process_spec& spec, std::size_t n_sequences, const time_span& span, std::uint64_t seed, unsigned jobs = 1) {
    spec.validate();
    if (n_sequences < 1) throw validation_error("simulate needs at least one sequence");
    if (!(span.begin < span.end)) throw validation_error("simulation span must have begin < end");

    dataset data;
    data.context_marks = context_marks(spec.context.states());
    data.sequences.resize(n_sequences);
    parallel_for(n_sequences, jobs, [&](std::size_t i) {
        data.sequences[i].sequence = simulate_sequence(spec, span, seed, i);
    });
    return data;
}

} // namespace ppod
