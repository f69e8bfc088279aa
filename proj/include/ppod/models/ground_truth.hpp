#pragma once

// Analytic intensities of the synthetic generators, with the context state
// reconstructed from the observed context events ("c<k>" marks).

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include <ppod/models/cif.hpp>
#include <ppod/simulator.hpp>

namespace ppod {

// log of the Gamma(shape a, rate b) survival function at tau. Switches to a
// log-space continued fraction once the survival drops below ~1e-280.
inline double gamma_log_survival(double a, double b, double tau) {
    if (tau < 0) throw validation_error("gamma survival: negative time");
    const double x = b*tau;
    if (x <= 0) return 0;
    double p = boost::math::gamma_p(a, x);
    if (p < 0.5) return std::log1p(-p);
    double q = boost::math::gamma_q(a, x);
    if (q > 1e-280) return std::log(q);

    // Lentz evaluation of the continued fraction for Q(a, x), x > a + 1.
    constexpr double tiny = 1e-300;
    double bn = x + 1 - a;
    double c = 1/tiny;
    double d = 1/bn;
    double h = d;
    for (int i = 1; i < 10000; ++i) {
        double an = -i*(i - a);
        bn += 2;
        d = an*d + bn;
        if (std::abs(d) < tiny) d = tiny;
        c = bn + an/c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1/d;
        double delta = d*c;
        h *= delta;
        if (std::abs(delta - 1) < 1e-15) break;
    }
    return -x + a*std::log(x) - std::lgamma(a) + std::log(h);
}

inline double gamma_log_pdf(double a, double b, double tau) {
    return a*std::log(b) + (a - 1)*std::log(tau) - b*tau - std::lgamma(a);
}

// Hazard pdf/survival of Gamma(a, b) at tau >= 0.
inline double gt_gamma_hazard(double a, double b, double tau) {
    if (!(a > 0) || !(b > 0)) throw validation_error("gamma hazard: shape and rate must be positive");
    if (tau < 0) throw validation_error("gamma hazard: negative time since last event");
    if (tau == 0) {
        if (a > 1) return 0;
        if (a == 1) return b;
        return std::numeric_limits<double>::infinity();
    }
    return std::exp(gamma_log_pdf(a, b, tau) - gamma_log_survival(a, b, tau));
}

namespace detail {

// Context state path recovered from "c<k>" marks.
class observed_states {
public:
    observed_states(const event_sequence& seq, std::size_t n_states) {
        for (const auto& e: seq.events) {
            if (e.is_target()) continue;
            std::size_t k = 0;
            bool ok = e.mark.size() >= 2 && e.mark[0] == 'c';
            if (ok) {
                const char* last = e.mark.data() + e.mark.size();
                auto [p, ec] = std::from_chars(e.mark.data() + 1, last, k);
                ok = ec == std::errc{} && p == last && k < n_states;
            }
            if (!ok) {
                throw validation_error("ground-truth model cannot interpret context mark \"" + e.mark + "\"");
            }
            switches_.push_back({e.t, k});
        }
    }

    // State in force at t (context events at exactly t included). Before
    // the first context event the chain is taken to be in state 0.
    std::size_t at(double t) const {
        auto it = std::upper_bound(switches_.begin(), switches_.end(), t,
            [](double x, const state_switch& s) { return x < s.t; });
        return it == switches_.begin()? 0: std::prev(it)->state;
    }

    const std::vector<state_switch>& switches() const { return switches_; }

private:
    std::vector<state_switch> switches_;
};

} // namespace detail

class gt_poisson_model: public cif_model {
public:
    explicit gt_poisson_model(poisson_spec spec): spec_(std::move(spec)) {
        spec_.validate(spec_.intensity.size());
    }

    const poisson_spec& spec() const { return spec_; }
    std::string kind() const override { return "gt-poisson"; }

    std::unique_ptr<cif_session> bind(const event_sequence& seq) const override {
        return std::make_unique<session>(spec_, detail::observed_states(seq, spec_.intensity.size()));
    }

private:
    struct session: cif_session {
        session(const poisson_spec& s, detail::observed_states st): spec(s), states(std::move(st)) {}

        double intensity(double t) const override { return spec.intensity[states.at(t)]; }

        double cumulative(double b, double e) const override {
            if (e <= b) return 0;
            double total = 0, from = b;
            std::size_t state = states.at(b);
            const auto& sw = states.switches();
            auto it = std::upper_bound(sw.begin(), sw.end(), b,
                [](double x, const state_switch& s) { return x < s.t; });
            for (; it != sw.end() && it->t < e; ++it) {
                total += spec.intensity[state]*(it->t - from);
                from = it->t;
                state = it->state;
            }
            return total + spec.intensity[state]*(e - from);
        }

        poisson_spec spec;
        detail::observed_states states;
    };

    poisson_spec spec_;
};

// Gamma renewal intensity: the hazard of the gap distribution selected by
// the state at the last observed target event (the span start when there is
// none), evaluated at the time elapsed since that event.
class gt_gamma_model: public cif_model {
public:
    explicit gt_gamma_model(gamma_spec spec): spec_(std::move(spec)) {
        spec_.validate(spec_.params.size());
    }

    const gamma_spec& spec() const { return spec_; }
    std::string kind() const override { return "gt-gamma"; }

    std::unique_ptr<cif_session> bind(const event_sequence& seq) const override {
        return std::make_unique<session>(spec_, seq.span.begin, seq.target_times(),
                                         detail::observed_states(seq, spec_.params.size()));
    }

private:
    struct session: cif_session {
        session(const gamma_spec& s, double origin, std::vector<double> tg, detail::observed_states st):
            spec(s), origin(origin), targets(std::move(tg)), states(std::move(st)) {}

        double intensity(double t) const override {
            auto it = std::lower_bound(targets.begin(), targets.end(), t);
            double last = it == targets.begin()? origin: *std::prev(it);
            auto p = spec.params[states.at(last)];
            return gt_gamma_hazard(p.shape, p.rate, t - last);
        }

        double cumulative(double b, double e) const override {
            if (e <= b) return 0;
            auto it = std::upper_bound(targets.begin(), targets.end(), b);
            double last = it == targets.begin()? origin: *std::prev(it);
            auto p = spec.params[states.at(last)];
            return gamma_log_survival(p.shape, p.rate, b - last) - gamma_log_survival(p.shape, p.rate, e - last);
        }

        gamma_spec spec;
        double origin;
        std::vector<double> targets;
        detail::observed_states states;
    };

    gamma_spec spec_;
};

inline std::unique_ptr<cif_model> make_ground_truth(const process_spec& spec) {
    if (auto* p = std::get_if<poisson_spec>(&spec.target)) return std::make_unique<gt_poisson_model>(*p);
    return std::make_unique<gt_gamma_model>(std::get<gamma_spec>(spec.target));
}

} // namespace ppod
