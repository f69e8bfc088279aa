#pragma once

// Conditional intensity models. A model is bound to one observed sequence;
// the resulting session answers intensity and integrated-intensity queries
// conditioned on the history before the query time (context events stamped
// exactly at the query time included).

#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include <ppod/events.hpp>

namespace ppod {

class cif_session {
public:
    virtual ~cif_session() = default;

    // lambda0(t | H_t) >= 0.
    virtual double intensity(double t) const = 0;

    // Integral of lambda0 over (b, e). Valid when no target event lies
    // strictly inside (b, e); a target event at b is part of the history.
    virtual double cumulative(double b, double e) const = 0;
};

class cif_model {
public:
    virtual ~cif_model() = default;
    virtual std::unique_ptr<cif_session> bind(const event_sequence& seq) const = 0;
    virtual std::string kind() const = 0;
};

// Constant intensity, independent of history.
class homogeneous_model: public cif_model {
public:
    explicit homogeneous_model(double rate): rate_(rate) {}

    std::unique_ptr<cif_session> bind(const event_sequence&) const override {
        struct session: cif_session {
            double rate;
            explicit session(double r): rate(r) {}
            double intensity(double) const override { return rate; }
            double cumulative(double b, double e) const override { return rate*(e - b); }
        };
        return std::make_unique<session>(rate_);
    }

    std::string kind() const override { return "homogeneous"; }

private:
    double rate_;
};

// Sum of log-intensities at the target events minus the integrated
// intensity over the span, the integral taken blank interval by blank
// interval. Returns -infinity when some observed event has zero intensity.
inline double log_likelihood(const cif_model& model, const event_sequence& seq) {
    auto session = model.bind(seq);
    double ll = 0;
    for (double t: seq.target_times()) {
        double l = session->intensity(t);
        if (!(l > 0)) return -std::numeric_limits<double>::infinity();
        ll += std::log(l);
    }
    for (const auto& b: blank_intervals(seq)) ll -= session->cumulative(b.begin, b.end);
    return ll;
}

} // namespace ppod
