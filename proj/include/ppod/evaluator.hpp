#pragma once

// AUROC, empirical FDR/FPR curves, the three theoretical bounds and the
// repetition harness that checks empirical rates against them with the
// ground-truth model.

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include <ppod/common.hpp>
#include <ppod/detector.hpp>
#include <ppod/injector.hpp>
#include <ppod/models/ground_truth.hpp>
#include <ppod/simulator.hpp>

namespace ppod {

struct roc_result {
    double auroc = 0;
    std::vector<double> fpr;   // curve from (0, 0) to (1, 1)
    std::vector<double> tpr;
    std::size_t positives = 0;
    std::size_t negatives = 0;
};

// Probability that a random positive outscores a random negative, ties
// counted one half; equal to the trapezoidal area under the ROC curve whose
// vertices are the distinct score levels.
inline roc_result auroc(const std::vector<scored_item>& items) {
    roc_result r;
    std::vector<std::pair<double, int>> s;
    s.reserve(items.size());
    for (const auto& it: items) {
        if (std::isnan(it.score)) throw validation_error("auroc: NaN score");
        s.emplace_back(it.score, it.truth);
        (it.truth? r.positives: r.negatives) += 1;
    }
    if (r.positives == 0 || r.negatives == 0) throw validation_error("auroc: need at least one positive and one negative item");
    std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

    const double P = static_cast<double>(r.positives), N = static_cast<double>(r.negatives);
    double tp = 0, fp = 0, area2 = 0;   // twice the area in count units
    r.fpr.push_back(0);
    r.tpr.push_back(0);
    for (std::size_t i = 0; i < s.size();) {
        double gtp = 0, gfp = 0;
        std::size_t j = i;
        for (; j < s.size() && s[j].first == s[i].first; ++j) (s[j].second? gtp: gfp) += 1;
        area2 += gfp*(2*tp + gtp);
        tp += gtp;
        fp += gfp;
        r.fpr.push_back(fp/N);
        r.tpr.push_back(tp/P);
        i = j;
    }
    r.auroc = area2/(2*P*N);
    return r;
}

// Positives over all items.
inline double outlier_ratio(const std::vector<scored_item>& items) {
    if (items.empty()) throw validation_error("outlier ratio: no items");
    double pos = 0;
    for (const auto& it: items) pos += it.truth;
    return pos/static_cast<double>(items.size());
}

struct rate_point {
    double threshold;
    std::size_t predicted;   // score > threshold
    std::size_t true_pos;
    std::size_t false_pos;
    std::size_t negatives;
    std::optional<double> fdr;   // absent when nothing is flagged
    std::optional<double> fpr;   // absent when there are no negatives
};

// Empirical FDR and FPR of the rule score > threshold at each threshold.
inline std::vector<rate_point> fdr_fpr_curves(const std::vector<scored_item>& items, const std::vector<double>& thresholds) {
    if (items.empty()) throw validation_error("fdr/fpr curves: no items");
    if (!std::is_sorted(thresholds.begin(), thresholds.end())) throw validation_error("fdr/fpr curves: thresholds must be sorted");
    std::vector<double> pos, neg;
    for (const auto& it: items) (it.truth? pos: neg).push_back(it.score);
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());
    auto above = [](const std::vector<double>& v, double th) {
        return static_cast<std::size_t>(v.end() - std::upper_bound(v.begin(), v.end(), th));
    };
    std::vector<rate_point> out;
    for (double th: thresholds) {
        rate_point p{th, 0, above(pos, th), above(neg, th), neg.size(), std::nullopt, std::nullopt};
        p.predicted = p.true_pos + p.false_pos;
        if (p.predicted > 0) p.fdr = static_cast<double>(p.false_pos)/static_cast<double>(p.predicted);
        if (p.negatives > 0) p.fpr = static_cast<double>(p.false_pos)/static_cast<double>(p.negatives);
        out.push_back(p);
    }
    return out;
}

// FDR bound for commission scores at threshold theta_c <= 0.
inline double theorem1_bound(double theta_c, double lambda1) {
    if (!(theta_c <= 0)) throw validation_error("commission FDR bound: threshold must be <= 0");
    if (!(lambda1 > 0)) throw validation_error("commission FDR bound: lambda1 must be positive");
    return -theta_c/(lambda1 - theta_c);
}

// FPR bound for omission scores of inter-event intervals.
inline double theorem2_bound(double theta_o) {
    if (!(theta_o >= 0)) throw validation_error("omission FPR bound: threshold must be >= 0");
    return std::exp(-theta_o);
}

// FDR bound for omission scores under a Poisson normal process.
inline double theorem3_bound(double theta_o, double p1) {
    if (!(theta_o >= 0)) throw validation_error("omission FDR bound: threshold must be >= 0");
    if (!(p1 >= 0 && p1 <= 1)) throw validation_error("omission FDR bound: p1 must lie in [0, 1]");
    return std::exp(-p1*theta_o);
}

inline std::vector<double> linear_grid(double from, double to, std::size_t points) {
    if (points < 2) throw validation_error("grid needs at least 2 points");
    std::vector<double> g(points);
    for (std::size_t i = 0; i < points; ++i) {
        g[i] = (from*static_cast<double>(points - 1 - i) + to*static_cast<double>(i))/static_cast<double>(points - 1);
    }
    return g;
}

// ---- bound verification -----------------------------------------------

struct bound_point {
    double threshold = 0;
    double bound = 0;                          // mean over repetitions when the bound varies
    std::vector<std::optional<double>> rates;  // one per repetition
    std::vector<std::size_t> predicted;        // one per repetition
    summary stats;                             // over the defined rates
    bool checked = false;
    bool violation = false;
};

struct bound_curve {
    std::string name;       // "theorem1", "theorem2", "theorem3"
    std::string rate;       // "fdr" or "fpr"
    std::vector<bound_point> points;

    std::size_t violations() const {
        return static_cast<std::size_t>(std::count_if(points.begin(), points.end(), [](const auto& p) { return p.violation; }));
    }

    const bound_point& at(double threshold) const {
        for (const auto& p: points) if (p.threshold == threshold) return p;
        throw validation_error("bound curve " + name + " has no grid point at " + format_double(threshold));
    }
};

struct bounds_config {
    process_spec process = default_poisson();
    double alpha0 = 0.1;
    std::size_t repetitions = 10;
    std::size_t n_sequences = 40;
    time_span span{0, 1000};
    double train_fraction = 0.5;
    std::vector<double> commission_grid = linear_grid(-2, 0, 41);
    std::vector<double> omission_grid = linear_grid(0, 5, 51);
    std::size_t min_positives = 30;
    double std_band = 2;

    void validate() const {
        process.validate();
        if (!(alpha0 > 0 && alpha0 <= 1)) throw validation_error("verify-bounds: alpha0 must lie in (0, 1]");
        if (repetitions < 2) throw validation_error("verify-bounds: need at least 2 repetitions");
        if (n_sequences < 2) throw validation_error("verify-bounds: need at least 2 sequences");
        for (double th: commission_grid) if (!(th <= 0)) throw validation_error("verify-bounds: commission thresholds must be <= 0");
        for (double th: omission_grid) if (!(th >= 0)) throw validation_error("verify-bounds: omission thresholds must be >= 0");
    }
};

struct bounds_report {
    std::vector<bound_curve> curves;
    std::vector<double> lambda1;   // per repetition
    std::vector<double> lambda_hat_train;

    const bound_curve& curve(std::string_view name) const {
        for (const auto& c: curves) if (c.name == name) return c;
        throw validation_error("bounds report has no curve " + std::string(name));
    }

    std::size_t violations() const {
        std::size_t n = 0;
        for (const auto& c: curves) n += c.violations();
        return n;
    }

    nlohmann::json to_json() const {
        auto cs = nlohmann::json::array();
        for (const auto& c: curves) {
            auto pts = nlohmann::json::array();
            for (const auto& p: c.points) {
                auto rates = nlohmann::json::array();
                for (const auto& r: p.rates) rates.push_back(r? nlohmann::json(*r): nlohmann::json(nullptr));
                pts.push_back({{"threshold", p.threshold}, {"bound", p.bound}, {"mean", p.stats.mean},
                               {"std", p.stats.stddev}, {"n", p.stats.n}, {"predicted", p.predicted},
                               {"rates", rates}, {"checked", p.checked}, {"violation", p.violation}});
            }
            cs.push_back({{"name", c.name}, {"rate", c.rate}, {"violations", c.violations()}, {"points", pts}});
        }
        return {{"curves", cs}, {"lambda1", lambda1}, {"lambda_hat_train", lambda_hat_train}, {"violations", violations()}};
    }

    // One row per (curve, threshold).
    void write_csv(std::ostream& out) const {
        out << "curve,rate,threshold,bound,mean,std,n,checked,violation\n";
        for (const auto& c: curves) {
            for (const auto& p: c.points) {
                out << c.name << ',' << c.rate << ',' << format_double(p.threshold) << ',' << format_double(p.bound) << ','
                    << (p.stats.n? format_double(p.stats.mean): std::string()) << ','
                    << (p.stats.n? format_double(p.stats.stddev): std::string()) << ',' << p.stats.n << ','
                    << int(p.checked) << ',' << int(p.violation) << '\n';
            }
        }
    }
};

namespace detail {

struct repetition_rates {
    std::vector<rate_point> commission_fdr;
    std::vector<rate_point> omission_fdr;
    std::vector<rate_point> inter_event_fpr;
    double lambda1 = 0;
    double lambda_hat_train = 0;
};

inline repetition_rates bounds_repetition(const bounds_config& cfg, const cif_model& gt, std::uint64_t seed) {
    repetition_rates out;
    auto data = simulate_dataset(cfg.process, cfg.n_sequences, cfg.span, derive_seed(seed, "simulate"));
    auto [train, test] = split_train_test(data, cfg.train_fraction, derive_seed(seed, "split"));
    out.lambda_hat_train = empirical_rate(train);
    cif_scorer scorer(gt, "GT");

    auto com = inject_commission(test, constant_rate{cfg.alpha0}, derive_seed(seed, "inject/commission"));
    out.lambda1 = cfg.alpha0*com.report.lambda_hat;
    auto com_items = filter_kind(run_detection(scorer, com.data, out.lambda_hat_train, derive_seed(seed, "detect/commission")), outlier_kind::commission);
    out.commission_fdr = fdr_fpr_curves(com_items, cfg.commission_grid);

    auto om = inject_omission(test, constant_rate{cfg.alpha0}, derive_seed(seed, "inject/omission"));
    auto om_items = filter_kind(run_detection(scorer, om.data, out.lambda_hat_train, derive_seed(seed, "detect/omission")), outlier_kind::omission);
    out.omission_fdr = fdr_fpr_curves(om_items, cfg.omission_grid);
    out.inter_event_fpr = fdr_fpr_curves(score_inter_event_intervals(scorer, om.data, derive_seed(seed, "detect/inter-event")), cfg.omission_grid);
    return out;
}

} // namespace detail

// Simulate -> split -> inject (test) -> detect with the ground-truth model,
// repeated with derived seeds. A grid point is checked when every
// repetition defines the rate (and, for FDR, flags at least min_positives
// items); it is a violation when mean > bound + std_band * std.
inline bounds_report verify_bounds(const bounds_config& cfg, std::uint64_t seed, unsigned jobs = 1) {
    cfg.validate();
    auto gt = make_ground_truth(cfg.process);
    std::vector<detail::repetition_rates> reps(cfg.repetitions);
    parallel_for(cfg.repetitions, jobs, [&](std::size_t r) {
        reps[r] = detail::bounds_repetition(cfg, *gt, derive_seed(seed, "bounds/repetition", r));
    });

    bounds_report report;
    for (const auto& r: reps) {
        report.lambda1.push_back(r.lambda1);
        report.lambda_hat_train.push_back(r.lambda_hat_train);
    }

    auto build = [&](std::string name, std::string rate, auto field, auto bound_at, bool is_fdr) {
        bound_curve c{std::move(name), std::move(rate), {}};
        const auto& grid = (reps.front().*field);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            bound_point p;
            p.threshold = grid[i].threshold;
            bool all_defined = true;
            std::vector<double> defined;
            double bound_sum = 0;
            for (std::size_t r = 0; r < reps.size(); ++r) {
                const auto& rp = (reps[r].*field)[i];
                auto v = is_fdr? rp.fdr: rp.fpr;
                p.rates.push_back(v);
                p.predicted.push_back(rp.predicted);
                if (v) defined.push_back(*v);
                if (!v || (is_fdr && rp.predicted < cfg.min_positives)) all_defined = false;
                bound_sum += bound_at(p.threshold, reps[r]);
            }
            p.bound = bound_sum/static_cast<double>(reps.size());
            p.stats = summarize(defined);
            p.checked = all_defined;
            p.violation = p.checked && p.stats.mean > p.bound + cfg.std_band*p.stats.stddev;
            c.points.push_back(std::move(p));
        }
        report.curves.push_back(std::move(c));
    };

    build("theorem1", "fdr", &detail::repetition_rates::commission_fdr,
          [](double th, const detail::repetition_rates& r) { return theorem1_bound(th, r.lambda1); }, true);
    build("theorem2", "fpr", &detail::repetition_rates::inter_event_fpr,
          [](double th, const detail::repetition_rates&) { return theorem2_bound(th); }, false);
    if (cfg.process.is_poisson()) {
        build("theorem3", "fdr", &detail::repetition_rates::omission_fdr,
              [&](double th, const detail::repetition_rates&) { return theorem3_bound(th, cfg.alpha0); }, true);
    }
    return report;
}

} // namespace ppod
