#pragma once

// Maximum-likelihood training of the CT-LSTM with Adam, an internal
// validation split and hidden-size selection by validation NLL.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <ppod/common.hpp>
#include <ppod/events.hpp>
#include <ppod/models/ctlstm.hpp>

namespace ppod {

struct train_config {
    std::vector<int> hidden_grid{8, 16, 32};
    double validation_fraction = 0.2;
    // MC strata per mean inter-event gap: stratum length <= 1/(density * rate).
    double mc_density = 1.0;
    double learning_rate = 1e-2;
    int iterations = 2000;
    int patience = 50;          // iterations without validation improvement
    int eval_every = 10;
    int batch_size = 0;         // 0: full batch
    double tolerance = 0;       // minimum validation NLL decrease counted as progress
    double init_scale = 0.1;
    std::uint64_t seed = 0;

    void validate() const {
        if (hidden_grid.empty()) throw validation_error("train: hidden grid is empty");
        for (int d: hidden_grid) if (d < 1) throw validation_error("train: hidden sizes must be positive");
        if (!(validation_fraction > 0 && validation_fraction < 1)) throw validation_error("train: validation fraction must lie in (0, 1)");
        if (!(mc_density > 0)) throw validation_error("train: mc_density must be positive");
        if (!(learning_rate > 0)) throw validation_error("train: learning rate must be positive");
        if (iterations < 1) throw validation_error("train: iteration budget must be positive");
        if (patience < 1 || eval_every < 1) throw validation_error("train: patience and eval_every must be positive");
        if (batch_size < 0) throw validation_error("train: batch_size must be >= 0");
        if (!(tolerance >= 0)) throw validation_error("train: tolerance must be >= 0");
        if (!(init_scale > 0)) throw validation_error("train: init_scale must be positive");
    }

    nlohmann::json to_json() const {
        return {{"hidden_grid", hidden_grid}, {"validation_fraction", validation_fraction}, {"mc_density", mc_density},
                {"learning_rate", learning_rate}, {"iterations", iterations}, {"patience", patience},
                {"eval_every", eval_every}, {"batch_size", batch_size}, {"tolerance", tolerance},
                {"init_scale", init_scale}, {"seed", seed}, {"optimizer", "adam(0.9, 0.999, 1e-8)"}};
    }

    static train_config from_json(const nlohmann::json& j) {
        train_config c;
        c.hidden_grid = j.value("hidden_grid", c.hidden_grid);
        c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
        c.mc_density = j.value("mc_density", c.mc_density);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.iterations = j.value("iterations", c.iterations);
        c.patience = j.value("patience", c.patience);
        c.eval_every = j.value("eval_every", c.eval_every);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.tolerance = j.value("tolerance", c.tolerance);
        c.init_scale = j.value("init_scale", c.init_scale);
        c.seed = j.value("seed", c.seed);
        c.validate();
        return c;
    }
};

struct train_log_entry {
    int hidden;
    int iteration;
    double train_nll;   // per target event, fixed MC points
    double val_nll;
};

struct train_result {
    ctlstm_model model;
    int selected_hidden = 0;
    double best_val_nll = 0;
    std::vector<train_log_entry> log;
    train_config config;

    nlohmann::json log_json() const {
        auto rows = nlohmann::json::array();
        for (const auto& e: log) rows.push_back({{"hidden", e.hidden}, {"iteration", e.iteration}, {"train_nll", e.train_nll}, {"val_nll", e.val_nll}});
        return {{"config", config.to_json()}, {"selected_hidden", selected_hidden}, {"best_val_nll", best_val_nll}, {"entries", rows}};
    }

    nlohmann::json model_json() const {
        auto j = model.to_json();
        j["train_config"] = config.to_json();
        return j;
    }
};

namespace detail {

struct train_set {
    std::vector<const event_sequence*> seqs;
    std::vector<std::vector<mc_sample>> fixed_plans;   // for logged NLL
    double targets = 0;
};

inline train_set make_train_set(const dataset& data, double stratum, std::uint64_t seed, std::string_view stage) {
    train_set s;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& seq = data.sequences[i].sequence;
        s.seqs.push_back(&seq);
        std::mt19937_64 rng(derive_seed(seed, stage, i));
        s.fixed_plans.push_back(mc_plan(seq, stratum, rng));
        s.targets += static_cast<double>(seq.target_count());
    }
    if (!(s.targets > 0)) throw validation_error("train: a data split has no target events");
    return s;
}

inline double mean_nll(const ctlstm_model& model, const train_set& s, unsigned jobs) {
    std::vector<double> ll(s.seqs.size());
    parallel_for(s.seqs.size(), jobs, [&](std::size_t i) { ll[i] = ctlstm_log_likelihood(model, *s.seqs[i], s.fixed_plans[i]); });
    double total = 0;
    for (double v: ll) total += v;
    return -total/s.targets;
}

} // namespace detail

// Trains one hidden size; returns the parameters with the best validation
// NLL and appends log entries.
inline ctlstm_model ctlstm_train_one(const std::vector<std::string>& context_marks, int hidden, history_view view,
                                     const detail::train_set& train, const detail::train_set& val, double stratum,
                                     const train_config& cfg, std::vector<train_log_entry>& log, double& best_val,
                                     unsigned jobs = 1) {
    ctlstm_model model(context_marks, hidden, view);
    model.initialize(derive_seed(cfg.seed, "ctlstm/init", static_cast<std::uint64_t>(hidden)), cfg.init_scale);
    ctlstm_model best = model;
    best_val = std::numeric_limits<double>::infinity();

    const auto P = model.parameter_count();
    Eigen::VectorXd m = Eigen::VectorXd::Zero(P), v = Eigen::VectorXd::Zero(P);
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    const std::size_t n = train.seqs.size();
    const std::size_t batch = cfg.batch_size > 0? std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n): n;
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, "ctlstm/batches", static_cast<std::uint64_t>(hidden)));
    std::size_t cursor = n;
    int since_best = 0;

    auto record = [&](int iteration) {
        double tr = detail::mean_nll(model, train, jobs);
        double va = detail::mean_nll(model, val, jobs);
        if (!std::isfinite(tr) || !std::isfinite(va)) {
            throw numerical_error("CT-LSTM training diverged at iteration " + std::to_string(iteration) + " (hidden " + std::to_string(hidden) + ")");
        }
        log.push_back({hidden, iteration, tr, va});
        if (va < best_val - cfg.tolerance) {
            best_val = va;
            best = model;
            since_best = 0;
        }
    };

    record(0);
    std::vector<Eigen::VectorXd> grads;
    for (int it = 1; it <= cfg.iterations; ++it) {
        if (cursor + batch > n) {
            std::shuffle(order.begin(), order.end(), shuffle_rng);
            cursor = 0;
        }
        std::vector<std::size_t> picked(order.begin() + static_cast<std::ptrdiff_t>(cursor), order.begin() + static_cast<std::ptrdiff_t>(cursor + batch));
        cursor += batch;

        grads.assign(batch, Eigen::VectorXd());
        std::vector<double> lls(batch, 0.0);
        try {
            parallel_for(batch, jobs, [&](std::size_t b) {
                const auto i = picked[b];
                std::mt19937_64 rng(derive_seed(derive_seed(cfg.seed, "ctlstm/mc", static_cast<std::uint64_t>(it)), "sequence", i));
                auto plan = mc_plan(*train.seqs[i], stratum, rng);
                auto g = ctlstm_gradient(model, *train.seqs[i], plan);
                lls[b] = g.ll;
                grads[b] = std::move(g.grad);
            });
        }
        catch (const numerical_error& e) {
            throw numerical_error("CT-LSTM training diverged at iteration " + std::to_string(it) + ": " + e.what());
        }
        double targets = 0;
        Eigen::VectorXd g = Eigen::VectorXd::Zero(P);
        for (std::size_t b = 0; b < batch; ++b) {
            g -= grads[b];
            targets += static_cast<double>(train.seqs[picked[b]]->target_count());
            if (!std::isfinite(lls[b])) throw numerical_error("CT-LSTM training diverged at iteration " + std::to_string(it));
        }
        g /= std::max(targets, 1.0);
        if (!g.allFinite()) throw numerical_error("CT-LSTM training diverged at iteration " + std::to_string(it) + ": non-finite gradient");

        m = beta1*m + (1 - beta1)*g;
        v = beta2*v + (1 - beta2)*g.cwiseAbs2();
        const double c1 = 1 - std::pow(beta1, it), c2 = 1 - std::pow(beta2, it);
        model.parameters().array() -= cfg.learning_rate*(m.array()/c1)/((v.array()/c2).sqrt() + eps);

        since_best += 1;
        if (it % cfg.eval_every == 0 || it == cfg.iterations) {
            record(it);
            if (since_best >= cfg.patience) break;
        }
    }
    return best;
}

// Grid search over hidden sizes; the internal validation split is drawn
// from the training data.
inline train_result ctlstm_train(const dataset& data, const train_config& cfg, history_view view, unsigned jobs = 1) {
    cfg.validate();
    if (data.size() < 2) throw validation_error("train: need at least 2 training sequences");
    auto [fit, val] = split_train_test(data, 1 - cfg.validation_fraction, derive_seed(cfg.seed, "ctlstm/validation"));
    const double rate = empirical_rate(fit);
    if (!(rate > 0)) throw validation_error("train: no target events in the training data");
    const double stratum = 1/(cfg.mc_density*rate);
    auto train_set = detail::make_train_set(fit, stratum, cfg.seed, "ctlstm/fixed-train");
    auto val_set = detail::make_train_set(val, stratum, cfg.seed, "ctlstm/fixed-val");

    std::optional<train_result> out;
    for (int hidden: cfg.hidden_grid) {
        std::vector<train_log_entry> log;
        double best_val = 0;
        auto model = ctlstm_train_one(data.context_marks, hidden, view, train_set, val_set, stratum, cfg, log, best_val, jobs);
        if (!out) {
            out.emplace(train_result{std::move(model), hidden, best_val, std::move(log), cfg});
            continue;
        }
        out->log.insert(out->log.end(), log.begin(), log.end());
        if (best_val < out->best_val_nll) {
            out->model = std::move(model);
            out->selected_hidden = hidden;
            out->best_val_nll = best_val;
        }
    }
    return std::move(*out);
}

} // namespace ppod
