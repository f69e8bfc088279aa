#pragma once

// Experiment configuration (one JSON file) and the stage functions the CLI
// is built from. Every output is a plain file; every random stream is
// seeded from the master seed through derive_seed.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include <ppod/common.hpp>
#include <ppod/dataset_io.hpp>
#include <ppod/detector.hpp>
#include <ppod/evaluator.hpp>
#include <ppod/injector.hpp>
#include <ppod/models/ctlstm.hpp>
#include <ppod/models/ground_truth.hpp>
#include <ppod/models/len.hpp>
#include <ppod/models/train.hpp>
#include <ppod/simulator.hpp>

#ifndef PPOD_VERSION
#define PPOD_VERSION "0.1.0"
#endif

namespace ppod {

inline constexpr std::string_view version = PPOD_VERSION;

// ---- process specs ----------------------------------------------------

inline nlohmann::json process_to_json(const process_spec& p) {
    nlohmann::json j{{"Q", p.context.rates}, {"initial", p.context.initial}};
    if (auto* poi = std::get_if<poisson_spec>(&p.target)) {
        j["kind"] = "poisson";
        j["intensity"] = poi->intensity;
    }
    else {
        const auto& g = std::get<gamma_spec>(p.target);
        std::vector<std::vector<double>> ab;
        for (auto q: g.params) ab.push_back({q.shape, q.rate});
        j["kind"] = "gamma";
        j["gamma"] = ab;
    }
    return j;
}

// Either a preset name ("poisson", "gamma") or an explicit object with Q,
// optional initial, and intensity (Poisson) or gamma [[shape, rate], ...].
inline process_spec process_from_json(const nlohmann::json& j) {
    if (j.is_string()) {
        auto name = j.get<std::string>();
        if (name == "poisson") return default_poisson();
        if (name == "gamma") return default_gamma();
        throw validation_error("unknown process preset '" + name + "'");
    }
    auto kind = j.at("kind").get<std::string>();
    process_spec p;
    p.context.rates = j.contains("Q")? j.at("Q").get<std::vector<std::vector<double>>>(): default_context().rates;
    p.context.initial = j.value("initial", std::vector<double>{});
    if (kind == "poisson") {
        p.target = poisson_spec{j.contains("intensity")? j.at("intensity").get<std::vector<double>>(): std::get<poisson_spec>(default_poisson().target).intensity};
    }
    else if (kind == "gamma") {
        gamma_spec g;
        if (j.contains("gamma")) {
            for (const auto& ab: j.at("gamma")) {
                auto v = ab.get<std::vector<double>>();
                if (v.size() != 2) throw validation_error("gamma parameters must be [shape, rate] pairs");
                g.params.push_back({v[0], v[1]});
            }
        }
        else g = std::get<gamma_spec>(default_gamma().target);
        p.target = g;
    }
    else throw validation_error("unknown process kind '" + kind + "'");
    p.validate();
    return p;
}

// Short label used in result tables: "Poi" / "Gam".
inline std::string process_label(const process_spec& p) {
    return p.is_poisson()? "Poi": "Gam";
}

inline std::string schedule_label(const rate_schedule& s) {
    return std::visit([](const auto& r) -> std::string {
        using S = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<S, constant_rate>) return "[" + format_double(r.alpha0) + "]";
        else if constexpr (std::is_same_v<S, periodic_rate>) return "[sin]";
        else return "[pc]";
    }, s);
}

// ---- methods ----------------------------------------------------------

enum class method { rnd, len, ppod, cppod, gt };

inline std::string_view to_string(method m) {
    switch (m) {
    case method::rnd: return "RND";
    case method::len: return "LEN";
    case method::ppod: return "PPOD";
    case method::cppod: return "CPPOD";
    case method::gt: return "GT";
    }
    return "?";
}

inline method parse_method(std::string_view s) {
    for (auto m: {method::rnd, method::len, method::ppod, method::cppod, method::gt}) {
        if (s == to_string(m)) return m;
    }
    throw validation_error("unknown method '" + std::string(s) + "' (expected RND, LEN, PPOD, CPPOD or GT)");
}

// ---- configuration ----------------------------------------------------

struct experiment_config {
    process_spec process = default_poisson();
    std::size_t n_sequences = 40;
    time_span span{0, 1000};
    double train_fraction = 0.5;
    std::optional<rate_schedule> commission = constant_rate{0.1};
    std::optional<rate_schedule> omission = constant_rate{0.1};
    std::vector<method> methods{method::rnd, method::len, method::gt};
    train_config train;
    bounds_config bounds;
    std::uint64_t seed = 1;
    unsigned jobs = 1;
    std::string out = "results";

    void validate() const {
        process.validate();
        if (n_sequences < 2) throw validation_error("n_sequences must be at least 2");
        if (!(span.begin < span.end) || !std::isfinite(span.begin) || !std::isfinite(span.end)) throw validation_error("span must be finite with begin < end");
        if (!(train_fraction > 0 && train_fraction < 1)) throw validation_error("train_fraction must lie in (0, 1)");
        if (commission) validate_schedule(*commission);
        if (omission) {
            validate_schedule(*omission);
            if (schedule_scale(*omission) > 1) throw validation_error("omission alpha0 must be <= 1");
        }
        if (methods.empty()) throw validation_error("methods list is empty");
        train.validate();
        if (jobs < 1) throw validation_error("jobs must be >= 1");
    }

    // Everything that determines results; jobs and the output directory
    // are left out so they can change on replay.
    nlohmann::json to_json() const {
        std::vector<std::string> ms;
        for (auto m: methods) ms.emplace_back(to_string(m));
        return {
            {"process", process_to_json(process)},
            {"n_sequences", n_sequences},
            {"span", {span.begin, span.end}},
            {"train_fraction", train_fraction},
            {"outliers", {
                {"commission", commission? schedule_to_json(*commission): nlohmann::json(nullptr)},
                {"omission", omission? schedule_to_json(*omission): nlohmann::json(nullptr)},
            }},
            {"methods", ms},
            {"train", train.to_json()},
            {"bounds", {{"alpha0", bounds.alpha0}, {"repetitions", bounds.repetitions},
                        {"commission_grid", bounds.commission_grid}, {"omission_grid", bounds.omission_grid},
                        {"min_positives", bounds.min_positives}, {"std_band", bounds.std_band}}},
            {"seed", seed},
        };
    }

    // A manifest (object with a "config" key) is accepted in place of a
    // config file.
    static experiment_config from_json(const nlohmann::json& in) {
        const auto& j = in.contains("config") && in.at("config").is_object()? in.at("config"): in;
        static const std::vector<std::string> known{"process", "n_sequences", "span", "train_fraction", "outliers", "methods",
                                                    "train", "bounds", "seed", "jobs", "out"};
        for (const auto& [key, _]: j.items()) {
            if (std::find(known.begin(), known.end(), key) == known.end()) throw validation_error("unknown config key '" + key + "'");
        }
        experiment_config c;
        try {
            if (j.contains("process")) c.process = process_from_json(j.at("process"));
            c.n_sequences = j.value("n_sequences", c.n_sequences);
            if (j.contains("span")) {
                auto s = j.at("span").get<std::vector<double>>();
                if (s.size() != 2) throw validation_error("span must be [begin, end]");
                c.span = {s[0], s[1]};
            }
            c.train_fraction = j.value("train_fraction", c.train_fraction);
            if (j.contains("outliers")) {
                const auto& o = j.at("outliers");
                auto read = [&](const char* key, std::optional<rate_schedule>& dst) {
                    if (!o.contains(key)) return;
                    if (o.at(key).is_null()) dst.reset();
                    else dst = schedule_from_json(o.at(key));
                };
                read("commission", c.commission);
                read("omission", c.omission);
            }
            if (j.contains("methods")) {
                c.methods.clear();
                for (const auto& m: j.at("methods")) c.methods.push_back(parse_method(m.get<std::string>()));
            }
            if (j.contains("train")) c.train = train_config::from_json(j.at("train"));
            if (j.contains("bounds")) {
                const auto& b = j.at("bounds");
                c.bounds.alpha0 = b.value("alpha0", c.bounds.alpha0);
                c.bounds.repetitions = b.value("repetitions", c.bounds.repetitions);
                c.bounds.commission_grid = b.value("commission_grid", c.bounds.commission_grid);
                c.bounds.omission_grid = b.value("omission_grid", c.bounds.omission_grid);
                c.bounds.min_positives = b.value("min_positives", c.bounds.min_positives);
                c.bounds.std_band = b.value("std_band", c.bounds.std_band);
            }
            c.seed = j.value("seed", c.seed);
            c.jobs = j.value("jobs", c.jobs);
            c.out = j.value("out", c.out);
        }
        catch (const nlohmann::json::exception& e) {
            throw validation_error(std::string("config: ") + e.what());
        }
        c.validate();
        return c;
    }

    bounds_config bounds_for_process() const {
        auto b = bounds;
        b.process = process;
        b.n_sequences = n_sequences;
        b.span = span;
        b.train_fraction = train_fraction;
        b.validate();
        return b;
    }
};

inline std::string hex64(std::uint64_t x) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, x >>= 4) s[static_cast<std::size_t>(i)] = digits[x & 0xf];
    return s;
}

inline std::string config_hash(const experiment_config& c) {
    return hex64(fnv1a(c.to_json().dump()));
}

// ---- files ------------------------------------------------------------

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw validation_error("cannot open '" + p.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& p, std::string_view content) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
    out << content;
    if (!out) throw std::runtime_error("write failed for '" + p.string() + "'");
}

inline nlohmann::json read_json_file(const std::filesystem::path& p) {
    try {
        return nlohmann::json::parse(read_file(p));
    }
    catch (const nlohmann::json::parse_error& e) {
        throw validation_error("'" + p.string() + "' is not valid JSON: " + e.what());
    }
}

inline std::string json_text(const nlohmann::json& j) {
    return j.dump(2) + "\n";
}

// ---- scorers from model files -----------------------------------------

// Model files carry a "kind" tag plus the training-data rate used for
// checkpoint spacing.
struct fitted_method {
    method which = method::rnd;
    double lambda_hat_train = 0;
    nlohmann::json model_json;
    std::unique_ptr<cif_model> cif;   // GT, PPOD, CPPOD
    std::optional<len_model> len;
    std::optional<train_result> training;

    std::unique_ptr<outlier_scorer> scorer() const {
        switch (which) {
        case method::rnd: return std::make_unique<random_scorer>();
        case method::len: return std::make_unique<len_scorer>(*len);
        default: return std::make_unique<cif_scorer>(*cif, std::string(to_string(which)));
        }
    }

    nlohmann::json to_json() const {
        auto j = model_json;
        j["method"] = to_string(which);
        j["lambda_hat_train"] = lambda_hat_train;
        return j;
    }

    static fitted_method from_json(const nlohmann::json& j) {
        fitted_method f;
        try {
            f.which = parse_method(j.at("method").get<std::string>());
            f.lambda_hat_train = j.at("lambda_hat_train").get<double>();
            f.model_json = j;
            f.model_json.erase("method");
            f.model_json.erase("lambda_hat_train");
            auto kind = j.at("kind").get<std::string>();
            if (kind == "rnd") {}
            else if (kind == "len") f.len = len_model::from_json(j);
            else if (kind == "gt") f.cif = make_ground_truth(process_from_json(j.at("process")));
            else if (kind == "ctlstm") f.cif = std::make_unique<ctlstm_model>(ctlstm_model::from_json(j));
            else throw validation_error("unknown model kind '" + kind + "'");
        }
        catch (const nlohmann::json::exception& e) {
            throw validation_error(std::string("model file: ") + e.what());
        }
        checkpoint_width(f.lambda_hat_train);
        return f;
    }
};

inline fitted_method fit_method(method m, const dataset& train, const experiment_config& cfg, unsigned jobs) {
    fitted_method f;
    f.which = m;
    f.lambda_hat_train = empirical_rate(train);
    switch (m) {
    case method::rnd:
        f.model_json = {{"kind", "rnd"}};
        break;
    case method::len:
        f.len = len_fit(train);
        f.model_json = f.len->to_json();
        break;
    case method::gt:
        f.cif = make_ground_truth(cfg.process);
        f.model_json = {{"kind", "gt"}, {"process", process_to_json(cfg.process)}};
        break;
    case method::ppod:
    case method::cppod: {
        auto tc = cfg.train;
        // train.seed 0 leaves the derived seed unchanged.
        tc.seed = derive_seed(cfg.seed, "train", static_cast<std::uint64_t>(m)) ^ (cfg.train.seed? derive_seed(cfg.train.seed, "train/extra"): 0);
        auto res = ctlstm_train(train, tc, m == method::ppod? history_view::target_only: history_view::combined, jobs);
        f.model_json = res.model_json();
        f.cif = std::make_unique<ctlstm_model>(res.model);
        f.training = std::move(res);
        break;
    }
    }
    return f;
}

// ---- stage outputs ----------------------------------------------------

// Files produced by a stage, relative path -> content. Written only after
// the whole stage succeeded.
using stage_files = std::map<std::string, std::string>;

inline nlohmann::json manifest_json(std::string_view command, const experiment_config& cfg, const nlohmann::json& args, const stage_files& files) {
    nlohmann::json outputs = nlohmann::json::object();
    for (const auto& [name, content]: files) outputs[name] = hex64(fnv1a(content));
    return {
        {"tool", "ppod"},
        {"version", version},
        {"command", command},
        {"args", args},
        {"config", cfg.to_json()},
        {"config_hash", config_hash(cfg)},
        {"seed", cfg.seed},
        {"seed_derivation", "splitmix64(splitmix64(master ^ fnv1a(stage)) + splitmix64(index + 0x632be59bd9b4e019))"},
        {"outputs", outputs},
    };
}

struct simulate_output {
    dataset all, train, test;
};

inline simulate_output stage_simulate(const experiment_config& cfg) {
    simulate_output o;
    o.all = simulate_dataset(cfg.process, cfg.n_sequences, cfg.span, derive_seed(cfg.seed, "simulate"), cfg.jobs);
    std::tie(o.train, o.test) = split_train_test(o.all, cfg.train_fraction, derive_seed(cfg.seed, "split"));
    return o;
}

inline injection_result stage_inject(const dataset& test, outlier_kind kind, const rate_schedule& schedule, std::uint64_t master) {
    auto seed = derive_seed(master, kind == outlier_kind::commission? "inject/commission": "inject/omission");
    return kind == outlier_kind::commission? inject_commission(test, schedule, seed): inject_omission(test, schedule, seed);
}

// The detection seed depends only on the outlier kind, so every method is
// scored at the same checkpoints.
inline std::vector<scored_item> stage_detect(const fitted_method& f, const dataset& data, outlier_kind kind, std::uint64_t master, unsigned jobs) {
    auto scorer = f.scorer();
    auto seed = derive_seed(master, kind == outlier_kind::commission? "detect/commission": "detect/omission");
    return run_detection(*scorer, data, f.lambda_hat_train, seed, jobs);
}

inline std::string scored_items_csv(const std::vector<scored_item>& items) {
    std::ostringstream ss;
    write_scored_items(ss, items);
    return ss.str();
}

struct kind_evaluation {
    std::optional<double> auroc;   // absent for single-class input
    double ratio = 0;
    std::size_t items = 0;
    std::size_t positives = 0;
};

inline kind_evaluation evaluate_items(const std::vector<scored_item>& items) {
    kind_evaluation e;
    e.items = items.size();
    if (items.empty()) return e;
    e.ratio = outlier_ratio(items);
    for (const auto& it: items) e.positives += it.truth;
    if (e.positives > 0 && e.positives < e.items) e.auroc = auroc(items).auroc;
    return e;
}

inline nlohmann::json evaluation_json(const std::vector<scored_item>& items) {
    nlohmann::json out = nlohmann::json::object();
    for (auto kind: {outlier_kind::commission, outlier_kind::omission}) {
        auto e = evaluate_items(filter_kind(items, kind));
        if (e.items == 0) continue;
        out[std::string(to_string(kind))] = {{"auroc", e.auroc? nlohmann::json(*e.auroc): nlohmann::json(nullptr)},
                                            {"outlier_ratio", e.ratio}, {"items", e.items}, {"positives", e.positives}};
    }
    return out;
}

// Full pipeline: simulate -> split -> inject(test) -> fit(train) per
// method -> detect -> evaluate. Returns the files of the results directory.
inline stage_files run_experiment(const experiment_config& cfg) {
    cfg.validate();
    stage_files files;
    auto sim = stage_simulate(cfg);
    files["data/dataset.jsonl"] = dataset_to_string(sim.all);
    files["data/train.jsonl"] = dataset_to_string(sim.train);
    files["data/test.jsonl"] = dataset_to_string(sim.test);

    std::vector<std::pair<outlier_kind, rate_schedule>> kinds;
    if (cfg.commission) kinds.emplace_back(outlier_kind::commission, *cfg.commission);
    if (cfg.omission) kinds.emplace_back(outlier_kind::omission, *cfg.omission);

    std::map<outlier_kind, injection_result> injected;
    nlohmann::json injection = nlohmann::json::object();
    for (const auto& [kind, schedule]: kinds) {
        auto res = stage_inject(sim.test, kind, schedule, cfg.seed);
        files["data/test_" + std::string(to_string(kind)) + ".jsonl"] = dataset_to_string(res.data);
        injection[std::string(to_string(kind))] = res.report.to_json();
        injected.emplace(kind, std::move(res));
    }

    const std::string proc = process_label(cfg.process);
    nlohmann::json table = nlohmann::json::object();
    nlohmann::json details = nlohmann::json::object();
    for (auto m: cfg.methods) {
        const std::string name(to_string(m));
        fitted_method f;
        try {
            f = fit_method(m, sim.train, cfg, cfg.jobs);
        }
        catch (const validation_error& e) {
            throw validation_error("stage train (" + name + "): " + e.what());
        }
        catch (const std::exception& e) {
            throw std::runtime_error("stage train (" + name + "): " + e.what());
        }
        files["models/" + name + ".json"] = json_text(f.to_json());
        if (f.training) files["models/" + name + ".train_log.json"] = json_text(f.training->log_json());
        for (const auto& [kind, res]: injected) {
            auto items = filter_kind(stage_detect(f, res.data, kind, cfg.seed, cfg.jobs), kind);
            const std::string k(to_string(kind));
            files["scores/" + k + "_" + name + ".csv"] = scored_items_csv(items);
            auto e = evaluate_items(items);
            const std::string row = proc + (kind == outlier_kind::commission? " (C)": " (O)");
            const std::string col = schedule_label(kind == outlier_kind::commission? *cfg.commission: *cfg.omission);
            table[row][col][name] = e.auroc? nlohmann::json(*e.auroc): nlohmann::json(nullptr);
            details[row][col]["outlier_ratio"] = e.ratio;
            details[row][col]["items"] = e.items;
            details[row][col]["positives"] = e.positives;
        }
    }
    nlohmann::json results{{"auroc", table}, {"test_items", details}, {"injection", injection},
                           {"lambda_hat_train", empirical_rate(sim.train)}};
    files["results.json"] = json_text(results);
    return files;
}

} // namespace ppod
