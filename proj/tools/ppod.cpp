// ppod: simulate, inject, train, detect, evaluate, verify-bounds, run.
//
// Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include <ppod/experiment.hpp>

namespace fs = std::filesystem;
using namespace ppod;

namespace {

struct options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> jobs;
    std::optional<std::string> out;
    std::string input;
    std::string model;
    std::string kind;
    std::string method_name;
};

// Writes all files or none: anything already written is removed when a
// later write fails.
void commit(const fs::path& dir, const stage_files& files) {
    std::vector<fs::path> written;
    try {
        for (const auto& [name, content]: files) {
            auto p = dir/name;
            write_file(p, content);
            written.push_back(p);
        }
    }
    catch (...) {
        std::error_code ec;
        for (const auto& p: written) fs::remove(p, ec);
        throw;
    }
}

// Flags override config keys one-for-one. When --config names a manifest,
// its recorded arguments fill in flags that were not given.
struct loaded {
    experiment_config cfg;
    nlohmann::json manifest_args = nlohmann::json::object();
};

loaded load(const options& o) {
    loaded l;
    nlohmann::json j = nlohmann::json::object();
    if (!o.config.empty()) j = read_json_file(o.config);
    if (j.contains("args") && j.at("args").is_object()) l.manifest_args = j.at("args");
    l.cfg = experiment_config::from_json(j);
    if (o.seed) l.cfg.seed = *o.seed;
    if (o.jobs) l.cfg.jobs = *o.jobs;
    if (o.out) l.cfg.out = *o.out;
    l.cfg.validate();
    return l;
}

std::string arg_or_manifest(const std::string& given, const loaded& l, const char* key, bool required) {
    if (!given.empty()) return given;
    if (l.manifest_args.contains(key)) return l.manifest_args.at(key).get<std::string>();
    if (required) throw validation_error(std::string("--") + key + " is required");
    return {};
}

outlier_kind parse_kind(const std::string& s) {
    if (s == "commission") return outlier_kind::commission;
    if (s == "omission") return outlier_kind::omission;
    throw validation_error("--kind must be 'commission' or 'omission'");
}

const rate_schedule& schedule_for(const experiment_config& cfg, outlier_kind kind) {
    const auto& s = kind == outlier_kind::commission? cfg.commission: cfg.omission;
    if (!s) throw validation_error("config has no " + std::string(to_string(kind)) + " schedule");
    return *s;
}

void finish(const std::string& command, const loaded& l, const nlohmann::json& args, stage_files files) {
    files["manifest.json"] = json_text(manifest_json(command, l.cfg, args, files));
    commit(l.cfg.out, files);
    std::cout << "wrote " << files.size() << " files to " << l.cfg.out << "\n";
}

void cmd_simulate(const options& o) {
    auto l = load(o);
    auto sim = stage_simulate(l.cfg);
    finish("simulate", l, nlohmann::json::object(), {
        {"dataset.jsonl", dataset_to_string(sim.all)},
        {"train.jsonl", dataset_to_string(sim.train)},
        {"test.jsonl", dataset_to_string(sim.test)},
    });
}

void cmd_inject(const options& o) {
    auto l = load(o);
    auto input = arg_or_manifest(o.input, l, "input", true);
    auto kind = parse_kind(arg_or_manifest(o.kind, l, "kind", true));
    const auto& schedule = schedule_for(l.cfg, kind);
    auto data = load_dataset(input);
    auto res = stage_inject(data, kind, schedule, l.cfg.seed);
    finish("inject", l, {{"input", input}, {"kind", to_string(kind)}}, {
        {"injected.jsonl", dataset_to_string(res.data)},
        {"injection.json", json_text(res.report.to_json())},
    });
}

void cmd_train(const options& o) {
    auto l = load(o);
    auto input = arg_or_manifest(o.input, l, "input", true);
    auto m = parse_method(arg_or_manifest(o.method_name, l, "method", true));
    auto data = load_dataset(input);
    auto f = fit_method(m, data, l.cfg, l.cfg.jobs);
    stage_files files{{"model.json", json_text(f.to_json())}};
    if (f.training) files["train_log.json"] = json_text(f.training->log_json());
    finish("train", l, {{"input", input}, {"method", to_string(m)}}, std::move(files));
}

void cmd_detect(const options& o) {
    auto l = load(o);
    auto input = arg_or_manifest(o.input, l, "input", true);
    auto model = arg_or_manifest(o.model, l, "model", true);
    auto kind_arg = arg_or_manifest(o.kind, l, "kind", false);
    auto f = fitted_method::from_json(read_json_file(model));
    auto data = load_dataset(input);
    std::vector<scored_item> items;
    if (kind_arg.empty()) {
        // Both kinds; each with its own checkpoint seed, as in `run`.
        auto c = filter_kind(stage_detect(f, data, outlier_kind::commission, l.cfg.seed, l.cfg.jobs), outlier_kind::commission);
        auto om = filter_kind(stage_detect(f, data, outlier_kind::omission, l.cfg.seed, l.cfg.jobs), outlier_kind::omission);
        items = std::move(c);
        items.insert(items.end(), om.begin(), om.end());
    }
    else {
        auto kind = parse_kind(kind_arg);
        items = filter_kind(stage_detect(f, data, kind, l.cfg.seed, l.cfg.jobs), kind);
    }
    nlohmann::json args{{"input", input}, {"model", model}};
    if (!kind_arg.empty()) args["kind"] = kind_arg;
    finish("detect", l, args, {{"scores.csv", scored_items_csv(items)}});
}

void cmd_evaluate(const options& o) {
    auto l = load(o);
    auto input = arg_or_manifest(o.input, l, "input", true);
    std::istringstream in(read_file(input));
    auto items = read_scored_items(in);
    if (items.empty()) throw validation_error("'" + input + "' contains no scored items");
    stage_files files{{"evaluation.json", json_text(evaluation_json(items))}};
    for (auto kind: {outlier_kind::commission, outlier_kind::omission}) {
        auto subset = filter_kind(items, kind);
        auto e = evaluate_items(subset);
        if (!e.auroc) continue;
        auto roc = auroc(subset);
        std::ostringstream csv;
        csv << "fpr,tpr\n";
        for (std::size_t i = 0; i < roc.fpr.size(); ++i) csv << format_double(roc.fpr[i]) << ',' << format_double(roc.tpr[i]) << '\n';
        files["roc_" + std::string(to_string(kind)) + ".csv"] = csv.str();
    }
    finish("evaluate", l, {{"input", input}}, std::move(files));
}

void cmd_verify_bounds(const options& o) {
    auto l = load(o);
    auto report = verify_bounds(l.cfg.bounds_for_process(), derive_seed(l.cfg.seed, "verify-bounds"), l.cfg.jobs);
    std::ostringstream csv;
    report.write_csv(csv);
    finish("verify-bounds", l, nlohmann::json::object(), {
        {"bounds.json", json_text(report.to_json())},
        {"bounds.csv", csv.str()},
    });
    std::cout << "grid points beyond bound + " << l.cfg.bounds.std_band << " std: " << report.violations() << "\n";
}

void cmd_run(const options& o) {
    auto l = load(o);
    auto files = run_experiment(l.cfg);
    std::cout << files.at("results.json");
    finish("run", l, nlohmann::json::object(), std::move(files));
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Point-process outlier detection toolkit"};
    app.require_subcommand(1);
    options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "JSON config file (or a manifest.json to replay)");
        sub->add_option("--seed", o.seed, "master seed (overrides config 'seed')");
        sub->add_option("--jobs", o.jobs, "worker threads (overrides config 'jobs')")->check(CLI::PositiveNumber);
        sub->add_option("--out", o.out, "output directory (overrides config 'out')");
    };

    std::vector<std::pair<CLI::App*, void (*)(const options&)>> commands;
    auto add = [&](const char* name, const char* help, void (*fn)(const options&)) {
        auto* sub = app.add_subcommand(name, help);
        common(sub);
        commands.emplace_back(sub, fn);
        return sub;
    };

    add("simulate", "simulate a dataset and split it into train/test", cmd_simulate);
    auto* inject = add("inject", "inject commission or omission outliers into a dataset", cmd_inject);
    inject->add_option("--input", o.input, "dataset (JSONL)");
    inject->add_option("--kind", o.kind, "commission | omission");
    auto* train = add("train", "fit one method on a training dataset", cmd_train);
    train->add_option("--input", o.input, "training dataset (JSONL)");
    train->add_option("--method", o.method_name, "RND | LEN | PPOD | CPPOD | GT");
    auto* detect = add("detect", "score a labeled dataset with a fitted model", cmd_detect);
    detect->add_option("--input", o.input, "labeled dataset (JSONL)");
    detect->add_option("--model", o.model, "model.json written by 'train'");
    detect->add_option("--kind", o.kind, "commission | omission (default: both)");
    auto* evaluate = add("evaluate", "AUROC and outlier ratio of a scores CSV", cmd_evaluate);
    evaluate->add_option("--input", o.input, "scores.csv written by 'detect'");
    add("verify-bounds", "check empirical FDR/FPR against the theoretical bounds", cmd_verify_bounds);
    add("run", "full pipeline: simulate, inject, train, detect, evaluate", cmd_run);

    try {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0? 0: 1;
    }

    for (const auto& [sub, fn]: commands) {
        if (!sub->parsed()) continue;
        try {
            fn(o);
            return 0;
        }
        catch (const validation_error& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 1;
        }
        catch (const std::exception& e) {
            std::cerr << "failure in " << sub->get_name() << ": " << e.what() << "\n";
            return 2;
        }
    }
    return 1;
}
