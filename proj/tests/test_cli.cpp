#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include <ppod/experiment.hpp>

namespace fs = std::filesystem;
using namespace ppod;

namespace {

const fs::path& scratch() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path()/("ppod_cli_test_" + std::to_string(::getpid()));
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

int run_cli(const std::string& args) {
    std::string cmd = std::string(PPOD_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WIFEXITED(status)? WEXITSTATUS(status): -1;
}

fs::path write_config(const std::string& name, const nlohmann::json& j) {
    auto p = scratch()/name;
    write_file(p, j.dump(2));
    return p;
}

nlohmann::json small_config() {
    return {
        {"process", "gamma"},
        {"n_sequences", 8},
        {"span", {0, 300}},
        {"methods", {"RND", "LEN", "GT"}},
        {"seed", 17},
    };
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

std::map<std::string, std::string> tree(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e: fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = read_file(e.path());
    }
    return out;
}

} // namespace

TEST(Cli, SimulateDefaultShape) {
    auto out = scratch()/"sim_default";
    ASSERT_EQ(run_cli("simulate --out " + q(out)), 0);
    auto d = load_dataset(out/"dataset.jsonl");
    ASSERT_EQ(d.size(), 40u);
    for (const auto& ls: d.sequences) {
        EXPECT_EQ(ls.sequence.span.begin, 0);
        EXPECT_EQ(ls.sequence.span.end, 1000);
    }
    EXPECT_EQ(load_dataset(out/"train.jsonl").size(), 20u);
    EXPECT_EQ(load_dataset(out/"test.jsonl").size(), 20u);
    auto m = read_json_file(out/"manifest.json");
    EXPECT_EQ(m.at("command"), "simulate");
    EXPECT_EQ(m.at("outputs").at("dataset.jsonl"), hex64(fnv1a(read_file(out/"dataset.jsonl"))));
}

TEST(Cli, SameSeedSameManifest) {
    auto cfg = write_config("same.json", small_config());
    auto a = scratch()/"same_a", b = scratch()/"same_b";
    ASSERT_EQ(run_cli("simulate --config " + q(cfg) + " --out " + q(a)), 0);
    ASSERT_EQ(run_cli("simulate --config " + q(cfg) + " --out " + q(b) + " --jobs 3"), 0);
    EXPECT_EQ(read_file(a/"manifest.json"), read_file(b/"manifest.json"));
    EXPECT_EQ(tree(a), tree(b));
    auto c = scratch()/"same_c";
    ASSERT_EQ(run_cli("simulate --config " + q(cfg) + " --out " + q(c) + " --seed 18"), 0);
    EXPECT_NE(read_json_file(a/"manifest.json").at("config_hash"), read_json_file(c/"manifest.json").at("config_hash"));
}

TEST(Cli, InvalidConfigExitsOneBeforeWork) {
    auto j = small_config();
    j["process"] = {{"kind", "poisson"}, {"Q", {{-0.05, -0.05}, {0.05, -0.05}}}};
    auto cfg = write_config("bad_q.json", j);
    auto out = scratch()/"bad_q";
    EXPECT_EQ(run_cli("simulate --config " + q(cfg) + " --out " + q(out)), 1);
    EXPECT_FALSE(fs::exists(out));
    EXPECT_EQ(run_cli("run --config " + q(cfg) + " --out " + q(out)), 1);
    EXPECT_FALSE(fs::exists(out));

    auto unknown = write_config("unknown_key.json", {{"n_sequence", 3}});
    EXPECT_EQ(run_cli("simulate --config " + q(unknown) + " --out " + q(out)), 1);
    EXPECT_EQ(run_cli("simulate --config " + q(scratch()/"missing.json")), 1);
    EXPECT_EQ(run_cli("no-such-command"), 1);
    EXPECT_EQ(run_cli(""), 1);
    EXPECT_EQ(run_cli("inject --config " + q(cfg)), 1);
}

TEST(Cli, BadInputFilesExitOne) {
    auto bad = scratch()/"bad.jsonl";
    write_file(bad, "{\"id\":\"a\",\"span\":[0,10],\"events\":[{\"t\":5,\"mark\":\"x\"},{\"t\":2,\"mark\":\"x\"}]}\n");
    auto cfg = write_config("ok.json", small_config());
    EXPECT_EQ(run_cli("inject --config " + q(cfg) + " --input " + q(bad) + " --kind commission --out " + q(scratch()/"bad_out")), 1);
    EXPECT_EQ(run_cli("train --config " + q(cfg) + " --input " + q(bad) + " --method LEN --out " + q(scratch()/"bad_out")), 1);
    EXPECT_EQ(run_cli("train --config " + q(cfg) + " --input " + q(bad) + " --method XYZ --out " + q(scratch()/"bad_out")), 1);
}

TEST(Cli, StagesChainToTheSameResultsAsRun) {
    auto cfg = write_config("chain.json", small_config());
    auto run = scratch()/"chain_run";
    ASSERT_EQ(run_cli("run --config " + q(cfg) + " --out " + q(run)), 0);

    auto sim = scratch()/"chain_sim";
    ASSERT_EQ(run_cli("simulate --config " + q(cfg) + " --out " + q(sim)), 0);
    EXPECT_EQ(read_file(sim/"dataset.jsonl"), read_file(run/"data/dataset.jsonl"));
    EXPECT_EQ(read_file(sim/"test.jsonl"), read_file(run/"data/test.jsonl"));

    for (std::string kind: {"commission", "omission"}) {
        auto inj = scratch()/("chain_inj_" + kind);
        ASSERT_EQ(run_cli("inject --config " + q(cfg) + " --input " + q(sim/"test.jsonl") + " --kind " + kind + " --out " + q(inj)), 0);
        EXPECT_EQ(read_file(inj/"injected.jsonl"), read_file(run/("data/test_" + kind + ".jsonl")));
        for (std::string m: {"RND", "LEN", "GT"}) {
            auto tr = scratch()/("chain_train_" + m);
            ASSERT_EQ(run_cli("train --config " + q(cfg) + " --input " + q(sim/"train.jsonl") + " --method " + m + " --out " + q(tr)), 0);
            EXPECT_EQ(read_file(tr/"model.json"), read_file(run/("models/" + m + ".json")));
            auto det = scratch()/("chain_det_" + kind + m);
            ASSERT_EQ(run_cli("detect --config " + q(cfg) + " --input " + q(inj/"injected.jsonl") + " --model " + q(tr/"model.json") +
                           " --kind " + kind + " --out " + q(det)), 0);
            EXPECT_EQ(read_file(det/"scores.csv"), read_file(run/("scores/" + kind + "_" + m + ".csv"))) << kind << " " << m;

            auto ev = scratch()/("chain_eval_" + kind + m);
            ASSERT_EQ(run_cli("evaluate --input " + q(det/"scores.csv") + " --out " + q(ev)), 0);
            auto e = read_json_file(ev/"evaluation.json").at(kind);
            auto results = read_json_file(run/"results.json");
            std::string row = std::string("Gam") + (kind == "commission"? " (C)": " (O)");
            EXPECT_EQ(e.at("auroc"), results.at("auroc").at(row).at("[0.1]").at(m));
            EXPECT_TRUE(fs::exists(ev/("roc_" + kind + ".csv")));
        }
    }
}

TEST(Cli, RunReplaysFromManifest) {
    auto cfg = write_config("replay.json", small_config());
    auto first = scratch()/"replay_1", second = scratch()/"replay_2";
    ASSERT_EQ(run_cli("run --config " + q(cfg) + " --out " + q(first)), 0);
    ASSERT_EQ(run_cli("run --config " + q(first/"manifest.json") + " --out " + q(second) + " --jobs 4"), 0);
    EXPECT_EQ(tree(first), tree(second));
    auto results = read_json_file(first/"results.json");
    for (std::string row: {"Gam (C)", "Gam (O)"}) {
        for (std::string m: {"RND", "LEN", "GT"}) EXPECT_TRUE(results.at("auroc").at(row).at("[0.1]").at(m).is_number());
    }
}

TEST(Cli, StageReplayFromManifestArgs) {
    auto cfg = write_config("stage_replay.json", small_config());
    auto sim = scratch()/"sr_sim";
    ASSERT_EQ(run_cli("simulate --config " + q(cfg) + " --out " + q(sim)), 0);
    auto a = scratch()/"sr_a", b = scratch()/"sr_b";
    ASSERT_EQ(run_cli("inject --config " + q(cfg) + " --input " + q(sim/"test.jsonl") + " --kind omission --out " + q(a)), 0);
    ASSERT_EQ(run_cli("inject --config " + q(a/"manifest.json") + " --out " + q(b)), 0);
    EXPECT_EQ(tree(a), tree(b));
}

TEST(Cli, VerifyBoundsWritesReport) {
    auto j = small_config();
    j["process"] = "poisson";
    j["bounds"] = {{"repetitions", 2}};
    auto cfg = write_config("bounds.json", j);
    auto out = scratch()/"bounds";
    ASSERT_EQ(run_cli("verify-bounds --config " + q(cfg) + " --out " + q(out)), 0);
    auto r = read_json_file(out/"bounds.json");
    EXPECT_EQ(r.at("curves").size(), 3u);
    EXPECT_TRUE(fs::exists(out/"bounds.csv"));
}

TEST(Config, JsonRoundTrip) {
    auto c = experiment_config::from_json(small_config());
    auto again = experiment_config::from_json(c.to_json());
    EXPECT_EQ(again.to_json(), c.to_json());
    EXPECT_EQ(config_hash(again), config_hash(c));
    nlohmann::json manifest{{"config", c.to_json()}, {"args", nlohmann::json::object()}};
    EXPECT_EQ(experiment_config::from_json(manifest).to_json(), c.to_json());
}

TEST(Config, Validation) {
    auto j = small_config();
    j["train_fraction"] = 1.5;
    EXPECT_THROW(experiment_config::from_json(j), validation_error);
    j = small_config();
    j["methods"] = {"RND", "SVM"};
    EXPECT_THROW(experiment_config::from_json(j), validation_error);
    j = small_config();
    j["outliers"] = {{"omission", {{"kind", "constant"}, {"alpha0", 2}}}};
    EXPECT_THROW(experiment_config::from_json(j), validation_error);
    j = small_config();
    j["span"] = {5, 1};
    EXPECT_THROW(experiment_config::from_json(j), validation_error);
    j = small_config();
    j["n_sequences"] = "many";
    EXPECT_THROW(experiment_config::from_json(j), validation_error);
}
