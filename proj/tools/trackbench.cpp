// trackbench: generate corpora, train, evaluate and sweep experiment matrices.
#include "trackbench/bench/bench.hpp"
#include "trackbench/core/corpus.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>

using namespace trackbench;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kInvalid = 2;

/// Configuration problems detected before any work starts.
struct InvalidInput : std::runtime_error {
    using std::runtime_error::runtime_error;
};

json load_json(fs::path const & path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot read '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (json::exception const & e) {
        throw InvalidInput("'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

template <class F>
auto parse_config(F && f) {
    try {
        return f();
    } catch (FormatError const & e) {
        throw InvalidInput(e.what());
    } catch (InvariantError const & e) {
        throw InvalidInput(e.what());
    } catch (bench::SpecError const & e) {
        throw InvalidInput(e.what());
    }
}

std::optional<std::uint64_t> env_seed() { return parse_config([] { return bench::seed_from_env(); }); }

int cmd_gen(fs::path const & config_path, fs::path const & out, int scenes) {
    sim::SimConfig config = parse_config([&] {
        json j = load_json(config_path);
        if (auto s = env_seed()) j["seed"] = *s;
        if (scenes > 0) j["n_scenes"] = scenes;
        return sim::sim_config_from_json(j);
    });
    auto const corpus = sim::generate(config);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_corpus(corpus, out);
    std::printf("wrote %zu scenes to %s\n", corpus.size(), out.string().c_str());
    return kOk;
}

int cmd_train(fs::path const & config_path, std::string const & corpus, std::string const & checkpoint,
              std::string const & log, int iterations) {
    train::TrainConfig config = parse_config([&] {
        json j = load_json(config_path);
        if (auto s = env_seed()) j["seed"] = *s;
        if (!corpus.empty()) j["corpus"] = corpus;
        if (!checkpoint.empty()) j["checkpoint"] = checkpoint;
        if (!log.empty()) j["log"] = log;
        if (iterations >= 0) j["iterations"] = iterations;
        return train::train_config_from_json(j);
    });
    if (config.corpus.empty()) throw InvalidInput("train: no corpus given (config 'corpus' or --corpus)");
    if (config.checkpoint.empty()) throw InvalidInput("train: no checkpoint path given (config 'checkpoint' or --checkpoint)");
    auto const result = train::train(config);
    std::fputs(result.log.to_csv().c_str(), stdout);
    std::printf("checkpoint: %s\n", config.checkpoint.string().c_str());
    return kOk;
}

int finish_run(bench::ExperimentSpec const & spec, int jobs) {
    auto const outcome = bench::run(spec, jobs);
    std::printf("%zu rows written to %s\n", outcome.rows, (outcome.directory / "results.csv").string().c_str());
    for (auto const & f : outcome.failures) {
        std::fprintf(stderr, "cell failed: %s%s%s: %s\n", f.model.c_str(), f.noise.empty() ? "" : " / ",
                     f.noise.c_str(), f.message.c_str());
    }
    return outcome.exit_code();
}

int cmd_eval(std::string const & checkpoint, std::string const & baseline, fs::path const & corpus,
             std::string const & noise, fs::path const & out, std::vector<std::string> const & slices, int present,
             std::string const & split, int jobs) {
    bench::ExperimentSpec spec = parse_config([&] {
        if (checkpoint.empty() == baseline.empty()) throw InvalidInput("eval: give exactly one of --checkpoint or --baseline");
        json model = {{"name", "model"}};
        if (!checkpoint.empty()) model["checkpoint"] = checkpoint;
        else model["baseline"] = baseline;
        json n = noise.empty() ? json::object() : load_json(noise);
        n["name"] = "noise";
        json j = {{"name", "eval"},
                  {"output", out.string()},
                  {"corpus", {{"path", corpus.string()}}},
                  {"models", {model}},
                  {"noise", {n}},
                  {"eval", {{"present", present}, {"split", split}}}};
        if (n.contains("seed")) j["seed"] = n["seed"];
        if (!slices.empty()) j["slices"] = slices;
        if (!checkpoint.empty()) {
            auto const loaded = train::load_model(checkpoint);
            j["eval"]["horizon"] = loaded.first.cnn.horizons;
            j["eval"]["history_len"] = loaded.first.raster.history_len;
        }
        return bench::experiment_from_json(j, {}, bench::seed_from_env());
    });
    return finish_run(spec, jobs);
}

int cmd_sweep(fs::path const & spec_path, std::string const & out, int jobs) {
    bench::ExperimentSpec spec = parse_config([&] { return bench::load_experiment(spec_path, bench::seed_from_env()); });
    if (!out.empty()) spec.output = out;
    return finish_run(spec, jobs);
}

int cmd_report(fs::path const & dir) {
    auto const outcome = bench::report(dir);
    std::fputs(outcome.markdown.c_str(), stdout);
    if (!outcome.missing.empty()) {
        std::fprintf(stderr, "%zu expected cells are missing\n", outcome.missing.size());
        return kFailure;
    }
    return kOk;
}

int cmd_selftest() {
    int failed = 0;
    for (auto const & r : bench::selftest()) {
        std::printf("%s %s%s%s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.empty() ? "" : ": ",
                    r.detail.c_str());
        failed += r.passed ? 0 : 1;
    }
    return failed == 0 ? kOk : kFailure;
}

} // namespace

int main(int argc, char ** argv) {
    CLI::App app{"trackbench: tracking-noise robustness benchmark for motion prediction"};
    app.require_subcommand(1);

    std::string config, out, corpus, checkpoint, log, baseline, noise, split = "validation", spec, run_dir;
    int scenes = 0, iterations = -1, present = 15, jobs = 1;
    std::vector<std::string> slices;

    auto * gen = app.add_subcommand("gen", "generate a synthetic scene corpus");
    gen->add_option("--config", config, "simulation config (JSON)")->required();
    gen->add_option("--out", out, "output corpus (JSON lines)")->required();
    gen->add_option("--scenes", scenes, "override the scene count");

    auto * tr = app.add_subcommand("train", "train a model");
    tr->add_option("--config", config, "training config (JSON)")->required();
    tr->add_option("--corpus", corpus, "override the corpus path");
    tr->add_option("--checkpoint", checkpoint, "override the checkpoint path");
    tr->add_option("--log", log, "override the training log path");
    tr->add_option("--iterations", iterations, "override the iteration count");

    auto * ev = app.add_subcommand("eval", "evaluate one model under one noise setting");
    ev->add_option("--checkpoint", checkpoint, "trained model checkpoint");
    ev->add_option("--baseline", baseline, "stationary | constant_velocity | kalman");
    ev->add_option("--corpus", corpus, "scene corpus")->required();
    ev->add_option("--noise", noise, "noise spec (JSON); clean when omitted");
    ev->add_option("--out", out, "run directory")->required();
    ev->add_option("--slices", slices, "slice labels, e.g. all dense sparse all/v>3")->delimiter(',');
    ev->add_option("--present", present, "present frame");
    ev->add_option("--split", split, "validation | all");
    ev->add_option("--jobs", jobs, "parallel workers");

    auto * sw = app.add_subcommand("sweep", "run an experiment matrix");
    sw->add_option("--spec", spec, "experiment spec (JSON)")->required();
    sw->add_option("--jobs", jobs, "parallel workers");
    sw->add_option("--out", out, "override the output directory");

    auto * rp = app.add_subcommand("report", "render tables and plot data for a finished run");
    rp->add_option("run_dir", run_dir, "run directory")->required();

    auto * st = app.add_subcommand("selftest", "run the built-in oracle and property checks");

    try {
        app.parse(argc, argv);
    } catch (CLI::ParseError const & e) {
        int const code = app.exit(e);
        return code == 0 ? kOk : kInvalid;
    }

    try {
        if (*gen) return cmd_gen(config, out, scenes);
        if (*tr) return cmd_train(config, corpus, checkpoint, log, iterations);
        if (*ev) return cmd_eval(checkpoint, baseline, corpus, noise, out, slices, present, split, jobs);
        if (*sw) return cmd_sweep(spec, out, jobs);
        if (*rp) return cmd_report(run_dir);
        if (*st) return cmd_selftest();
    } catch (InvalidInput const & e) {
        std::fprintf(stderr, "invalid input: %s\n", e.what());
        return kInvalid;
    } catch (std::exception const & e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kFailure;
    }
    return kInvalid;
}
