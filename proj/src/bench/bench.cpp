#include "trackbench/bench/bench.hpp"

#include "trackbench/core/corpus.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace trackbench::bench {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

bool safe_name(std::string const & s) {
    if (s.empty() || s.size() > 64) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
    });
}

fs::path resolve(fs::path const & base, std::string const & p) {
    fs::path const path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

void apply_seed(json & j, std::uint64_t seed) {
    j["seed"] = seed;
    if (j.contains("corpus") && j["corpus"].is_object() && j["corpus"].contains("sim")) j["corpus"]["sim"]["seed"] = seed;
    if (j.contains("models") && j["models"].is_array()) {
        for (auto & m : j["models"]) {
            if (m.is_object() && m.contains("train") && m["train"].is_object()) m["train"]["seed"] = seed;
        }
    }
    if (j.contains("noise") && j["noise"].is_array()) {
        for (auto & n : j["noise"]) {
            if (n.is_object()) n["seed"] = seed;
        }
    }
}

} // namespace

void write_atomic(fs::path const & path, std::string const & text) {
    fs::path const tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << text;
        if (!out) throw Error("cannot write '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

std::string read_text(fs::path const & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace {

/// Runs tasks [0, n) on up to `jobs` threads; task order does not affect outputs.
template <class F>
void parallel_for(std::size_t n, int jobs, F && task) {
    std::size_t const workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) task(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) task(i);
        });
    }
}

std::string cell_file(std::string const & model, std::string const & noise) { return model + "__" + noise + ".json"; }

std::string model_kind(ModelEntry const & m, std::optional<models::ModelConfig> const & config) {
    if (m.baseline) return "baseline:" + to_string(*m.baseline);
    return config ? models::to_string(config->kind) : "unknown";
}

} // namespace

std::string to_string(models::BaselineKind kind) {
    switch (kind) {
    case models::BaselineKind::Stationary: return "stationary";
    case models::BaselineKind::ConstantVelocity: return "constant_velocity";
    case models::BaselineKind::Kalman: return "kalman";
    }
    return "?";
}

models::BaselineKind baseline_from_string(std::string const & name) {
    for (auto k : {models::BaselineKind::Stationary, models::BaselineKind::ConstantVelocity, models::BaselineKind::Kalman}) {
        if (to_string(k) == name) return k;
    }
    throw SpecError("unknown baseline '" + name + "'");
}

std::optional<std::uint64_t> seed_from_env() {
    char const * v = std::getenv("TRACKBENCH_SEED");
    if (v == nullptr || *v == '\0') return std::nullopt;
    std::string const s(v);
    if (!std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; }) || s.size() > 20) {
        throw SpecError("TRACKBENCH_SEED must be an unsigned integer, got '" + s + "'");
    }
    try {
        return std::stoull(s);
    } catch (std::exception const &) {
        throw SpecError("TRACKBENCH_SEED out of range: '" + s + "'");
    }
}

ExperimentSpec experiment_from_json(json j, fs::path const & base_dir, std::optional<std::uint64_t> seed_override) {
    if (!j.is_object()) throw SpecError("experiment spec must be a JSON object");
    if (seed_override) apply_seed(j, *seed_override);
    ExperimentSpec s;
    s.source = j;
    try {
        s.name = j.at("name").get<std::string>();
        if (!safe_name(s.name)) throw SpecError("experiment name '" + s.name + "' must be [A-Za-z0-9_.-]+");
        s.seed = j.value("seed", std::uint64_t{0});
        s.output = j.contains("output") ? resolve(base_dir, j["output"].get<std::string>()) : fs::path("runs") / s.name;

        json const & corpus = j.at("corpus");
        if (corpus.contains("sim") == corpus.contains("path")) throw SpecError("corpus needs exactly one of 'sim' or 'path'");
        if (corpus.contains("sim")) {
            json sim = corpus["sim"];
            if (!sim.contains("seed")) sim["seed"] = s.seed;
            s.corpus_sim = sim::sim_config_from_json(sim);
        } else {
            s.corpus_path = resolve(base_dir, corpus["path"].get<std::string>());
        }

        int horizon = 5;
        int history = 11;
        if (j.contains("eval")) {
            json const & e = j["eval"];
            s.present = e.value("present", s.present);
            horizon = e.value("horizon", horizon);
            history = e.value("history_len", history);
            std::string const split = e.value("split", std::string("validation"));
            if (split != "validation" && split != "all") throw SpecError("eval.split must be 'validation' or 'all'");
            s.validation_only = split == "validation";
        }

        std::set<std::string> names;
        for (json const & m : j.at("models")) {
            ModelEntry entry;
            entry.name = m.at("name").get<std::string>();
            if (!safe_name(entry.name)) throw SpecError("model name '" + entry.name + "' must be [A-Za-z0-9_.-]+");
            if (!names.insert(entry.name).second) throw SpecError("duplicate model name '" + entry.name + "'");
            int const sources = int(m.contains("train")) + int(m.contains("checkpoint")) + int(m.contains("baseline"));
            if (sources != 1) throw SpecError("model '" + entry.name + "' needs exactly one of train/checkpoint/baseline");
            if (m.contains("train")) {
                json t = m["train"];
                if (!t.contains("seed")) t["seed"] = s.seed;
                entry.train = train::train_config_from_json(t);
                if (entry.train->model.cnn.horizons != horizon || entry.train->model.raster.history_len != history) {
                    throw SpecError("model '" + entry.name + "': horizon/history differ from the evaluation settings");
                }
            } else if (m.contains("checkpoint")) {
                entry.checkpoint = resolve(base_dir, m["checkpoint"].get<std::string>());
            } else {
                entry.baseline = baseline_from_string(m["baseline"].get<std::string>());
            }
            s.models.push_back(std::move(entry));
        }
        if (s.models.empty()) throw SpecError("experiment needs at least one model");

        std::set<std::string> noise_names;
        for (json n : j.at("noise")) {
            NoiseEntry entry;
            entry.name = n.at("name").get<std::string>();
            if (!safe_name(entry.name)) throw SpecError("noise name '" + entry.name + "' must be [A-Za-z0-9_.-]+");
            if (!noise_names.insert(entry.name).second) throw SpecError("duplicate noise name '" + entry.name + "'");
            n.erase("name");
            if (!n.contains("seed")) n["seed"] = s.seed;
            entry.spec = tracking::noise_spec_from_json(n);
            s.noise.push_back(std::move(entry));
        }
        if (s.noise.empty()) throw SpecError("experiment needs at least one noise setting");

        if (j.contains("slices")) {
            s.slices.clear();
            std::set<std::string> labels;
            for (json const & l : j["slices"]) {
                s.slices.push_back(eval::slice_from_label(l.get<std::string>()));
                if (!labels.insert(eval::label(s.slices.back())).second) throw SpecError("duplicate slice '" + l.get<std::string>() + "'");
            }
            if (s.slices.empty()) throw SpecError("experiment needs at least one slice");
        }
        if (horizon < 1 || history < 1 || s.present < history - 1) throw SpecError("invalid eval present/horizon/history");
        json e = j.value("eval", json::object());
        e["horizon"] = horizon;
        e["history_len"] = history;
        s.source["eval"] = e;
    } catch (SpecError const &) {
        throw;
    } catch (json::exception const & e) {
        throw SpecError(std::string("invalid experiment spec: ") + e.what());
    } catch (Error const & e) {
        throw SpecError(std::string("invalid experiment spec: ") + e.what());
    }
    return s;
}

ExperimentSpec load_experiment(fs::path const & path, std::optional<std::uint64_t> seed_override) {
    std::ifstream in(path);
    if (!in) throw SpecError("cannot read experiment spec '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (json::exception const & e) {
        throw SpecError("experiment spec '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return experiment_from_json(std::move(j), {}, seed_override);
}

std::string sha256_file(fs::path const & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read '" + path.string() + "' for digest");
    EVP_MD_CTX * ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    static char const * hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

RunOutcome run(ExperimentSpec const & spec, int jobs) {
    RunOutcome outcome;
    outcome.directory = spec.output;
    fs::create_directories(spec.output);
    fs::remove_all(spec.output / "cells");
    fs::create_directories(spec.output / "cells");
    fs::create_directories(spec.output / "models");
    for (char const * stale : {"results.csv", "results.json", "manifest.json"}) fs::remove(spec.output / stale);

    int const horizon = spec.source["eval"]["horizon"].get<int>();
    int const history = spec.source["eval"]["history_len"].get<int>();

    // Corpus stage.
    std::vector<Scene> scenes;
    json inputs = json::object();
    if (spec.corpus_sim) {
        scenes = sim::generate(*spec.corpus_sim);
        write_corpus(scenes, spec.output / "corpus.jsonl");
    } else {
        scenes = read_corpus(*spec.corpus_path);
        inputs["corpus"] = {{"path", spec.corpus_path->string()}, {"sha256", sha256_file(*spec.corpus_path)}};
    }
    std::vector<std::size_t> const indices =
        spec.validation_only ? train::split_indices(scenes.size(), true) : [&] {
            std::vector<std::size_t> all(scenes.size());
            for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
            return all;
        }();

    // Model stage.
    std::size_t const n_models = spec.models.size();
    std::vector<std::optional<train::Predictor>> predictors(n_models);
    std::vector<std::optional<models::ModelConfig>> configs(n_models);
    std::vector<std::string> model_errors(n_models);
    parallel_for(n_models, jobs, [&](std::size_t i) {
        ModelEntry const & m = spec.models[i];
        try {
            if (m.baseline) {
                predictors[i] = train::baseline_predictor(*m.baseline, horizon);
                return;
            }
            std::pair<models::ModelConfig, models::ParamStore> loaded;
            if (m.train) {
                train::TrainConfig tc = *m.train;
                tc.corpus.clear();
                tc.checkpoint = spec.output / "models" / (m.name + ".ckpt");
                tc.log = spec.output / "models" / (m.name + ".train.csv");
                // Cache key and metadata omit the output paths so runs in different directories agree byte for byte.
                train::TrainConfig keyed = tc;
                keyed.checkpoint.clear();
                keyed.log.clear();
                json const expected = train::to_json(keyed);
                json cached;
                bool reuse = false;
                if (fs::exists(tc.checkpoint) && fs::exists(tc.log)) {
                    try {
                        loaded = train::load_model(tc.checkpoint, &cached);
                        reuse = cached.contains("train") && cached["train"] == expected &&
                                cached.value("corpus_digest", std::string{}) ==
                                    (spec.corpus_sim ? sha256_file(spec.output / "corpus.jsonl")
                                                     : inputs["corpus"]["sha256"].get<std::string>());
                    } catch (Error const &) {
                        reuse = false;
                    }
                }
                if (!reuse) {
                    train::TrainResult r = train::train(keyed, scenes);
                    write_atomic(tc.log, r.log.to_csv(false));
                    std::string const digest = spec.corpus_sim ? sha256_file(spec.output / "corpus.jsonl")
                                                               : inputs["corpus"]["sha256"].get<std::string>();
                    train::save_model(tc.model, r.params, tc.checkpoint,
                                      {{"train", expected}, {"corpus_digest", digest}});
                    loaded = train::load_model(tc.checkpoint);
                }
            } else {
                loaded = train::load_model(*m.checkpoint);
                if (loaded.first.cnn.horizons != horizon || loaded.first.raster.history_len != history) {
                    throw Error("checkpoint horizon/history differ from the evaluation settings");
                }
            }
            configs[i] = loaded.first;
            predictors[i] = train::model_predictor(loaded.first, loaded.second);
        } catch (std::exception const & e) {
            model_errors[i] = e.what();
        }
    });

    // Evaluation stage: one task per (model, noise) cell.
    std::size_t const n_noise = spec.noise.size();
    std::vector<std::optional<json>> cells(n_models * n_noise);
    std::vector<std::string> cell_errors(n_models * n_noise);
    parallel_for(n_models * n_noise, jobs, [&](std::size_t k) {
        std::size_t const mi = k / n_noise;
        std::size_t const ni = k % n_noise;
        if (!predictors[mi]) return;
        try {
            train::EvalConfig ec;
            ec.present = spec.present;
            ec.history_len = history;
            ec.horizon = horizon;
            ec.noise = spec.noise[ni].spec;
            ec.slices = spec.slices;
            tracking::NoiseDiagnostics diag;
            eval::MetricsReport const rep = train::evaluate(*predictors[mi], scenes, indices, ec, &diag);
            json cell = {{"model", spec.models[mi].name},
                         {"model_kind", model_kind(spec.models[mi], configs[mi])},
                         {"noise", spec.noise[ni].name},
                         {"noise_spec", tracking::to_json(spec.noise[ni].spec)},
                         {"report", eval::to_json(rep)},
                         {"noise_diagnostics",
                          {{"tracks_considered", diag.tracks_considered},
                           {"switches_applied", diag.switches_applied},
                           {"switched_steps", diag.switched_steps},
                           {"dropped", diag.dropped}}}};
            write_atomic(spec.output / "cells" / cell_file(spec.models[mi].name, spec.noise[ni].name), cell.dump(2) + "\n");
            cells[k] = std::move(cell);
        } catch (std::exception const & e) {
            cell_errors[k] = e.what();
        }
    });

    // Merge in spec order.
    std::string csv = "model,noise,slice,metric,value,n\n";
    json rows = json::array();
    json cell_list = json::array();
    for (std::size_t mi = 0; mi < n_models; ++mi) {
        if (!predictors[mi]) {
            outcome.failures.push_back({spec.models[mi].name, "", model_errors[mi]});
            continue;
        }
        for (std::size_t ni = 0; ni < n_noise; ++ni) {
            std::size_t const k = mi * n_noise + ni;
            if (!cells[k]) {
                outcome.failures.push_back({spec.models[mi].name, spec.noise[ni].name, cell_errors[k]});
                continue;
            }
            json const & cell = *cells[k];
            for (json const & sl : cell["report"]["slices"]) {
                for (char const * metric : eval::kMetricNames) {
                    double const v = sl[metric].get<double>();
                    long const n = sl["n"].get<long>();
                    csv += eval::csv_field(spec.models[mi].name) + "," + eval::csv_field(spec.noise[ni].name) + "," +
                           eval::csv_field(sl["slice"].get<std::string>()) + "," + metric + "," +
                           eval::format_double(v) + "," + std::to_string(n) + "\n";
                    rows.push_back({{"model", spec.models[mi].name},
                                    {"noise", spec.noise[ni].name},
                                    {"slice", sl["slice"]},
                                    {"metric", metric},
                                    {"value", v},
                                    {"n", n}});
                    ++outcome.rows;
                }
            }
            cell_list.push_back(cell);
        }
    }
    json failures = json::array();
    for (auto const & f : outcome.failures) failures.push_back({{"model", f.model}, {"noise", f.noise}, {"error", f.message}});
    json expected = {{"models", json::array()}, {"noise", json::array()}, {"slices", json::array()}};
    for (auto const & m : spec.models) expected["models"].push_back(m.name);
    for (auto const & n : spec.noise) expected["noise"].push_back(n.name);
    for (auto const & s : spec.slices) expected["slices"].push_back(eval::label(s));

    write_atomic(spec.output / "results.csv", csv);
    json results = {{"format", "trackbench-results"},
                    {"format_version", kResultsFormatVersion},
                    {"metrics_schema_version", eval::kMetricsSchemaVersion},
                    {"experiment", spec.name},
                    {"columns", {"model", "noise", "slice", "metric", "value", "n"}},
                    {"metric_notes", "AT and CT are means of absolute projected errors; per-agent means over valid horizons, "
                                     "then macro-averaged over agents"},
                    {"expected", expected},
                    {"rows", rows},
                    {"cells", cell_list},
                    {"failures", failures}};
    write_atomic(spec.output / "results.json", results.dump(2) + "\n");

    json seeds = {{"experiment", spec.seed}};
    if (spec.corpus_sim) seeds["corpus"] = spec.corpus_sim->seed;
    for (auto const & m : spec.models) {
        if (m.train) seeds["train/" + m.name] = m.train->seed;
    }
    for (auto const & n : spec.noise) seeds["noise/" + n.name] = n.spec.seed;
    json manifest = {{"format", "trackbench-run-manifest"},
                     {"format_version", kManifestFormatVersion},
                     {"formats",
                      {{"corpus", kCorpusFormatVersion},
                       {"checkpoint", 1},
                       {"results", kResultsFormatVersion},
                       {"metrics_schema", eval::kMetricsSchemaVersion}}},
                     {"spec", spec.source},
                     {"seeds", seeds},
                     {"inputs", inputs},
                     {"expected_cells", n_models * n_noise},
                     {"rows", outcome.rows},
                     {"failures", failures}};
    write_atomic(spec.output / "manifest.json", manifest.dump(2) + "\n");
    refresh_manifest(spec.output);
    return outcome;
}

void refresh_manifest(fs::path const & dir) {
    fs::path const path = dir / "manifest.json";
    json manifest;
    try {
        manifest = json::parse(read_text(path));
    } catch (json::exception const & e) {
        throw Error("manifest '" + path.string() + "' is not valid JSON: " + e.what());
    }
    std::vector<fs::path> files;
    for (auto const & e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().filename() != "manifest.json" && e.path().extension() != ".tmp") {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    json artifacts = json::object();
    json stages = {{"corpus", json::array()}, {"train", json::array()}, {"evaluate", json::array()},
                   {"results", json::array()}, {"report", json::array()}};
    for (auto const & f : files) {
        std::string const rel = fs::relative(f, dir).generic_string();
        artifacts[rel] = sha256_file(f);
        std::string stage = "report";
        if (rel == "corpus.jsonl") stage = "corpus";
        else if (rel.starts_with("models/")) stage = "train";
        else if (rel.starts_with("cells/")) stage = "evaluate";
        else if (rel.starts_with("results.")) stage = "results";
        stages[stage].push_back(rel);
    }
    manifest["stages"] = stages;
    manifest["artifacts"] = artifacts;
    write_atomic(path, manifest.dump(2) + "\n");
}

} // namespace trackbench::bench
