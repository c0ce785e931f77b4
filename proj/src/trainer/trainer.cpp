#include "trackbench/trainer/trainer.hpp"

#include "trackbench/core/corpus.hpp"
#include "trackbench/core/rng.hpp"
#include "trackbench/simgen/simgen.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>

namespace trackbench::train {

using nlohmann::json;
namespace ad = models::ad;

void validate(TrainConfig & c) {
    models::validate(c.model);
    tracking::validate(c.noise);
    eval::validate(c.loss);
    if (c.batch_size < 1) throw InvariantError("TrainConfig: batch_size must be >= 1");
    if (c.iterations < 0) throw InvariantError("TrainConfig: iterations must be >= 0");
    if (!(c.optimizer.lr > 0.0)) throw InvariantError("TrainConfig: lr must be > 0");
    if (!(c.optimizer.decay_factor > 0.0) || c.optimizer.decay_every < 1)
        throw InvariantError("TrainConfig: decay_factor > 0 and decay_every >= 1 required");
    if (c.eval_every < 1) throw InvariantError("TrainConfig: eval_every must be >= 1");
}

json to_json(TrainConfig const & c) {
    return {{"corpus", c.corpus.string()},
            {"model", models::to_json(c.model)},
            {"noise", tracking::to_json(c.noise)},
            {"batch_size", c.batch_size},
            {"iterations", c.iterations},
            {"optimizer",
             {{"lr", c.optimizer.lr},
              {"beta1", c.optimizer.beta1},
              {"beta2", c.optimizer.beta2},
              {"epsilon", c.optimizer.epsilon},
              {"decay_factor", c.optimizer.decay_factor},
              {"decay_every", c.optimizer.decay_every}}},
            {"loss", eval::to_json(c.loss)},
            {"seed", c.seed},
            {"checkpoint", c.checkpoint.string()},
            {"log", c.log.string()},
            {"eval_every", c.eval_every},
            {"eval_present", c.eval_present}};
}

TrainConfig train_config_from_json(json const & j) {
    TrainConfig c;
    try {
        c.corpus = j.value("corpus", std::string{});
        if (j.contains("model")) c.model = models::model_config_from_json(j["model"]);
        if (j.contains("noise")) c.noise = tracking::noise_spec_from_json(j["noise"]);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.iterations = j.value("iterations", c.iterations);
        if (j.contains("optimizer")) {
            auto const & o = j["optimizer"];
            c.optimizer.lr = o.value("lr", c.optimizer.lr);
            c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
            c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
            c.optimizer.epsilon = o.value("epsilon", c.optimizer.epsilon);
            c.optimizer.decay_factor = o.value("decay_factor", c.optimizer.decay_factor);
            c.optimizer.decay_every = o.value("decay_every", c.optimizer.decay_every);
        }
        if (j.contains("loss")) c.loss = eval::loss_params_from_json(j["loss"]);
        c.seed = j.value("seed", c.seed);
        c.checkpoint = j.value("checkpoint", std::string{});
        c.log = j.value("log", std::string{});
        c.eval_every = j.value("eval_every", c.eval_every);
        c.eval_present = j.value("eval_present", c.eval_present);
    } catch (json::exception const & e) {
        throw FormatError(std::string("invalid TrainConfig: ") + e.what());
    }
    validate(c);
    return c;
}

std::string TrainLog::to_csv(bool with_wall_time) const {
    std::string out = with_wall_time ? "iteration,train_loss,val_ade,val_fde,wall_seconds\n"
                                     : "iteration,train_loss,val_ade,val_fde\n";
    for (auto const & e : entries) {
        out += std::to_string(e.iteration) + "," + eval::format_double(e.train_loss) + "," +
               eval::format_double(e.val_ade) + "," + eval::format_double(e.val_fde);
        if (with_wall_time) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.3f", e.wall_seconds);
            out += std::string(",") + buf;
        }
        out += "\n";
    }
    return out;
}

bool is_validation_scene(std::size_t index) {
    return splitmix64(fnv1a64("trainer/split") ^ static_cast<std::uint64_t>(index)) % 5 == 0;
}

std::vector<std::size_t> split_indices(std::size_t n, bool validation) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n; ++i) {
        if (is_validation_scene(i) == validation) out.push_back(i);
    }
    return out;
}

Sample make_sample(models::ModelConfig const & model, Scene const & scene, tracking::TrackingOutput const & tracking,
                   int horizon) {
    TrackSet const & ts = tracking.trackset;
    int const present = ts.present_timestep;
    Pose2 const sdv = scene.sdv_trajectory.at(static_cast<std::size_t>(present));
    Sample s;
    s.input = raster::rasterize(ts, scene.map, sdv, model.raster);
    s.anchors = models::anchor_cells(ts, sdv, models::output_geometry(model));
    GroundTruthFuture const truth = sim::ground_truth_future(scene, present, horizon);
    for (TrackId id : s.anchors.tracks) {
        auto const src = tracking.provenance.find({id, present});
        auto const it = src == tracking.provenance.end() ? truth.agents.end() : truth.agents.find(src->second);
        if (it != truth.agents.end()) {
            s.targets.push_back(it->second);
        } else {
            FutureTrajectory none;
            none.centers.resize(static_cast<std::size_t>(horizon));
            none.headings.resize(static_cast<std::size_t>(horizon));
            none.valid.resize(static_cast<std::size_t>(horizon), 0);
            s.targets.push_back(std::move(none));
        }
        if (model.kind == models::ModelKind::Hybrid) {
            s.states.push_back(raster::agent_state_seq(*ts.find(id), present, model.raster.history_len, sdv));
        }
    }
    return s;
}

long loss_terms(Sample const & s, int horizon) {
    long n = 0;
    for (auto const & t : s.targets) {
        for (int h = 0; h < horizon && h < static_cast<int>(t.valid.size()); ++h) n += t.valid[static_cast<std::size_t>(h)] ? 2 : 0;
    }
    return n;
}

ad::Var kl_loss_node(ad::Graph & g, ad::Var rows, models::Anchors const & anchors,
                     std::vector<FutureTrajectory> const & targets, eval::LossParams const & params, double scale) {
    Tensor const & r = g.value(rows);
    if (r.rank() != 2 || r.dim(0) != static_cast<int>(anchors.tracks.size()) || r.dim(1) % 4 != 0 ||
        targets.size() != anchors.tracks.size()) {
        throw ShapeError("kl_loss_node: rows " + r.shape_string() + " do not match the anchors");
    }
    int const n = r.dim(0);
    int const width = r.dim(1);
    int const horizon = width / 4;
    Tensor grad({n, width});
    eval::NeumaierSum total;
    for (int i = 0; i < n; ++i) {
        auto const & t = targets[static_cast<std::size_t>(i)];
        Vec2 const origin = anchors.centers[static_cast<std::size_t>(i)];
        for (int h = 0; h < horizon && h < static_cast<int>(t.valid.size()); ++h) {
            if (!t.valid[static_cast<std::size_t>(h)]) continue;
            std::size_t const base = static_cast<std::size_t>(i * width + 4 * h);
            Vec2 const e{origin.x + r[base] - t.centers[static_cast<std::size_t>(h)].x,
                         origin.y + r[base + 1] - t.centers[static_cast<std::size_t>(h)].y};
            double const th = t.headings[static_cast<std::size_t>(h)];
            eval::AtCt const p = eval::project_at_ct(e, th);
            eval::Diversity const b = eval::diversity_schedule(params, h + 1);
            total.add(eval::kl_loss(p.at, r[base + 2], b.at));
            total.add(eval::kl_loss(p.ct, r[base + 3], b.ct));
            eval::KlPartials const ga = eval::kl_loss_partials(p.at, r[base + 2], b.at);
            eval::KlPartials const gc = eval::kl_loss_partials(p.ct, r[base + 3], b.ct);
            double const c = std::cos(th);
            double const s = std::sin(th);
            grad[base] = scale * (ga.d_error * c - gc.d_error * s);
            grad[base + 1] = scale * (ga.d_error * s + gc.d_error * c);
            grad[base + 2] = scale * ga.d_b_hat;
            grad[base + 3] = scale * gc.d_b_hat;
        }
    }
    Tensor value({1});
    value[0] = scale * total.value();
    return g.record(std::move(value), {rows}, [rows, grad = std::move(grad)](ad::Graph & gr, ad::Var self) {
        if (!gr.requires_grad(rows)) return;
        double const d = gr.grad(self)[0];
        Tensor & dr = gr.grad(rows);
        for (std::size_t k = 0; k < dr.size(); ++k) dr[k] += d * grad[k];
    });
}

ad::Var forward_sample(ad::Graph & g, models::ModelConfig const & model, Sample const & s) {
    if (model.kind == models::ModelKind::Hybrid) return models::forward_hybrid(g, model, s.input, s.states, s.anchors.cells);
    return models::forward_anchored(g, model, s.input, s.anchors.cells);
}

namespace {

struct Adam {
    AdamConfig config;
    std::map<std::string, Tensor> m, v;
    long step = 0;

    void apply(models::ParamStore & params, double lr) {
        ++step;
        double const c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
        double const c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
        for (auto & [name, entry] : params) {
            auto [mi, fresh] = m.try_emplace(name, entry.value.shape());
            Tensor & mt = mi->second;
            Tensor & vt = v.try_emplace(name, entry.value.shape()).first->second;
            for (std::size_t k = 0; k < entry.value.size(); ++k) {
                double const gk = entry.grad[k];
                mt[k] = config.beta1 * mt[k] + (1.0 - config.beta1) * gk;
                vt[k] = config.beta2 * vt[k] + (1.0 - config.beta2) * gk * gk;
                entry.value[k] -= lr * (mt[k] / c1) / (std::sqrt(vt[k] / c2) + config.epsilon);
            }
        }
    }
};

bool all_finite(models::ParamStore const & params) {
    for (auto const & [name, e] : params) {
        for (double x : e.grad.values()) {
            if (!std::isfinite(x)) return false;
        }
    }
    return true;
}

tracking::TrackingOutput training_tracks(TrainConfig const & c, Scene const & scene, int present, std::uint64_t stream) {
    tracking::TrackingOutput clean = tracking::perfect_tracker(scene, present, c.model.raster.history_len);
    if (c.noise == tracking::NoiseSpec{.seed = c.noise.seed}) return clean;
    tracking::NoiseSpec spec = c.noise;
    spec.seed = splitmix64(c.noise.seed ^ stream);
    return tracking::inject_noise(clean, spec);
}

} // namespace

TrainResult train(TrainConfig const & config) {
    if (config.corpus.empty()) throw InvariantError("TrainConfig: corpus path is empty");
    return train(config, read_corpus(config.corpus));
}

TrainResult train(TrainConfig const & config_in, std::vector<Scene> const & scenes) {
    TrainConfig config = config_in;
    validate(config);
    auto const start = std::chrono::steady_clock::now();
    models::ModelConfig const & model = config.model;
    int const horizon = model.cnn.horizons;
    int const history = model.raster.history_len;

    std::vector<std::size_t> const train_idx = split_indices(scenes.size(), false);
    std::vector<std::size_t> const val_idx = split_indices(scenes.size(), true);
    if (train_idx.empty()) throw InvariantError("train: corpus has no training scenes");
    for (std::size_t i : train_idx) {
        if (scenes[i].duration < history + horizon) {
            throw InvariantError("train: scene '" + scenes[i].scene_id + "' is shorter than history + horizon");
        }
    }

    TrainResult result{models::init_params(model, config.seed), {}};
    models::ParamStore & params = result.params;
    Adam adam{config.optimizer, {}, {}, 0};
    Rng rng = seeded_rng(config.seed, "trainer/batches");
    std::vector<std::size_t> order;
    std::size_t cursor = 0;

    EvalConfig ec;
    ec.present = config.eval_present;
    ec.history_len = history;
    ec.horizon = horizon;
    auto validate_now = [&](int iteration, double train_loss) {
        TrainLogEntry e;
        e.iteration = iteration;
        e.train_loss = train_loss;
        if (!val_idx.empty()) {
            auto const report = evaluate(model_predictor(model, params), scenes, val_idx, ec);
            auto const m = report.metrics(0);
            e.val_ade = m.ade;
            e.val_fde = m.fde;
        }
        e.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.log.entries.push_back(e);
    };

    eval::NeumaierSum window_loss;
    int window_count = 0;
    for (int it = 0; it < config.iterations; ++it) {
        std::vector<Sample> batch;
        for (int b = 0; b < config.batch_size; ++b) {
            if (cursor == order.size()) {
                order = train_idx;
                for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[rng.uniform_index(k)]);
                cursor = 0;
            }
            Scene const & scene = scenes[order[cursor++]];
            int const present = rng.uniform_int(history - 1, scene.duration - horizon - 1);
            auto const stream = static_cast<std::uint64_t>(it) * 1024u + static_cast<std::uint64_t>(b);
            Sample s = make_sample(model, scene, training_tracks(config, scene, present, stream), horizon);
            if (!s.anchors.cells.empty()) batch.push_back(std::move(s));
        }
        long terms = 0;
        for (auto const & s : batch) terms += loss_terms(s, horizon);
        params.zero_grad();
        double loss = 0.0;
        if (terms > 0) {
            ad::Graph g(&params);
            ad::Var total;
            for (auto const & s : batch) {
                ad::Var l = kl_loss_node(g, forward_sample(g, model, s), s.anchors, s.targets, config.loss,
                                         1.0 / static_cast<double>(terms));
                total = total.id < 0 ? l : ad::add(g, total, l);
            }
            loss = g.value(total)[0];
            if (!std::isfinite(loss)) {
                throw DivergenceError("training diverged at iteration " + std::to_string(it) + ": loss is " +
                                      std::to_string(loss));
            }
            g.backward(total);
            if (!all_finite(params)) {
                throw DivergenceError("training diverged at iteration " + std::to_string(it) + ": non-finite gradient");
            }
        }
        if (it == 0) validate_now(0, loss);
        double const lr = config.optimizer.lr *
                          std::pow(config.optimizer.decay_factor, static_cast<double>(it / config.optimizer.decay_every));
        adam.apply(params, lr);
        window_loss.add(loss);
        ++window_count;
        if ((it + 1) % config.eval_every == 0 || it + 1 == config.iterations) {
            validate_now(it + 1, window_loss.value() / window_count);
            window_loss = {};
            window_count = 0;
        }
    }
    if (config.iterations == 0) validate_now(0, 0.0);

    if (!config.checkpoint.empty()) {
        // Output paths stay out of the metadata so the bytes do not depend on where they land.
        TrainConfig keyed = config;
        keyed.checkpoint.clear();
        keyed.log.clear();
        save_model(model, params, config.checkpoint, {{"train", to_json(keyed)}});
    }
    if (!config.log.empty()) {
        std::ofstream out(config.log, std::ios::binary);
        out << result.log.to_csv();
        if (!out) throw Error("cannot write train log '" + config.log.string() + "'");
    }
    return result;
}

Predictor model_predictor(models::ModelConfig const & config, models::ParamStore const & params) {
    models::ModelConfig model = config;
    models::validate(model);
    auto shared = std::make_shared<models::ParamStore>(params);
    return [model, shared](Scene const & scene, tracking::TrackingOutput const & t) {
        Pose2 const sdv = scene.sdv_trajectory.at(static_cast<std::size_t>(t.trackset.present_timestep));
        return models::predict(model, *shared, t.trackset, scene.map, sdv);
    };
}

Predictor baseline_predictor(models::BaselineKind kind, int horizon) {
    return [kind, horizon](Scene const & scene, tracking::TrackingOutput const & t) {
        Pose2 const sdv = scene.sdv_trajectory.at(static_cast<std::size_t>(t.trackset.present_timestep));
        return models::predict_baseline(kind, t.trackset, sdv, horizon);
    };
}

eval::MetricsReport evaluate(Predictor const & predictor, std::vector<Scene> const & scenes,
                             std::vector<std::size_t> const & indices, EvalConfig const & config,
                             tracking::NoiseDiagnostics * diagnostics) {
    tracking::validate(config.noise);
    eval::MetricsReport report(config.slices);
    for (std::size_t i : indices) {
        Scene const & scene = scenes.at(i);
        if (config.present - config.history_len + 1 < 0 || config.present + config.horizon >= scene.duration + 1) {
            throw InvariantError("evaluate: scene '" + scene.scene_id + "' too short for present " +
                                 std::to_string(config.present));
        }
        tracking::TrackingOutput const clean = tracking::perfect_tracker(scene, config.present, config.history_len);
        tracking::NoiseDiagnostics d;
        tracking::TrackingOutput const noisy = tracking::inject_noise(clean, config.noise, &d);
        if (diagnostics != nullptr) *diagnostics += d;
        PredictionSet const preds = predictor(scene, noisy);
        GroundTruthFuture const truth = sim::ground_truth_future(scene, config.present, config.horizon);
        std::vector<std::optional<AgentId>> agent_of;
        for (auto const & p : preds.agents) {
            auto const it = noisy.provenance.find({p.track, config.present});
            agent_of.push_back(it == noisy.provenance.end() ? std::nullopt : std::optional<AgentId>(it->second));
        }
        eval::accumulate(report, scene, config.present, preds, truth, agent_of);
    }
    return report;
}

void save_model(models::ModelConfig const & model, models::ParamStore const & params, std::filesystem::path const & path,
                json const & extra) {
    json meta = extra.is_object() ? extra : json::object();
    meta["model"] = models::to_json(model);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    models::save_checkpoint(params, meta.dump(), path);
}

std::pair<models::ModelConfig, models::ParamStore> load_model(std::filesystem::path const & path, json * metadata) {
    std::string text;
    models::ParamStore params = models::load_checkpoint(path, &text);
    json meta;
    try {
        meta = json::parse(text);
    } catch (json::exception const & e) {
        throw FormatError("checkpoint '" + path.string() + "': metadata is not JSON: " + e.what());
    }
    if (!meta.contains("model")) throw FormatError("checkpoint '" + path.string() + "': metadata lacks the model config");
    models::ModelConfig model = models::model_config_from_json(meta["model"]);
    models::ParamStore expected = models::init_params(model, 0);
    for (auto const & name : expected.names()) {
        if (!params.contains(name) || params.at(name).value.shape() != expected.at(name).value.shape()) {
            throw FormatError("checkpoint '" + path.string() + "': parameter '" + name + "' missing or misshaped");
        }
    }
    if (metadata != nullptr) *metadata = std::move(meta);
    return {std::move(model), std::move(params)};
}

} // namespace trackbench::train
