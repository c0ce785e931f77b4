#pragma once

#include "trackbench/core/error.hpp"
#include "trackbench/core/prediction.hpp"
#include "trackbench/core/types.hpp"
#include "trackbench/evalkit/evalkit.hpp"
#include "trackbench/models/autodiff.hpp"
#include "trackbench/models/baselines.hpp"
#include "trackbench/models/networks.hpp"
#include "trackbench/tracking/tracking.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace trackbench::train {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double decay_factor = 0.9;
    int decay_every = 500;
};

struct TrainConfig {
    std::filesystem::path corpus;
    models::ModelConfig model;
    tracking::NoiseSpec noise; // applied online to training tracks
    int batch_size = 8;
    int iterations = 2000;
    AdamConfig optimizer;
    eval::LossParams loss;
    std::uint64_t seed = 0;
    std::filesystem::path checkpoint; // empty: no file written
    std::filesystem::path log;        // empty: no file written
    int eval_every = 500;
    int eval_present = 15; // present frame for validation
};

void validate(TrainConfig & config);
nlohmann::json to_json(TrainConfig const & config);
TrainConfig train_config_from_json(nlohmann::json const & j);

struct TrainLogEntry {
    int iteration = 0;
    double train_loss = 0.0; // mean batch loss since the previous entry
    double val_ade = 0.0;
    double val_fde = 0.0;
    double wall_seconds = 0.0;
};

struct TrainLog {
    std::vector<TrainLogEntry> entries;
    /// CSV text; `with_wall_time` false drops the only nondeterministic column.
    [[nodiscard]] std::string to_csv(bool with_wall_time = true) const;
};

struct TrainResult {
    models::ParamStore params;
    TrainLog log;
};

/// Deterministic 80/20 split by hashed scene index.
bool is_validation_scene(std::size_t index);
std::vector<std::size_t> split_indices(std::size_t scene_count, bool validation);

/// One supervised example: model input and per-anchor regression targets.
struct Sample {
    raster::RasterTensor input;
    models::Anchors anchors;
    std::vector<raster::AgentStateSeq> states;  // hybrid only, aligned with anchors
    std::vector<FutureTrajectory> targets;       // aligned with anchors; offsets are absolute BEV centers
};

Sample make_sample(models::ModelConfig const & model, Scene const & scene, tracking::TrackingOutput const & tracking,
                   int horizon);

/// Fused loss node: sum over valid (anchor, horizon, direction) of KL, times `scale`.
/// `rows` is the (N x 4H) prediction with positive diversities; targets as in Sample.
models::ad::Var kl_loss_node(models::ad::Graph & g, models::ad::Var rows, models::Anchors const & anchors,
                             std::vector<FutureTrajectory> const & targets, eval::LossParams const & params,
                             double scale);
/// Number of KL terms a sample contributes (2 per valid anchored horizon).
long loss_terms(Sample const & sample, int horizon);

/// Forward pass producing (N x 4H) rows for a sample.
models::ad::Var forward_sample(models::ad::Graph & g, models::ModelConfig const & model, Sample const & sample);

TrainResult train(TrainConfig const & config);
TrainResult train(TrainConfig const & config, std::vector<Scene> const & scenes);

/// Maps a scene and its (possibly noisy) tracks to predictions.
using Predictor = std::function<PredictionSet(Scene const &, tracking::TrackingOutput const &)>;

Predictor model_predictor(models::ModelConfig const & model, models::ParamStore const & params);
Predictor baseline_predictor(models::BaselineKind kind, int horizon);

struct EvalConfig {
    int present = 15;
    int history_len = 11;
    int horizon = 5;
    tracking::NoiseSpec noise;
    std::vector<eval::SlicePredicate> slices{eval::SlicePredicate{}};
};

/// Noise is applied to the evaluation tracks only; scenes and the predictor are never mutated.
eval::MetricsReport evaluate(Predictor const & predictor, std::vector<Scene> const & scenes,
                             std::vector<std::size_t> const & indices, EvalConfig const & config,
                             tracking::NoiseDiagnostics * diagnostics = nullptr);

/// Checkpoint with model metadata.
void save_model(models::ModelConfig const & model, models::ParamStore const & params, std::filesystem::path const & path,
                nlohmann::json const & extra);
std::pair<models::ModelConfig, models::ParamStore> load_model(std::filesystem::path const & path,
                                                              nlohmann::json * metadata = nullptr);

class DivergenceError : public Error {
public:
    using Error::Error;
};

} // namespace trackbench::train
