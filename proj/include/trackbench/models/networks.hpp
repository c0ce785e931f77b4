#pragma once

#include "trackbench/core/prediction.hpp"
#include "trackbench/core/types.hpp"
#include "trackbench/models/autodiff.hpp"
#include "trackbench/models/param_store.hpp"
#include "trackbench/raster/raster.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace trackbench::models {

enum class ModelKind { TrackFree, TrackBased, Hybrid };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(std::string const & name);

struct ConvLayerSpec {
    int kernel = 3;
    int stride = 2;
    int out_channels = 16;
};

/// Convolutional trunk followed by three 1x1 layers producing 4H channels per cell.
struct MicroCNNSpec {
    std::vector<ConvLayerSpec> conv_layers{{3, 2, 16}, {3, 2, 32}};
    int head_hidden = 64; // width of the two hidden 1x1 layers
    int horizons = 5;
};

struct RecurrentEncoderSpec {
    int state_dim = raster::kStateFeatureCount;
    int hidden_dim = 16;
};

struct ModelConfig {
    ModelKind kind = ModelKind::TrackFree;
    raster::RasterConfig raster;
    MicroCNNSpec cnn;
    RecurrentEncoderSpec rnn;
};

/// Raster variant a model kind consumes.
raster::Variant input_variant(ModelKind kind);
/// Sets config.raster.variant from config.kind and checks the whole configuration.
void validate(ModelConfig & config);

nlohmann::json to_json(ModelConfig const & config);
ModelConfig model_config_from_json(nlohmann::json const & j);

/// Output grid geometry (S x S) for a configuration.
raster::GridGeometry output_geometry(ModelConfig const & config);

/// He-initialized parameters; deterministic in seed.
ParamStore init_params(ModelConfig const & config, std::uint64_t seed);

/// Convolutional trunk: dense features (C_trunk x S x S).
ad::Var trunk_features(ad::Graph & g, ModelConfig const & config, raster::RasterTensor const & raster);

/// Three 1x1 layers applied to the rows of an (N x C) feature matrix, diversities exponentiated.
ad::Var head_rows(ad::Graph & g, ModelConfig const & config, ad::Var features);

/// Full grid output (4H x S x S), diversity channels positive.
ad::Var forward_grid(ad::Graph & g, ModelConfig const & config, raster::RasterTensor const & raster);
Tensor forward_grid(ModelConfig const & config, ParamStore & params, raster::RasterTensor const & raster);

/// Recurrent embedding (N x hidden) of per-agent state sequences, oldest step first.
ad::Var encode_states(ad::Graph & g, ModelConfig const & config, std::vector<raster::AgentStateSeq> const & states);

/// Anchored rows (N x 4H) for grid models: trunk features at the anchor cells, then heads.
ad::Var forward_anchored(ad::Graph & g, ModelConfig const & config, raster::RasterTensor const & raster,
                         std::vector<GridIndex> const & anchors);

/// Hybrid rows (N x 4H): [trunk features at anchor | recurrent embedding] through the heads.
ad::Var forward_hybrid(ad::Graph & g, ModelConfig const & config, raster::RasterTensor const & raster,
                       std::vector<raster::AgentStateSeq> const & states, std::vector<GridIndex> const & anchors);

/// Present detections of a track set and the output cells they fall in.
struct Anchors {
    std::vector<TrackId> tracks;
    std::vector<Vec2> centers; // BEV present centers
    std::vector<GridIndex> cells;
    int excluded = 0;   // present centers outside the output grid
    int collisions = 0; // anchors sharing a cell with an earlier anchor
};

Anchors anchor_cells(TrackSet const & tracks, Pose2 const & sdv_pose, raster::GridGeometry const & output_grid);

/// One prediction per present-frame detection, read from its anchor cell of a (4H x S x S) output.
PredictionSet extract_anchored(Tensor const & grid_output, TrackSet const & tracks, Pose2 const & sdv_pose,
                               raster::GridGeometry const & output_grid);

/// Converts (N x 4H) rows into a PredictionSet aligned with `anchors`.
PredictionSet rows_to_predictions(Tensor const & rows, Anchors const & anchors, int horizons);

/// End-to-end inference for any model kind: rasterize, forward, and read anchored predictions.
PredictionSet predict(ModelConfig const & config, ParamStore & params, TrackSet const & tracks, MapSpec const & map,
                      Pose2 const & sdv_pose);

} // namespace trackbench::models
