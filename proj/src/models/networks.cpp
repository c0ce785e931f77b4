#include "trackbench/models/networks.hpp"

#include "trackbench/core/error.hpp"
#include "trackbench/core/rng.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <set>

namespace trackbench::models {

using nlohmann::json;

std::string to_string(ModelKind kind) {
    switch (kind) {
    case ModelKind::TrackFree: return "track_free";
    case ModelKind::TrackBased: return "track_based";
    case ModelKind::Hybrid: return "hybrid";
    }
    return "?";
}

ModelKind model_kind_from_string(std::string const & name) {
    for (auto k : {ModelKind::TrackFree, ModelKind::TrackBased, ModelKind::Hybrid}) {
        if (to_string(k) == name) return k;
    }
    throw FormatError("unknown model kind '" + name + "'");
}

raster::Variant input_variant(ModelKind kind) {
    return kind == ModelKind::TrackBased ? raster::Variant::DisplacementField : raster::Variant::BinaryHistory;
}

namespace {

int conv_out(int in, ConvLayerSpec const & l) { return (in + 2 * (l.kernel / 2) - l.kernel) / l.stride + 1; }

int trunk_channels(ModelConfig const & c) { return c.cnn.conv_layers.back().out_channels; }

int head_input(ModelConfig const & c) {
    return trunk_channels(c) + (c.kind == ModelKind::Hybrid ? c.rnn.hidden_dim : 0);
}

} // namespace

void validate(ModelConfig & c) {
    c.raster.variant = input_variant(c.kind);
    raster::validate(c.raster);
    if (c.cnn.conv_layers.empty()) throw InvariantError("MicroCNNSpec: needs at least one conv layer");
    int w = c.raster.width;
    int h = c.raster.height;
    int total_stride = 1;
    for (auto const & l : c.cnn.conv_layers) {
        if (l.kernel < 1 || l.kernel % 2 == 0) throw InvariantError("MicroCNNSpec: kernels must be odd");
        if (l.stride < 1 || l.out_channels < 1) throw InvariantError("MicroCNNSpec: stride and channels must be >= 1");
        w = conv_out(w, l);
        h = conv_out(h, l);
        total_stride *= l.stride;
    }
    if (w * total_stride != c.raster.width || h * total_stride != c.raster.height) {
        throw InvariantError("MicroCNNSpec: input " + std::to_string(c.raster.width) + "x" +
                             std::to_string(c.raster.height) + " does not divide cleanly by total stride " +
                             std::to_string(total_stride));
    }
    if (w != h) throw InvariantError("MicroCNNSpec: output grid must be square (S x S)");
    if (c.cnn.head_hidden < 1 || c.cnn.horizons < 1) throw InvariantError("MicroCNNSpec: head_hidden and horizons >= 1");
    if (c.rnn.hidden_dim < 1) throw InvariantError("RecurrentEncoderSpec: hidden_dim must be > 0");
    if (c.rnn.state_dim != raster::kStateFeatureCount) throw InvariantError("RecurrentEncoderSpec: state_dim mismatch");
}

json to_json(ModelConfig const & c) {
    json layers = json::array();
    for (auto const & l : c.cnn.conv_layers) layers.push_back({{"kernel", l.kernel}, {"stride", l.stride}, {"out_channels", l.out_channels}});
    return {{"kind", to_string(c.kind)},
            {"raster", raster::to_json(c.raster)},
            {"cnn", {{"conv_layers", layers}, {"head_hidden", c.cnn.head_hidden}, {"horizons", c.cnn.horizons}}},
            {"rnn", {{"state_dim", c.rnn.state_dim}, {"hidden_dim", c.rnn.hidden_dim}}}};
}

ModelConfig model_config_from_json(json const & j) {
    ModelConfig c;
    try {
        if (j.contains("kind")) c.kind = model_kind_from_string(j["kind"].get<std::string>());
        if (j.contains("raster")) c.raster = raster::raster_config_from_json(j["raster"]);
        if (j.contains("cnn")) {
            auto const & cnn = j["cnn"];
            if (cnn.contains("conv_layers")) {
                c.cnn.conv_layers.clear();
                for (auto const & l : cnn["conv_layers"]) {
                    c.cnn.conv_layers.push_back({l.value("kernel", 3), l.value("stride", 2), l.value("out_channels", 16)});
                }
            }
            c.cnn.head_hidden = cnn.value("head_hidden", c.cnn.head_hidden);
            c.cnn.horizons = cnn.value("horizons", c.cnn.horizons);
        }
        if (j.contains("rnn")) {
            c.rnn.state_dim = j["rnn"].value("state_dim", c.rnn.state_dim);
            c.rnn.hidden_dim = j["rnn"].value("hidden_dim", c.rnn.hidden_dim);
        }
    } catch (json::exception const & e) {
        throw FormatError(std::string("invalid model config: ") + e.what());
    }
    validate(c);
    return c;
}

raster::GridGeometry output_geometry(ModelConfig const & c) {
    int s = c.raster.width;
    for (auto const & l : c.cnn.conv_layers) s = conv_out(s, l);
    return {s, s, c.raster.cell_size * c.raster.width / s};
}

ParamStore init_params(ModelConfig const & config, std::uint64_t seed) {
    ModelConfig c = config;
    validate(c);
    ParamStore store;
    auto normal_fill = [&](std::string const & name, std::vector<int> shape, double sigma) {
        Tensor & t = store.add(name, std::move(shape));
        Rng rng = seeded_rng(seed, "models/init/" + name);
        for (auto & v : t.values()) v = rng.normal(0.0, sigma);
    };
    int in_ch = raster::channel_count(c.raster);
    for (std::size_t i = 0; i < c.cnn.conv_layers.size(); ++i) {
        auto const & l = c.cnn.conv_layers[i];
        std::string const p = "conv" + std::to_string(i);
        normal_fill(p + ".weight", {l.out_channels, in_ch, l.kernel, l.kernel}, std::sqrt(2.0 / (in_ch * l.kernel * l.kernel)));
        store.add(p + ".bias", {l.out_channels});
        in_ch = l.out_channels;
    }
    int const hid = c.cnn.head_hidden;
    int const out = 4 * c.cnn.horizons;
    normal_fill("head0.weight", {hid, head_input(c)}, std::sqrt(2.0 / head_input(c)));
    store.add("head0.bias", {hid});
    normal_fill("head1.weight", {hid, hid}, std::sqrt(2.0 / hid));
    store.add("head1.bias", {hid});
    normal_fill("head2.weight", {out, hid}, 0.1 * std::sqrt(1.0 / hid));
    Tensor & b2 = store.add("head2.bias", {out});
    for (int k = 0; k < out; ++k) {
        if (k % 4 >= 2) b2[static_cast<std::size_t>(k)] = std::log(0.25);
    }
    if (c.kind == ModelKind::Hybrid) {
        int const hd = c.rnn.hidden_dim;
        normal_fill("lstm.wx", {4 * hd, c.rnn.state_dim}, std::sqrt(1.0 / c.rnn.state_dim));
        normal_fill("lstm.wh", {4 * hd, hd}, std::sqrt(1.0 / hd));
        Tensor & b = store.add("lstm.bias", {4 * hd});
        for (int k = hd; k < 2 * hd; ++k) b[static_cast<std::size_t>(k)] = 1.0; // forget gate
    }
    return store;
}

ad::Var trunk_features(ad::Graph & g, ModelConfig const & c, raster::RasterTensor const & r) {
    if (r.channels() != raster::channel_count(c.raster) || r.width() != c.raster.width || r.height() != c.raster.height) {
        throw ShapeError("model input " + r.values.shape_string() + " does not match configuration (" +
                         std::to_string(raster::channel_count(c.raster)) + " x " + std::to_string(c.raster.height) +
                         " x " + std::to_string(c.raster.width) + ")");
    }
    ad::Var x = g.constant(r.values);
    for (std::size_t i = 0; i < c.cnn.conv_layers.size(); ++i) {
        auto const & l = c.cnn.conv_layers[i];
        std::string const p = "conv" + std::to_string(i);
        x = ad::relu(g, ad::conv2d(g, x, g.param(p + ".weight"), g.param(p + ".bias"), l.stride, l.kernel / 2));
    }
    return x;
}

ad::Var head_rows(ad::Graph & g, ModelConfig const &, ad::Var features) {
    ad::Var h = ad::relu(g, ad::linear(g, features, g.param("head0.weight"), g.param("head0.bias")));
    h = ad::relu(g, ad::linear(g, h, g.param("head1.weight"), g.param("head1.bias")));
    h = ad::linear(g, h, g.param("head2.weight"), g.param("head2.bias"));
    return ad::positive_diversity(g, h, 1);
}

ad::Var forward_grid(ad::Graph & g, ModelConfig const & c, raster::RasterTensor const & r) {
    ad::Var x = trunk_features(g, c, r);
    if (c.kind == ModelKind::Hybrid) {
        auto const & shape = g.value(x).shape();
        x = ad::concat_channels(g, x, g.constant(Tensor({c.rnn.hidden_dim, shape[1], shape[2]})));
    }
    ad::Var h = ad::relu(g, ad::conv1x1(g, x, g.param("head0.weight"), g.param("head0.bias")));
    h = ad::relu(g, ad::conv1x1(g, h, g.param("head1.weight"), g.param("head1.bias")));
    h = ad::conv1x1(g, h, g.param("head2.weight"), g.param("head2.bias"));
    return ad::positive_diversity(g, h, 0);
}

Tensor forward_grid(ModelConfig const & config, ParamStore & params, raster::RasterTensor const & r) {
    ad::Graph g(&params);
    return g.value(forward_grid(g, config, r));
}

ad::Var encode_states(ad::Graph & g, ModelConfig const & c, std::vector<raster::AgentStateSeq> const & states) {
    int const n = static_cast<int>(states.size());
    int const hd = c.rnn.hidden_dim;
    int const sd = c.rnn.state_dim;
    int const steps = c.raster.history_len;
    std::vector<std::vector<double>> features;
    for (auto const & s : states) {
        if (static_cast<int>(s.steps.size()) != steps) throw ShapeError("encode_states: state sequence length mismatch");
        features.push_back(raster::state_features(s));
    }
    ad::Var wx = g.param("lstm.wx");
    ad::Var wh = g.param("lstm.wh");
    ad::Var bias = g.param("lstm.bias");
    ad::Var h = g.constant(Tensor({n, hd}));
    ad::Var cell = g.constant(Tensor({n, hd}));
    for (int k = steps - 1; k >= 0; --k) {
        Tensor x({n, sd});
        for (int i = 0; i < n; ++i) {
            for (int f = 0; f < sd; ++f) {
                x[static_cast<std::size_t>(i * sd + f)] = features[static_cast<std::size_t>(i)][static_cast<std::size_t>(k * sd + f)];
            }
        }
        ad::Var z = ad::add(g, ad::linear(g, g.constant(std::move(x)), wx, bias), ad::linear(g, h, wh, ad::Var{}));
        ad::Var in_gate = ad::sigmoid(g, ad::slice_cols(g, z, 0, hd));
        ad::Var forget = ad::sigmoid(g, ad::slice_cols(g, z, hd, hd));
        ad::Var cand = ad::tanh(g, ad::slice_cols(g, z, 2 * hd, hd));
        ad::Var out_gate = ad::sigmoid(g, ad::slice_cols(g, z, 3 * hd, hd));
        cell = ad::add(g, ad::mul(g, forget, cell), ad::mul(g, in_gate, cand));
        h = ad::mul(g, out_gate, ad::tanh(g, cell));
    }
    return h;
}

ad::Var forward_anchored(ad::Graph & g, ModelConfig const & c, raster::RasterTensor const & r,
                         std::vector<GridIndex> const & anchors) {
    if (c.kind == ModelKind::Hybrid) throw StateError("forward_anchored: hybrid models need state sequences");
    ad::Var trunk = trunk_features(g, c, r);
    return head_rows(g, c, ad::gather_cells(g, trunk, anchors));
}

ad::Var forward_hybrid(ad::Graph & g, ModelConfig const & c, raster::RasterTensor const & r,
                       std::vector<raster::AgentStateSeq> const & states, std::vector<GridIndex> const & anchors) {
    if (c.kind != ModelKind::Hybrid) throw StateError("forward_hybrid: model is not hybrid");
    if (states.size() != anchors.size()) throw ShapeError("forward_hybrid: one state sequence per anchor required");
    ad::Var trunk = trunk_features(g, c, r);
    ad::Var features = ad::gather_cells(g, trunk, anchors);
    ad::Var embedding = encode_states(g, c, states);
    return head_rows(g, c, ad::concat_cols(g, features, embedding));
}

Anchors anchor_cells(TrackSet const & tracks, Pose2 const & sdv_pose, raster::GridGeometry const & grid) {
    std::vector<Track const *> order;
    for (auto const & t : tracks.tracks) order.push_back(&t);
    std::sort(order.begin(), order.end(), [](Track const * a, Track const * b) { return a->id < b->id; });
    Anchors out;
    std::set<GridIndex> used;
    for (Track const * t : order) {
        Detection const * d = t->at(tracks.present_timestep);
        if (d == nullptr) continue;
        Vec2 const center = to_local(sdv_pose, d->center.position());
        auto const cell = grid.cell_of(center);
        if (!cell) {
            ++out.excluded;
            continue;
        }
        if (!used.insert(*cell).second) ++out.collisions;
        out.tracks.push_back(t->id);
        out.centers.push_back(center);
        out.cells.push_back(*cell);
    }
    return out;
}

PredictionSet rows_to_predictions(Tensor const & rows, Anchors const & anchors, int horizons) {
    PredictionSet out;
    out.excluded = anchors.excluded;
    out.anchor_collisions = anchors.collisions;
    int const width = 4 * horizons;
    if (rows.size() != anchors.tracks.size() * static_cast<std::size_t>(width)) {
        throw ShapeError("rows_to_predictions: expected " + std::to_string(anchors.tracks.size()) + " x " +
                         std::to_string(width) + " rows, got " + rows.shape_string());
    }
    for (std::size_t i = 0; i < anchors.tracks.size(); ++i) {
        AgentPrediction p;
        p.track = anchors.tracks[i];
        p.origin = anchors.centers[i];
        p.anchor = anchors.cells[i];
        for (int h = 0; h < horizons; ++h) {
            std::size_t const base = i * static_cast<std::size_t>(width) + static_cast<std::size_t>(4 * h);
            p.horizons.push_back({rows[base], rows[base + 1], rows[base + 2], rows[base + 3]});
        }
        out.agents.push_back(std::move(p));
    }
    return out;
}

PredictionSet extract_anchored(Tensor const & grid_output, TrackSet const & tracks, Pose2 const & sdv_pose,
                               raster::GridGeometry const & grid) {
    if (grid_output.rank() != 3 || grid_output.dim(0) % 4 != 0 || grid_output.dim(1) != grid.height ||
        grid_output.dim(2) != grid.width) {
        throw ShapeError("extract_anchored: output " + grid_output.shape_string() + " does not match the grid");
    }
    Anchors const anchors = anchor_cells(tracks, sdv_pose, grid);
    int const width = grid_output.dim(0);
    Tensor rows({static_cast<int>(anchors.cells.size()), width});
    for (std::size_t i = 0; i < anchors.cells.size(); ++i) {
        for (int ch = 0; ch < width; ++ch) {
            rows[i * static_cast<std::size_t>(width) + static_cast<std::size_t>(ch)] =
                grid_output.at(ch, anchors.cells[i].iy, anchors.cells[i].ix);
        }
    }
    return rows_to_predictions(rows, anchors, width / 4);
}

PredictionSet predict(ModelConfig const & config, ParamStore & params, TrackSet const & tracks, MapSpec const & map,
                      Pose2 const & sdv_pose) {
    raster::RasterTensor const input = raster::rasterize(tracks, map, sdv_pose, config.raster);
    Anchors const anchors = anchor_cells(tracks, sdv_pose, output_geometry(config));
    if (anchors.cells.empty()) {
        PredictionSet empty;
        empty.excluded = anchors.excluded;
        return empty;
    }
    ad::Graph g(&params);
    ad::Var rows;
    if (config.kind == ModelKind::Hybrid) {
        std::vector<raster::AgentStateSeq> states;
        for (TrackId id : anchors.tracks) {
            states.push_back(raster::agent_state_seq(*tracks.find(id), tracks.present_timestep, config.raster.history_len, sdv_pose));
        }
        rows = forward_hybrid(g, config, input, states, anchors.cells);
    } else {
        rows = forward_anchored(g, config, input, anchors.cells);
    }
    return rows_to_predictions(g.value(rows), anchors, config.cnn.horizons);
}

} // namespace trackbench::models
