#include "trackbench/raster/raster.hpp"

#include "trackbench/core/error.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <fstream>
#include <numbers>
#include <sstream>

namespace trackbench::raster {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "tensor and checkpoint files assume a little-endian host");

std::string to_string(Variant v) {
    return v == Variant::BinaryHistory ? "binary_history" : "displacement_field";
}

void validate(RasterConfig const & c) {
    if (c.width <= 0 || c.height <= 0) throw InvariantError("RasterConfig: width and height must be positive");
    if (!(c.cell_size > 0.0) || !std::isfinite(c.cell_size)) throw InvariantError("RasterConfig: cell_size must be positive");
    if (c.history_len < 1) throw InvariantError("RasterConfig: history_len must be >= 1");
    if (!(c.displacement_scale > 0.0)) throw InvariantError("RasterConfig: displacement_scale must be positive");
}

json to_json(RasterConfig const & c) {
    return {{"width", c.width},
            {"height", c.height},
            {"cell_size", c.cell_size},
            {"history_len", c.history_len},
            {"variant", to_string(c.variant)},
            {"displacement_scale", c.displacement_scale}};
}

RasterConfig raster_config_from_json(json const & j) {
    RasterConfig c;
    try {
        c.width = j.value("width", c.width);
        c.height = j.value("height", c.height);
        c.cell_size = j.value("cell_size", c.cell_size);
        c.history_len = j.value("history_len", c.history_len);
        c.displacement_scale = j.value("displacement_scale", c.displacement_scale);
        if (j.contains("variant")) {
            auto const v = j["variant"].get<std::string>();
            if (v == "binary_history") c.variant = Variant::BinaryHistory;
            else if (v == "displacement_field") c.variant = Variant::DisplacementField;
            else throw FormatError("unknown raster variant '" + v + "'");
        }
    } catch (json::exception const & e) {
        throw FormatError(std::string("invalid RasterConfig: ") + e.what());
    }
    validate(c);
    return c;
}

int channel_count(RasterConfig const & c) {
    return c.variant == Variant::BinaryHistory ? c.history_len + 3 : 2 * c.history_len + 3;
}

std::optional<GridIndex> GridGeometry::cell_of(Vec2 bev) const {
    double const fx = std::floor((bev.x - x_min()) / cell_size);
    double const fy = std::floor((bev.y - y_min()) / cell_size);
    if (fx < 0.0 || fy < 0.0 || fx >= width || fy >= height) {
        return std::nullopt;
    }
    return GridIndex{static_cast<int>(fx), static_cast<int>(fy)};
}

Pose2 to_bev(Pose2 const & sdv, Pose2 const & world) {
    Vec2 const p = to_local(sdv, world.position());
    return {p.x, p.y, normalize_angle(world.heading - sdv.heading)};
}

namespace {

struct CellRange {
    int ix0, ix1, iy0, iy1;
};

CellRange cells_overlapping(GridGeometry const & g, double x0, double x1, double y0, double y1) {
    auto idx = [](double v, double lo, double cell, int n) {
        double const f = std::floor((v - lo) / cell);
        return static_cast<int>(std::clamp(f, -1.0, static_cast<double>(n)));
    };
    return {std::max(0, idx(x0, g.x_min(), g.cell_size, g.width)),
            std::min(g.width - 1, idx(x1, g.x_min(), g.cell_size, g.width)),
            std::max(0, idx(y0, g.y_min(), g.cell_size, g.height)),
            std::min(g.height - 1, idx(y1, g.y_min(), g.cell_size, g.height))};
}

void fill_polygon(Tensor & out, int channel, Polygon const & world_poly, Pose2 const & sdv, GridGeometry const & g) {
    if (world_poly.size() < 3) return;
    Polygon poly;
    poly.reserve(world_poly.size());
    double x0 = std::numeric_limits<double>::infinity(), y0 = x0, x1 = -x0, y1 = -x0;
    for (Vec2 v : world_poly) {
        Vec2 const p = to_local(sdv, v);
        poly.push_back(p);
        x0 = std::min(x0, p.x);
        x1 = std::max(x1, p.x);
        y0 = std::min(y0, p.y);
        y1 = std::max(y1, p.y);
    }
    auto const r = cells_overlapping(g, x0, x1, y0, y1);
    for (int iy = r.iy0; iy <= r.iy1; ++iy) {
        for (int ix = r.ix0; ix <= r.ix1; ++ix) {
            if (point_in_polygon(poly, g.cell_center(ix, iy))) {
                out.at(channel, iy, ix) = 1.0;
            }
        }
    }
}

void draw_polyline(Tensor & out, int channel, Polyline const & world_line, Pose2 const & sdv, GridGeometry const & g) {
    double const reach = 0.5 * std::numbers::sqrt2 * g.cell_size;
    for (std::size_t i = 0; i + 1 < world_line.size(); ++i) {
        Vec2 const a = to_local(sdv, world_line[i]);
        Vec2 const b = to_local(sdv, world_line[i + 1]);
        auto const r = cells_overlapping(g, std::min(a.x, b.x) - reach, std::max(a.x, b.x) + reach,
                                         std::min(a.y, b.y) - reach, std::max(a.y, b.y) + reach);
        for (int iy = r.iy0; iy <= r.iy1; ++iy) {
            for (int ix = r.ix0; ix <= r.ix1; ++ix) {
                if (point_segment_distance(g.cell_center(ix, iy), a, b) <= reach) {
                    out.at(channel, iy, ix) = 1.0;
                }
            }
        }
    }
}

std::vector<Track const *> canonical_order(TrackSet const & tracks) {
    std::vector<Track const *> order;
    for (auto const & t : tracks.tracks) order.push_back(&t);
    std::sort(order.begin(), order.end(), [](Track const * a, Track const * b) { return a->id < b->id; });
    return order;
}

void check_history(TrackSet const & tracks, RasterConfig const & c) {
    validate(c);
    if (tracks.history_len != c.history_len) {
        throw ShapeError("raster: trackset history_len " + std::to_string(tracks.history_len) +
                         " differs from config history_len " + std::to_string(c.history_len));
    }
}

void copy_map(Tensor & dst, Tensor const & map) {
    std::copy(map.values().begin(), map.values().end(), dst.values().begin());
}

} // namespace

Tensor rasterize_map(MapSpec const & map, Pose2 const & sdv_pose, RasterConfig const & config) {
    validate(config);
    GridGeometry const g = geometry(config);
    Tensor out({3, config.height, config.width});
    for (auto const & poly : map.drivable_polygons) fill_polygon(out, 0, poly, sdv_pose, g);
    for (auto const & lane : map.lanes) draw_polyline(out, 1, lane, sdv_pose, g);
    for (auto const & poly : map.crosswalk_polygons) fill_polygon(out, 2, poly, sdv_pose, g);
    return out;
}

RasterTensor rasterize_history(TrackSet const & tracks, MapSpec const & map, Pose2 const & sdv_pose,
                               RasterConfig const & config) {
    check_history(tracks, config);
    GridGeometry const g = geometry(config);
    int const frames = config.history_len;
    RasterTensor out;
    out.values = Tensor({frames + 3, config.height, config.width});
    copy_map(out.values, rasterize_map(map, sdv_pose, config));
    out.layout = {{ChannelKind::Drivable, -1}, {ChannelKind::Lanes, -1}, {ChannelKind::Crosswalks, -1}};
    for (int k = 0; k < frames; ++k) out.layout.push_back({ChannelKind::Occupancy, k});
    for (auto const & track : tracks.tracks) {
        for (auto const & d : track.detections) {
            int const k = tracks.present_timestep - d.timestep;
            if (k < 0 || k >= frames) continue;
            rasterize_footprint(d, sdv_pose, g, [&](int ix, int iy) { out.values.at(3 + k, iy, ix) = 1.0; });
        }
    }
    return out;
}

std::vector<DisplacementField> displacement_fields(TrackSet const & tracks, Pose2 const & sdv_pose,
                                                   RasterConfig const & config) {
    check_history(tracks, config);
    GridGeometry const g = geometry(config);
    auto const cells = static_cast<std::size_t>(config.width) * static_cast<std::size_t>(config.height);
    std::vector<DisplacementField> fields(static_cast<std::size_t>(config.history_len));
    for (auto & f : fields) {
        f.field = Tensor({2, config.height, config.width});
        f.valid_mask.assign(cells, 0);
    }
    int const present = tracks.present_timestep;
    for (Track const * track : canonical_order(tracks)) {
        Detection const * now = track->at(present);
        if (now == nullptr) continue;
        Vec2 const anchor = to_local(sdv_pose, now->center.position());
        for (int k = 1; k < config.history_len; ++k) {
            Detection const * past = track->at(present - k);
            if (past == nullptr) continue;
            Vec2 const delta = anchor - to_local(sdv_pose, past->center.position());
            auto & f = fields[static_cast<std::size_t>(k)];
            rasterize_footprint(*past, sdv_pose, g, [&](int ix, int iy) {
                f.field.at(0, iy, ix) = delta.x;
                f.field.at(1, iy, ix) = delta.y;
                f.valid_mask[static_cast<std::size_t>(iy) * static_cast<std::size_t>(config.width) +
                             static_cast<std::size_t>(ix)] = 1;
            });
        }
    }
    return fields;
}

RasterTensor rasterize_displacement(TrackSet const & tracks, MapSpec const & map, Pose2 const & sdv_pose,
                                    RasterConfig const & config) {
    auto const fields = displacement_fields(tracks, sdv_pose, config);
    GridGeometry const g = geometry(config);
    int const frames = config.history_len;
    RasterTensor out;
    out.values = Tensor({2 * frames + 3, config.height, config.width});
    copy_map(out.values, rasterize_map(map, sdv_pose, config));
    out.layout = {{ChannelKind::Drivable, -1}, {ChannelKind::Lanes, -1}, {ChannelKind::Crosswalks, -1},
                  {ChannelKind::Occupancy, 0}, {ChannelKind::PresentZero, 0}};
    for (auto const & track : tracks.tracks) {
        if (Detection const * now = track.at(tracks.present_timestep)) {
            rasterize_footprint(*now, sdv_pose, g, [&](int ix, int iy) { out.values.at(3, iy, ix) = 1.0; });
        }
    }
    double const scale = config.displacement_scale;
    for (int k = 1; k < frames; ++k) {
        out.layout.push_back({ChannelKind::DisplacementX, k});
        out.layout.push_back({ChannelKind::DisplacementY, k});
        auto const & f = fields[static_cast<std::size_t>(k)];
        for (int iy = 0; iy < config.height; ++iy) {
            for (int ix = 0; ix < config.width; ++ix) {
                out.values.at(3 + 2 * k, iy, ix) = f.field.at(0, iy, ix) / scale;
                out.values.at(4 + 2 * k, iy, ix) = f.field.at(1, iy, ix) / scale;
            }
        }
    }
    return out;
}

RasterTensor rasterize(TrackSet const & tracks, MapSpec const & map, Pose2 const & sdv_pose,
                       RasterConfig const & config) {
    return config.variant == Variant::BinaryHistory ? rasterize_history(tracks, map, sdv_pose, config)
                                                    : rasterize_displacement(tracks, map, sdv_pose, config);
}

AgentStateSeq agent_state_seq(Track const & track, int present, int history_len, Pose2 const & sdv_pose) {
    Detection const * now = track.at(present);
    if (now == nullptr) {
        throw InvariantError("agent_state_seq: track " + std::to_string(track.id) + " has no detection at present " +
                             std::to_string(present));
    }
    if (history_len < 1) throw InvariantError("agent_state_seq: history_len must be >= 1");
    AgentStateSeq seq;
    seq.track = track.id;
    seq.steps.resize(static_cast<std::size_t>(history_len));
    Vec2 const anchor = to_local(sdv_pose, now->center.position());
    for (int k = 0; k < history_len; ++k) {
        Detection const * d = track.at(present - k);
        if (d == nullptr) continue;
        auto & s = seq.steps[static_cast<std::size_t>(k)];
        Vec2 const here = to_local(sdv_pose, d->center.position());
        s.displacement = here - anchor;
        s.speed = d->speed;
        s.valid = true;
        if (k > 0) {
            if (Detection const * later = track.at(present - k + 1)) {
                s.change = here - to_local(sdv_pose, later->center.position());
            }
        }
    }
    seq.steps.front().displacement = {};
    return seq;
}

std::vector<double> state_features(AgentStateSeq const & seq) {
    std::vector<double> out;
    out.reserve(seq.steps.size() * kStateFeatureCount);
    for (auto const & s : seq.steps) {
        out.insert(out.end(), {s.displacement.x, s.displacement.y, s.change.x, s.change.y, 0.1 * s.speed,
                               s.valid ? 1.0 : 0.0});
    }
    return out;
}

void write_tensor_file(Tensor const & tensor, std::filesystem::path const & path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open tensor file for writing: " + path.string());
    out << "trackbench-tensor v1 " << tensor.rank();
    for (int d : tensor.shape()) out << ' ' << d;
    out << '\n';
    out.write(reinterpret_cast<char const *>(tensor.data()), static_cast<std::streamsize>(tensor.size() * sizeof(double)));
    if (!out) throw Error("failed writing tensor file: " + path.string());
}

Tensor read_tensor_file(std::filesystem::path const & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open tensor file: " + path.string());
    std::string line;
    std::getline(in, line);
    std::istringstream header(line);
    std::string magic, version;
    std::size_t rank = 0;
    header >> magic >> version >> rank;
    if (magic != "trackbench-tensor" || version != "v1") throw FormatError("not a trackbench tensor file: " + path.string());
    std::vector<int> shape(rank);
    for (auto & d : shape) header >> d;
    if (!header) throw FormatError("malformed tensor header: " + path.string());
    std::vector<double> data(element_count(shape));
    in.read(reinterpret_cast<char *>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(data.size() * sizeof(double)))
        throw FormatError("truncated tensor file: " + path.string());
    return Tensor(std::move(shape), std::move(data));
}

} // namespace trackbench::raster
