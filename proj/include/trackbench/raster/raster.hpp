#pragma once

#include "trackbench/core/tensor.hpp"
#include "trackbench/core/types.hpp"

#include <nlohmann/json_fwd.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace trackbench::raster {

enum class Variant { BinaryHistory, DisplacementField };

std::string to_string(Variant v);

struct RasterConfig {
    int width = 64;  // cells along BEV x
    int height = 64; // cells along BEV y
    double cell_size = 0.5;
    int history_len = 11; // frames, present included
    Variant variant = Variant::BinaryHistory;
    /// Meters mapped to 1.0 when displacement vectors enter the tensor.
    double displacement_scale = 10.0;
};

void validate(RasterConfig const & config);
nlohmann::json to_json(RasterConfig const & config);
RasterConfig raster_config_from_json(nlohmann::json const & j);

/// Number of tensor channels for a configuration: P + 3 or 2P + 3.
int channel_count(RasterConfig const & config);

/// Square-cell grid centered on the BEV origin. Cell (ix, iy) spans
/// [x_min + ix * cell, x_min + (ix + 1) * cell) along x and likewise along y.
struct GridGeometry {
    int width = 0;
    int height = 0;
    double cell_size = 1.0;

    [[nodiscard]] double x_min() const { return -0.5 * width * cell_size; }
    [[nodiscard]] double y_min() const { return -0.5 * height * cell_size; }
    [[nodiscard]] Vec2 cell_center(int ix, int iy) const {
        return {x_min() + (ix + 0.5) * cell_size, y_min() + (iy + 0.5) * cell_size};
    }
    /// Cell containing the BEV point, or nullopt outside the grid.
    [[nodiscard]] std::optional<GridIndex> cell_of(Vec2 bev) const;
};

inline GridGeometry geometry(RasterConfig const & c) { return {c.width, c.height, c.cell_size}; }

enum class ChannelKind { Drivable, Lanes, Crosswalks, Occupancy, DisplacementX, DisplacementY, PresentZero };

struct ChannelDesc {
    ChannelKind kind;
    int frame_offset; // k: the channel describes timestep present - k; -1 for map channels
    friend bool operator==(ChannelDesc, ChannelDesc) = default;
};

/// Channel-major (C x height x width) BEV tensor.
struct RasterTensor {
    Tensor values;
    std::vector<ChannelDesc> layout;

    [[nodiscard]] int channels() const { return values.dim(0); }
    [[nodiscard]] int height() const { return values.dim(1); }
    [[nodiscard]] int width() const { return values.dim(2); }
};

/// Per-cell vector (meters) from an agent's past center to its present center.
struct DisplacementField {
    Tensor field;              // 2 x height x width
    std::vector<std::uint8_t> valid_mask; // height x width
};

/// BEV pose of a world pose relative to the SDV pose.
Pose2 to_bev(Pose2 const & sdv, Pose2 const & world);

/// Drivable, lane, and crosswalk masks (3 x height x width).
Tensor rasterize_map(MapSpec const & map, Pose2 const & sdv_pose, RasterConfig const & config);

/// Calls visit(ix, iy) for every cell whose center lies inside the detection's oriented footprint.
template <typename Visit>
void rasterize_footprint(Detection const & detection, Pose2 const & sdv_pose, GridGeometry const & grid,
                         Visit && visit);

/// Map channels followed by P occupancy channels (k = 0 is the present). Never reads track ids.
RasterTensor rasterize_history(TrackSet const & tracks, MapSpec const & map, Pose2 const & sdv_pose,
                               RasterConfig const & config);

/// Displacement fields for k = 1 .. P-1; entry 0 is all zero with an empty mask.
std::vector<DisplacementField> displacement_fields(TrackSet const & tracks, Pose2 const & sdv_pose,
                                                   RasterConfig const & config);

/// Map channels, then per frame k a channel pair: k = 0 is (present occupancy, zero),
/// k >= 1 is the displacement field divided by displacement_scale.
RasterTensor rasterize_displacement(TrackSet const & tracks, MapSpec const & map, Pose2 const & sdv_pose,
                                    RasterConfig const & config);

/// Dispatches on config.variant.
RasterTensor rasterize(TrackSet const & tracks, MapSpec const & map, Pose2 const & sdv_pose,
                       RasterConfig const & config);

struct StateStep {
    Vec2 displacement; // center at this step minus present center (BEV meters)
    Vec2 change;       // center at this step minus center one step later
    double speed = 0.0;
    bool valid = false;
};

/// Index 0 is the present step (t = 1), index P-1 the oldest.
struct AgentStateSeq {
    TrackId track = 0;
    std::vector<StateStep> steps;
};

inline constexpr int kStateFeatureCount = 6;

/// Throws InvariantError when the track has no present detection.
AgentStateSeq agent_state_seq(Track const & track, int present, int history_len, Pose2 const & sdv_pose);

/// Model input features per step: dx, dy, change_x, change_y, speed / 10, valid.
std::vector<double> state_features(AgentStateSeq const & seq);

/// Portable dump: text header line "trackbench-tensor v1 <rank> <dims...>" then raw little-endian doubles.
void write_tensor_file(Tensor const & tensor, std::filesystem::path const & path);
Tensor read_tensor_file(std::filesystem::path const & path);

// -- template implementation --

template <typename Visit>
void rasterize_footprint(Detection const & d, Pose2 const & sdv_pose, GridGeometry const & grid, Visit && visit) {
    Pose2 const bev = to_bev(sdv_pose, d.center);
    double const r = 0.5 * std::hypot(d.extent.length, d.extent.width);
    int const ix0 = std::max(0, static_cast<int>(std::floor((bev.x - r - grid.x_min()) / grid.cell_size)));
    int const ix1 = std::min(grid.width - 1, static_cast<int>(std::floor((bev.x + r - grid.x_min()) / grid.cell_size)));
    int const iy0 = std::max(0, static_cast<int>(std::floor((bev.y - r - grid.y_min()) / grid.cell_size)));
    int const iy1 = std::min(grid.height - 1, static_cast<int>(std::floor((bev.y + r - grid.y_min()) / grid.cell_size)));
    for (int iy = iy0; iy <= iy1; ++iy) {
        for (int ix = ix0; ix <= ix1; ++ix) {
            if (rectangle_contains(bev, d.extent.length, d.extent.width, grid.cell_center(ix, iy))) {
                visit(ix, iy);
            }
        }
    }
}

} // namespace trackbench::raster
