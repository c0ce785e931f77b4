#pragma once

#include "trackbench/core/geometry.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace trackbench {

using AgentId = std::int64_t;
using TrackId = std::int64_t;

inline constexpr double kDefaultFrameRate = 10.0;

/// Column/row index of a BEV grid cell.
struct GridIndex {
    int ix = 0;
    int iy = 0;
    friend bool operator==(GridIndex, GridIndex) = default;
    friend auto operator<=>(GridIndex, GridIndex) = default;
};

struct Extent {
    double length = 4.5;
    double width = 2.0;
    friend bool operator==(Extent const &, Extent const &) = default;
};

/// One pose estimate of an agent at a 10 Hz frame index.
struct Detection {
    Pose2 center;
    Extent extent;
    double speed = 0.0; // m/s
    int timestep = 0;
    friend bool operator==(Detection const &, Detection const &) = default;
};

struct Track {
    TrackId id = 0;
    std::vector<Detection> detections; // strictly increasing timestep

    [[nodiscard]] Detection const * at(int timestep) const;
    [[nodiscard]] Detection * at(int timestep);
    friend bool operator==(Track const &, Track const &) = default;
};

/// Tracked agents over a history window ending at the present frame.
/// `history_len` counts frames including the present one.
struct TrackSet {
    std::vector<Track> tracks;
    int present_timestep = 0;
    int history_len = 1;

    [[nodiscard]] int first_timestep() const { return present_timestep - history_len + 1; }
    [[nodiscard]] Track const * find(TrackId id) const;
    friend bool operator==(TrackSet const &, TrackSet const &) = default;
};

struct MapSpec {
    std::vector<Polygon> drivable_polygons;
    std::vector<Polyline> lanes;
    std::vector<Polygon> crosswalk_polygons;
    friend bool operator==(MapSpec const &, MapSpec const &) = default;
};

struct Scene {
    std::string scene_id;
    int duration = 0;
    double frame_rate = kDefaultFrameRate;
    std::vector<Pose2> sdv_trajectory;
    std::map<AgentId, Track> agents;
    MapSpec map;
    friend bool operator==(Scene const &, Scene const &) = default;
};

/// Future centers of one agent in the SDV-centered frame of the present timestep.
struct FutureTrajectory {
    AgentId agent = 0;
    std::vector<Vec2> centers;
    std::vector<double> headings;
    std::vector<std::uint8_t> valid;

    [[nodiscard]] int valid_count() const;
};

struct GroundTruthFuture {
    int present = 0;
    int horizon = 0;
    Pose2 sdv_pose; // world pose defining the frame
    std::map<AgentId, FutureTrajectory> agents;
};

/// Throws InvariantError naming the scene and field on the first violation.
void validate(Scene const & scene);
void validate(TrackSet const & tracks);
void validate(Detection const & detection, std::string const & where);

} // namespace trackbench
