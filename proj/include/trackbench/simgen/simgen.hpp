#pragma once

#include "trackbench/core/types.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace trackbench::sim {

enum class MapTemplate { StraightRoad, Intersection, CurvedRoad };
enum class DensityMode { Dense, Sparse, Mixed };
enum class Maneuver { ConstantVelocity, ConstantAcceleration, ConstantTurn, LaneFollow, StopAndGo };
inline constexpr std::size_t kManeuverCount = 5;

/// Neighbor distance thresholds for the dense and sparse slices.
inline constexpr double kDenseRadius = 4.0;
inline constexpr double kSparseRadius = 10.0;

struct SimConfig {
    int n_scenes = 10;
    int duration_steps = 30;
    MapTemplate map_template = MapTemplate::StraightRoad;
    std::pair<int, int> agent_count_range{4, 8};
    std::pair<double, double> speed_range{0.0, 10.0};
    /// Weights in Maneuver order.
    std::array<double, kManeuverCount> maneuver_mix{1.0, 0.0, 0.0, 0.0, 0.0};
    DensityMode density_mode = DensityMode::Mixed;
    std::uint64_t seed = 0;

    /// Frame at which density guarantees hold and the SDV sits at its anchor.
    int present_step = 15;
    double frame_rate = kDefaultFrameRate;
    double sdv_speed = 5.0;
    /// Agents are placed within this half-width box around the present SDV pose.
    double spawn_half_extent = 13.0;
    double max_yaw_rate = 0.3;   // rad/s
    double max_acceleration = 1.5; // m/s^2
    std::array<Extent, kManeuverCount> extents{};
    int max_retries = 1000;
};

void validate(SimConfig const & config);

nlohmann::json to_json(SimConfig const & config);
SimConfig sim_config_from_json(nlohmann::json const & j);

std::string to_string(MapTemplate v);
std::string to_string(DensityMode v);
std::string to_string(Maneuver v);

/// Closed-form motion of one agent, parameterized by its state at the present step.
/// Time is in seconds relative to the present step.
struct AgentMotion {
    Maneuver kind = Maneuver::ConstantVelocity;
    Pose2 anchor;             // pose at t = 0
    double speed = 0.0;       // speed at t = 0 (cruise speed for stop-and-go)
    double acceleration = 0.0;
    double yaw_rate = 0.0;
    // LaneFollow: polyline, arc-length of the anchor projection, lateral offset.
    Polyline lane;
    double lane_s0 = 0.0;
    double lane_offset = 0.0;
    // StopAndGo: decelerate on [brake_start, brake_start + speed/decel], dwell until go_time,
    // then accelerate at `acceleration`.
    double brake_start = 0.0;
    double deceleration = 1.0;
    double go_time = 0.0;

    [[nodiscard]] Pose2 pose_at(double t) const;
    [[nodiscard]] double speed_at(double t) const;
};

/// Generates `config.n_scenes` scenes. Scene i uses the stream (seed, "simgen/scene/i"),
/// so the output does not depend on generation order.
std::vector<Scene> generate(SimConfig const & config);

/// Generates only scene `index` of the corpus described by `config`.
Scene generate_scene(SimConfig const & config, int index);

MapSpec make_map(MapTemplate map_template);

/// Future centers of every agent observed at `present`, in the SDV-centered,
/// heading-aligned frame of the present step. Requires present + horizon <= duration.
GroundTruthFuture ground_truth_future(Scene const & scene, int present, int horizon);

} // namespace trackbench::sim
