#include "trackbench/core/types.hpp"

#include "trackbench/core/error.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace trackbench {

Detection const * Track::at(int timestep) const {
    auto it = std::lower_bound(detections.begin(), detections.end(), timestep,
                               [](Detection const & d, int t) { return d.timestep < t; });
    return it != detections.end() && it->timestep == timestep ? &*it : nullptr;
}

Detection * Track::at(int timestep) {
    return const_cast<Detection *>(std::as_const(*this).at(timestep));
}

Track const * TrackSet::find(TrackId id) const {
    auto it = std::find_if(tracks.begin(), tracks.end(), [&](Track const & t) { return t.id == id; });
    return it != tracks.end() ? &*it : nullptr;
}

int FutureTrajectory::valid_count() const {
    return static_cast<int>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

namespace {

[[noreturn]] void fail(std::string const & where, std::string const & what) {
    throw InvariantError(where + ": " + what);
}

void check_finite(double v, std::string const & where, char const * field) {
    if (!std::isfinite(v)) {
        fail(where, std::string(field) + " is not finite");
    }
}

void check_pose(Pose2 const & p, std::string const & where) {
    check_finite(p.x, where, "x");
    check_finite(p.y, where, "y");
    check_finite(p.heading, where, "heading");
    if (!is_normalized_angle(p.heading)) {
        fail(where, "heading " + std::to_string(p.heading) + " not normalized into (-pi, pi]");
    }
}

void check_track(Track const & track, std::string const & where) {
    if (track.detections.empty()) {
        fail(where, "track has no detections");
    }
    for (std::size_t i = 0; i < track.detections.size(); ++i) {
        validate(track.detections[i], where);
        if (i > 0 && track.detections[i].timestep <= track.detections[i - 1].timestep) {
            fail(where, "detection timesteps not strictly increasing");
        }
    }
}

} // namespace

void validate(Detection const & d, std::string const & where) {
    check_pose(d.center, where);
    check_finite(d.extent.length, where, "length");
    check_finite(d.extent.width, where, "width");
    check_finite(d.speed, where, "speed");
    if (!(d.extent.length > 0.0) || !(d.extent.width > 0.0)) {
        fail(where, "extent must be positive");
    }
    if (d.speed < 0.0) {
        fail(where, "speed must be non-negative");
    }
}

void validate(Scene const & scene) {
    std::string const where = "scene '" + scene.scene_id + "'";
    if (scene.duration <= 0) {
        fail(where, "duration must be positive");
    }
    check_finite(scene.frame_rate, where, "frame_rate");
    if (!(scene.frame_rate > 0.0)) {
        fail(where, "frame_rate must be positive");
    }
    if (static_cast<int>(scene.sdv_trajectory.size()) != scene.duration) {
        fail(where, "sdv_trajectory length differs from duration");
    }
    for (auto const & pose : scene.sdv_trajectory) {
        check_pose(pose, where + " sdv_trajectory");
    }
    for (auto const & [id, track] : scene.agents) {
        std::string const agent_where = where + " agent " + std::to_string(id);
        if (track.id != id) {
            fail(agent_where, "track id differs from its key");
        }
        check_track(track, agent_where);
        if (track.detections.front().timestep < 0 || track.detections.back().timestep >= scene.duration) {
            fail(agent_where, "detection timestep outside [0, duration)");
        }
    }
    auto check_points = [&](std::vector<Vec2> const & pts, std::string const & field) {
        for (Vec2 p : pts) {
            check_finite(p.x, where + " " + field, "x");
            check_finite(p.y, where + " " + field, "y");
        }
    };
    for (auto const & poly : scene.map.drivable_polygons) {
        check_points(poly, "drivable_polygons");
        if (!polygon_is_simple(poly)) {
            fail(where, "drivable polygon is not simple");
        }
    }
    for (auto const & poly : scene.map.crosswalk_polygons) {
        check_points(poly, "crosswalk_polygons");
        if (!polygon_is_simple(poly)) {
            fail(where, "crosswalk polygon is not simple");
        }
    }
    for (auto const & lane : scene.map.lanes) {
        check_points(lane, "lanes");
        if (lane.size() < 2) {
            fail(where, "lane polyline needs at least 2 vertices");
        }
    }
}

void validate(TrackSet const & set) {
    if (set.history_len < 1) {
        throw InvariantError("trackset: history_len must be >= 1");
    }
    std::set<TrackId> seen;
    for (auto const & track : set.tracks) {
        std::string const where = "trackset track " + std::to_string(track.id);
        if (!seen.insert(track.id).second) {
            fail(where, "duplicate track id");
        }
        check_track(track, where);
        if (track.detections.back().timestep > set.present_timestep) {
            fail(where, "detection after the present timestep");
        }
    }
}

} // namespace trackbench
