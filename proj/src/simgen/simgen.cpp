#include "trackbench/simgen/simgen.hpp"

#include "trackbench/core/error.hpp"
#include "trackbench/core/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>

namespace trackbench::sim {

using nlohmann::json;

namespace {

constexpr double kLaneWidth = 3.5;
constexpr double kCurveRadius = 60.0;
constexpr double kPi = std::numbers::pi;

Vec2 unit(double heading) { return {std::cos(heading), std::sin(heading)}; }

Polyline arc(Vec2 center, double radius, double from, double to, double step) {
    Polyline out;
    int const n = static_cast<int>(std::ceil(std::abs(to - from) / step));
    for (int i = 0; i <= n; ++i) {
        double const a = from + (to - from) * static_cast<double>(i) / n;
        out.push_back(center + radius * unit(a));
    }
    return out;
}

Polygon rect(double x0, double y0, double x1, double y1) {
    return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
}

Polyline reversed(Polyline p) {
    std::reverse(p.begin(), p.end());
    return p;
}

// Index of the lane the SDV drives on, per template.
constexpr std::size_t kSdvLane = 0;

Pose2 sdv_anchor(MapTemplate t) {
    return t == MapTemplate::Intersection ? Pose2{-12.0, -0.5 * kLaneWidth, 0.0} : Pose2{0.0, -0.5 * kLaneWidth, 0.0};
}

struct LaneProjection {
    double s = 0.0;
    double offset = 0.0;
    double heading = 0.0;
    double distance = std::numeric_limits<double>::infinity();
};

LaneProjection project_onto(Polyline const & lane, Vec2 p) {
    LaneProjection best;
    double s_acc = 0.0;
    for (std::size_t i = 0; i + 1 < lane.size(); ++i) {
        Vec2 const a = lane[i];
        Vec2 const d = lane[i + 1] - a;
        double const len = d.norm();
        double const t = std::clamp((p - a).dot(d) / (len * len), 0.0, 1.0);
        Vec2 const foot = a + t * d;
        double const dist = (p - foot).norm();
        if (dist < best.distance) {
            Vec2 const u = (1.0 / len) * d;
            best = {s_acc + t * len, u.cross(p - a), std::atan2(u.y, u.x), dist};
        }
        s_acc += len;
    }
    return best;
}

double polyline_length(Polyline const & lane) {
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < lane.size(); ++i) {
        s += (lane[i + 1] - lane[i]).norm();
    }
    return s;
}

Pose2 polyline_pose(Polyline const & lane, double s, double offset) {
    std::size_t const segments = lane.size() - 1;
    double s_acc = 0.0;
    for (std::size_t i = 0; i < segments; ++i) {
        Vec2 const d = lane[i + 1] - lane[i];
        double const len = d.norm();
        if (s <= s_acc + len || i + 1 == segments) {
            Vec2 const u = (1.0 / len) * d;
            Vec2 const n{-u.y, u.x};
            Vec2 const p = lane[i] + (s - s_acc) * u + offset * n;
            return {p.x, p.y, normalize_angle(std::atan2(u.y, u.x))};
        }
        s_acc += len;
    }
    return {};
}

} // namespace

std::string to_string(MapTemplate v) {
    switch (v) {
    case MapTemplate::StraightRoad: return "straight_road";
    case MapTemplate::Intersection: return "intersection";
    case MapTemplate::CurvedRoad: return "curved_road";
    }
    return "?";
}

std::string to_string(DensityMode v) {
    switch (v) {
    case DensityMode::Dense: return "dense";
    case DensityMode::Sparse: return "sparse";
    case DensityMode::Mixed: return "mixed";
    }
    return "?";
}

std::string to_string(Maneuver v) {
    switch (v) {
    case Maneuver::ConstantVelocity: return "constant_velocity";
    case Maneuver::ConstantAcceleration: return "constant_acceleration";
    case Maneuver::ConstantTurn: return "constant_turn";
    case Maneuver::LaneFollow: return "lane_follow";
    case Maneuver::StopAndGo: return "stop_and_go";
    }
    return "?";
}

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string const & s, std::array<E, N> const & values, char const * what) {
    for (E v : values) {
        if (to_string(v) == s) {
            return v;
        }
    }
    throw FormatError(std::string("unknown ") + what + " '" + s + "'");
}

constexpr std::array kManeuvers{Maneuver::ConstantVelocity, Maneuver::ConstantAcceleration, Maneuver::ConstantTurn,
                                Maneuver::LaneFollow, Maneuver::StopAndGo};

} // namespace

void validate(SimConfig const & c) {
    auto fail = [](std::string const & what) { throw InvariantError("SimConfig: " + what); };
    if (c.n_scenes < 0) fail("n_scenes must be >= 0");
    if (c.duration_steps < 1) fail("duration_steps must be >= 1");
    if (c.present_step < 0 || c.present_step >= c.duration_steps) fail("present_step outside [0, duration_steps)");
    if (c.agent_count_range.first < 0 || c.agent_count_range.first > c.agent_count_range.second)
        fail("agent_count_range must satisfy 0 <= min <= max");
    if (c.speed_range.first < 0.0 || c.speed_range.first > c.speed_range.second)
        fail("speed_range must satisfy 0 <= min <= max");
    double total = 0.0;
    for (double w : c.maneuver_mix) {
        if (!(w >= 0.0)) fail("maneuver weights must be non-negative");
        total += w;
    }
    if (!(total > 0.0)) fail("maneuver weights must sum to a positive value");
    if (c.density_mode == DensityMode::Dense && c.agent_count_range.first < 2)
        fail("dense mode needs at least 2 agents per scene");
    if (!(c.frame_rate > 0.0)) fail("frame_rate must be positive");
    if (!(c.spawn_half_extent > 0.0)) fail("spawn_half_extent must be positive");
    for (auto const & e : c.extents) {
        if (!(e.length > 0.0) || !(e.width > 0.0)) fail("extents must be positive");
    }
    if (c.max_retries < 1) fail("max_retries must be >= 1");
}

json to_json(SimConfig const & c) {
    json mix = json::object();
    json extents = json::object();
    for (std::size_t i = 0; i < kManeuverCount; ++i) {
        mix[to_string(kManeuvers[i])] = c.maneuver_mix[i];
        extents[to_string(kManeuvers[i])] = {c.extents[i].length, c.extents[i].width};
    }
    return {
        {"n_scenes", c.n_scenes},
        {"duration_steps", c.duration_steps},
        {"map_template", to_string(c.map_template)},
        {"agent_count_range", {c.agent_count_range.first, c.agent_count_range.second}},
        {"speed_range", {c.speed_range.first, c.speed_range.second}},
        {"maneuver_mix", mix},
        {"density_mode", to_string(c.density_mode)},
        {"seed", c.seed},
        {"present_step", c.present_step},
        {"frame_rate", c.frame_rate},
        {"sdv_speed", c.sdv_speed},
        {"spawn_half_extent", c.spawn_half_extent},
        {"max_yaw_rate", c.max_yaw_rate},
        {"max_acceleration", c.max_acceleration},
        {"extents", extents},
        {"max_retries", c.max_retries},
    };
}

SimConfig sim_config_from_json(json const & j) {
    SimConfig c;
    try {
        c.n_scenes = j.value("n_scenes", c.n_scenes);
        c.duration_steps = j.value("duration_steps", c.duration_steps);
        if (j.contains("map_template")) {
            c.map_template = parse_enum(j["map_template"].get<std::string>(),
                                        std::array{MapTemplate::StraightRoad, MapTemplate::Intersection,
                                                   MapTemplate::CurvedRoad},
                                        "map_template");
        }
        if (j.contains("agent_count_range")) {
            c.agent_count_range = {j["agent_count_range"].at(0).get<int>(), j["agent_count_range"].at(1).get<int>()};
        }
        if (j.contains("speed_range")) {
            c.speed_range = {j["speed_range"].at(0).get<double>(), j["speed_range"].at(1).get<double>()};
        }
        if (j.contains("maneuver_mix")) {
            c.maneuver_mix.fill(0.0);
            for (auto const & [name, w] : j["maneuver_mix"].items()) {
                auto const m = parse_enum(name, kManeuvers, "maneuver");
                c.maneuver_mix[static_cast<std::size_t>(m)] = w.get<double>();
            }
        }
        if (j.contains("density_mode")) {
            c.density_mode = parse_enum(j["density_mode"].get<std::string>(),
                                        std::array{DensityMode::Dense, DensityMode::Sparse, DensityMode::Mixed},
                                        "density_mode");
        }
        c.seed = j.value("seed", c.seed);
        c.present_step = j.value("present_step", c.present_step);
        c.frame_rate = j.value("frame_rate", c.frame_rate);
        c.sdv_speed = j.value("sdv_speed", c.sdv_speed);
        c.spawn_half_extent = j.value("spawn_half_extent", c.spawn_half_extent);
        c.max_yaw_rate = j.value("max_yaw_rate", c.max_yaw_rate);
        c.max_acceleration = j.value("max_acceleration", c.max_acceleration);
        if (j.contains("extents")) {
            for (auto const & [name, e] : j["extents"].items()) {
                auto const m = parse_enum(name, kManeuvers, "maneuver");
                c.extents[static_cast<std::size_t>(m)] = {e.at(0).get<double>(), e.at(1).get<double>()};
            }
        }
        c.max_retries = j.value("max_retries", c.max_retries);
    } catch (json::exception const & e) {
        throw FormatError(std::string("invalid SimConfig: ") + e.what());
    }
    validate(c);
    return c;
}

Pose2 AgentMotion::pose_at(double t) const {
    switch (kind) {
    case Maneuver::ConstantVelocity: {
        Vec2 const p = anchor.position() + (speed * t) * unit(anchor.heading);
        return {p.x, p.y, anchor.heading};
    }
    case Maneuver::ConstantAcceleration: {
        Vec2 const p = anchor.position() + (speed * t + 0.5 * acceleration * t * t) * unit(anchor.heading);
        return {p.x, p.y, anchor.heading};
    }
    case Maneuver::ConstantTurn: {
        double const h = anchor.heading + yaw_rate * t;
        double const r = speed / yaw_rate;
        return {anchor.x + r * (std::sin(h) - std::sin(anchor.heading)),
                anchor.y + r * (std::cos(anchor.heading) - std::cos(h)), normalize_angle(h)};
    }
    case Maneuver::LaneFollow:
        return polyline_pose(lane, lane_s0 + speed * t, lane_offset);
    case Maneuver::StopAndGo: {
        double const stop = brake_start + speed / deceleration;
        auto distance = [&](double tau) {
            if (tau <= brake_start) {
                return speed * (tau - brake_start);
            }
            if (tau <= stop) {
                double const dt = tau - brake_start;
                return speed * dt - 0.5 * deceleration * dt * dt;
            }
            double const braking = speed * speed / (2.0 * deceleration);
            if (tau <= go_time) {
                return braking;
            }
            double const dt = tau - go_time;
            return braking + 0.5 * acceleration * dt * dt;
        };
        Vec2 const p = anchor.position() + (distance(t) - distance(0.0)) * unit(anchor.heading);
        return {p.x, p.y, anchor.heading};
    }
    }
    return anchor;
}

double AgentMotion::speed_at(double t) const {
    switch (kind) {
    case Maneuver::ConstantAcceleration:
        return std::max(0.0, speed + acceleration * t);
    case Maneuver::StopAndGo: {
        double const stop = brake_start + speed / deceleration;
        if (t <= brake_start) return speed;
        if (t <= stop) return std::max(0.0, speed - deceleration * (t - brake_start));
        if (t <= go_time) return 0.0;
        return acceleration * (t - go_time);
    }
    default:
        return speed;
    }
}

MapSpec make_map(MapTemplate t) {
    MapSpec m;
    double const hw = 2.0 * kLaneWidth;
    double const l1 = 0.5 * kLaneWidth;
    double const l2 = 1.5 * kLaneWidth;
    switch (t) {
    case MapTemplate::StraightRoad:
        m.drivable_polygons.push_back(rect(-150.0, -hw, 150.0, hw));
        m.lanes = {{{-150.0, -l1}, {150.0, -l1}}, {{-150.0, -l2}, {150.0, -l2}},
                   {{150.0, l1}, {-150.0, l1}}, {{150.0, l2}, {-150.0, l2}}};
        m.crosswalk_polygons = {rect(8.0, -hw, 12.0, hw), rect(-40.0, -hw, -36.0, hw)};
        break;
    case MapTemplate::Intersection:
        m.drivable_polygons.push_back({{-150.0, -hw}, {-hw, -hw}, {-hw, -150.0}, {hw, -150.0}, {hw, -hw},
                                       {150.0, -hw}, {150.0, hw}, {hw, hw}, {hw, 150.0}, {-hw, 150.0},
                                       {-hw, hw}, {-150.0, hw}});
        m.lanes = {{{-150.0, -l1}, {150.0, -l1}}, {{-150.0, -l2}, {150.0, -l2}},
                   {{150.0, l1}, {-150.0, l1}}, {{150.0, l2}, {-150.0, l2}},
                   {{l1, -150.0}, {l1, 150.0}}, {{l2, -150.0}, {l2, 150.0}},
                   {{-l1, 150.0}, {-l1, -150.0}}, {{-l2, 150.0}, {-l2, -150.0}}};
        m.crosswalk_polygons = {rect(-hw - 4.0, -hw, -hw - 1.0, hw), rect(hw + 1.0, -hw, hw + 4.0, hw),
                                rect(-hw, -hw - 4.0, hw, -hw - 1.0), rect(-hw, hw + 1.0, hw, hw + 4.0)};
        break;
    case MapTemplate::CurvedRoad: {
        Vec2 const c{0.0, kCurveRadius};
        double const from = -0.5 * kPi - kPi / 3.0;
        double const to = -0.5 * kPi + kPi / 3.0;
        double const step = kPi / 90.0;
        Polygon road = arc(c, kCurveRadius + hw, from, to, step);
        Polyline inner = arc(c, kCurveRadius - hw, to, from, step);
        road.insert(road.end(), inner.begin(), inner.end());
        m.drivable_polygons.push_back(std::move(road));
        m.lanes = {arc(c, kCurveRadius + l1, from, to, step), arc(c, kCurveRadius + l2, from, to, step),
                   reversed(arc(c, kCurveRadius - l1, from, to, step)),
                   reversed(arc(c, kCurveRadius - l2, from, to, step))};
        double const a0 = -0.5 * kPi - 0.20;
        double const a1 = -0.5 * kPi - 0.26;
        m.crosswalk_polygons.push_back({c + (kCurveRadius - hw) * unit(a1), c + (kCurveRadius - hw) * unit(a0),
                                        c + (kCurveRadius + hw) * unit(a0), c + (kCurveRadius + hw) * unit(a1)});
        break;
    }
    }
    return m;
}

namespace {

Maneuver sample_maneuver(SimConfig const & c, Rng & rng) {
    double const total = std::accumulate(c.maneuver_mix.begin(), c.maneuver_mix.end(), 0.0);
    double u = rng.uniform() * total;
    for (std::size_t i = 0; i < kManeuverCount; ++i) {
        if (c.maneuver_mix[i] > 0.0 && u < c.maneuver_mix[i]) {
            return kManeuvers[i];
        }
        u -= c.maneuver_mix[i];
    }
    for (std::size_t i = kManeuverCount; i-- > 0;) {
        if (c.maneuver_mix[i] > 0.0) return kManeuvers[i];
    }
    return Maneuver::ConstantVelocity;
}

struct Placed {
    std::vector<Pose2> poses;
    Extent extent;
    AgentMotion motion;
};

class SceneBuilder {
public:
    SceneBuilder(SimConfig const & c, int index)
        : c_(c), rng_(seeded_rng(c.seed, "simgen/scene/" + std::to_string(index))), map_(make_map(c.map_template)) {
        t_first_ = -c_.present_step / c_.frame_rate;
        t_last_ = (c_.duration_steps - 1 - c_.present_step) / c_.frame_rate;
        char buf[32];
        std::snprintf(buf, sizeof buf, "scene-%05d", index);
        scene_.scene_id = buf;
    }

    Scene build() {
        scene_.duration = c_.duration_steps;
        scene_.frame_rate = c_.frame_rate;
        scene_.map = map_;
        AgentMotion sdv;
        sdv.kind = Maneuver::LaneFollow;
        sdv.lane = map_.lanes[kSdvLane];
        Pose2 const anchor = sdv_anchor(c_.map_template);
        auto const proj = project_onto(sdv.lane, anchor.position());
        sdv.lane_s0 = proj.s;
        sdv.speed = c_.sdv_speed;
        sdv_present_ = sdv.pose_at(0.0);
        Placed sdv_placed{trajectory(sdv), Extent{}, sdv};
        scene_.sdv_trajectory = sdv_placed.poses;
        placed_.push_back(std::move(sdv_placed));

        int const n = rng_.uniform_int(c_.agent_count_range.first, c_.agent_count_range.second);
        if (c_.density_mode == DensityMode::Dense) {
            // Clusters start as a seed plus one attached partner, so no agent is ever left alone.
            // A scene whose clusters jam is laid out again from the continuing stream.
            constexpr int kLayouts = 20;
            bool done = false;
            for (int layout = 0; layout < kLayouts && !done; ++layout) {
                scene_.agents.clear();
                placed_.resize(1);
                done = place_dense(n);
            }
            if (!done) infeasible(static_cast<int>(scene_.agents.size()));
        } else {
            for (int i = 0; i < n; ++i) {
                if (!place_agent(i, Placement::OnLane, c_.max_retries)) infeasible(i);
            }
        }
        validate(scene_);
        return scene_;
    }

private:
    std::vector<Pose2> trajectory(AgentMotion const & m) const {
        std::vector<Pose2> poses;
        poses.reserve(static_cast<std::size_t>(c_.duration_steps));
        for (int step = 0; step < c_.duration_steps; ++step) {
            poses.push_back(m.pose_at(time_of(step)));
        }
        return poses;
    }

    double time_of(int step) const { return (step - c_.present_step) / c_.frame_rate; }

    bool in_spawn_box(Vec2 p) const {
        Vec2 const local = to_local(sdv_present_, p);
        return std::abs(local.x) <= c_.spawn_half_extent && std::abs(local.y) <= c_.spawn_half_extent;
    }

    std::optional<std::pair<Pose2, std::size_t>> sample_on_lane() {
        for (int attempt = 0; attempt < 200; ++attempt) {
            std::size_t const lane = rng_.uniform_index(map_.lanes.size());
            double const s = rng_.uniform(0.0, polyline_length(map_.lanes[lane]));
            Pose2 const pose = polyline_pose(map_.lanes[lane], s, 0.0);
            if (in_spawn_box(pose.position())) {
                return std::pair{pose, lane};
            }
        }
        return std::nullopt;
    }

    double nearest_present_distance(Vec2 p) const {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 1; k < placed_.size(); ++k) {
            best = std::min(best, (placed_[k].poses[static_cast<std::size_t>(c_.present_step)].position() - p).norm());
        }
        return best;
    }

    enum class Placement { OnLane, Attached };

    /// Neighbour moving alongside `leader`: same maneuver, shifted beside it, with a small
    /// speed jitter for maneuvers whose speed can change freely.
    std::optional<AgentMotion> follow(AgentMotion const & leader) {
        double const lateral = (rng_.bernoulli(0.5) ? 1.0 : -1.0) * rng_.uniform(2.3, 3.6);
        double const along = rng_.uniform(-1.5, 1.5);
        AgentMotion m = leader;
        if (m.kind == Maneuver::ConstantVelocity || m.kind == Maneuver::ConstantTurn || m.kind == Maneuver::LaneFollow) {
            m.speed = std::max(0.0, m.speed + rng_.uniform(-0.5, 0.5));
        }
        if (m.kind == Maneuver::LaneFollow) {
            m.lane_s0 += along;
            m.lane_offset += lateral;
            m.anchor = m.pose_at(0.0);
        } else {
            Vec2 const p = to_world(leader.anchor, {along, lateral});
            m.anchor = {p.x, p.y, leader.anchor.heading};
        }
        if (!in_spawn_box(m.anchor.position())) {
            return std::nullopt;
        }
        return m;
    }

    std::optional<AgentMotion> propose(Placement how, std::optional<std::size_t> leader_index) {
        if (how == Placement::Attached) {
            std::size_t const leader = leader_index ? *leader_index : 1 + rng_.uniform_index(placed_.size() - 1);
            return follow(placed_[leader].motion);
        }
        Pose2 present;
        {
            auto const sample = sample_on_lane();
            if (!sample) {
                return std::nullopt;
            }
            present = sample->first;
        }
        if (c_.density_mode == DensityMode::Sparse && nearest_present_distance(present.position()) <= kSparseRadius) {
            return std::nullopt;
        }
        AgentMotion m;
        m.kind = sample_maneuver(c_, rng_);
        m.anchor = present;
        m.speed = rng_.uniform(c_.speed_range.first, c_.speed_range.second);
        switch (m.kind) {
        case Maneuver::ConstantVelocity:
            break;
        case Maneuver::ConstantAcceleration: {
            double a = rng_.uniform(-c_.max_acceleration, c_.max_acceleration);
            // Keep speed non-negative over the whole scene.
            if (t_last_ > 0.0) a = std::max(a, -m.speed / t_last_);
            if (t_first_ < 0.0) a = std::min(a, m.speed / -t_first_);
            m.acceleration = a;
            break;
        }
        case Maneuver::ConstantTurn: {
            double const mag = rng_.uniform(std::min(0.05, c_.max_yaw_rate), c_.max_yaw_rate);
            m.yaw_rate = rng_.bernoulli(0.5) ? mag : -mag;
            if (m.yaw_rate == 0.0) m.kind = Maneuver::ConstantVelocity;
            break;
        }
        case Maneuver::LaneFollow: {
            LaneProjection best;
            std::size_t best_lane = map_.lanes.size();
            for (std::size_t k = 0; k < map_.lanes.size(); ++k) {
                auto const proj = project_onto(map_.lanes[k], present.position());
                if (std::abs(normalize_angle(proj.heading - present.heading)) < kPi / 4.0 && proj.distance < best.distance) {
                    best = proj;
                    best_lane = k;
                }
            }
            if (best_lane == map_.lanes.size()) {
                m.kind = Maneuver::ConstantVelocity;
                break;
            }
            m.lane = map_.lanes[best_lane];
            m.lane_s0 = best.s;
            m.lane_offset = best.offset;
            m.anchor = m.pose_at(0.0);
            break;
        }
        case Maneuver::StopAndGo:
            m.deceleration = rng_.uniform(1.0, 3.0);
            m.acceleration = rng_.uniform(0.3, 1.0) * c_.max_acceleration;
            m.brake_start = rng_.uniform(t_first_, 0.5 * (t_first_ + t_last_));
            m.go_time = m.brake_start + m.speed / m.deceleration + rng_.uniform(0.5, 2.0);
            break;
        }
        return m;
    }

    /// Feasible trajectory for a proposal, or nullopt when it overlaps or violates sparsity.
    std::optional<Placed> realize(std::optional<AgentMotion> const & motion) const {
        if (!motion) return std::nullopt;
        Extent const extent = c_.extents[static_cast<std::size_t>(motion->kind)];
        auto poses = trajectory(*motion);
        if (collides(poses, extent)) return std::nullopt;
        if (c_.density_mode == DensityMode::Sparse &&
            nearest_present_distance(poses[static_cast<std::size_t>(c_.present_step)].position()) <= kSparseRadius) {
            return std::nullopt;
        }
        return Placed{std::move(poses), extent, *motion};
    }

    void commit(int i, AgentMotion const & motion, Placed placed) {
        Track track;
        track.id = i + 1;
        for (int step = 0; step < c_.duration_steps; ++step) {
            Detection d;
            d.center = placed.poses[static_cast<std::size_t>(step)];
            d.extent = placed.extent;
            d.speed = motion.speed_at(time_of(step));
            d.timestep = step;
            track.detections.push_back(d);
        }
        scene_.agents.emplace(track.id, std::move(track));
        placed_.push_back(std::move(placed));
    }

    [[noreturn]] void infeasible(int i) const {
        throw Error("simgen: infeasible placement for agent " + std::to_string(i + 1) + " in " + scene_.scene_id +
                    " after " + std::to_string(c_.max_retries) + " retries (density " + to_string(c_.density_mode) +
                    ", map " + to_string(c_.map_template) + ")");
    }

    bool place_dense(int n) {
        int const tries = std::max(1, c_.max_retries / 10);
        int i = 0;
        while (i < n) {
            bool const room = n - i >= 2;
            bool const pair = i == 0 || (room && rng_.bernoulli(0.25));
            if (!pair && place_agent(i, Placement::Attached, tries)) {
                i += 1;
            } else if (room && place_pair(i, tries)) {
                i += 2;
            } else {
                return false;
            }
        }
        return true;
    }

    bool place_agent(int i, Placement how, int tries) {
        for (int attempt = 0; attempt < tries; ++attempt) {
            auto motion = propose(how, std::nullopt);
            if (auto placed = realize(motion)) {
                commit(i, *motion, std::move(*placed));
                return true;
            }
        }
        return false;
    }

    bool place_pair(int i, int tries) {
        constexpr int kPartnerTries = 20;
        for (int attempt = 0; attempt < tries; ++attempt) {
            auto seed_motion = propose(Placement::OnLane, std::nullopt);
            auto seed = realize(seed_motion);
            if (!seed) continue;
            placed_.push_back(*seed);
            std::size_t const seed_index = placed_.size() - 1;
            for (int k = 0; k < kPartnerTries; ++k) {
                auto partner_motion = propose(Placement::Attached, seed_index);
                if (auto partner = realize(partner_motion)) {
                    placed_.pop_back();
                    commit(i, *seed_motion, std::move(*seed));
                    commit(i + 1, *partner_motion, std::move(*partner));
                    return true;
                }
            }
            placed_.pop_back();
        }
        return false;
    }

    bool collides(std::vector<Pose2> const & poses, Extent e) const {
        for (auto const & other : placed_) {
            for (std::size_t t = 0; t < poses.size(); ++t) {
                if (rectangles_overlap(poses[t], e.length, e.width, other.poses[t], other.extent.length,
                                       other.extent.width)) {
                    return true;
                }
            }
        }
        return false;
    }

    SimConfig const & c_;
    Rng rng_;
    MapSpec map_;
    Scene scene_;
    Pose2 sdv_present_;
    std::vector<Placed> placed_; // index 0 is the SDV
    double t_first_ = 0.0;
    double t_last_ = 0.0;
};

} // namespace

Scene generate_scene(SimConfig const & config, int index) {
    validate(config);
    return SceneBuilder(config, index).build();
}

std::vector<Scene> generate(SimConfig const & config) {
    validate(config);
    std::vector<Scene> scenes;
    scenes.reserve(static_cast<std::size_t>(config.n_scenes));
    for (int i = 0; i < config.n_scenes; ++i) {
        scenes.push_back(SceneBuilder(config, i).build());
    }
    return scenes;
}

GroundTruthFuture ground_truth_future(Scene const & scene, int present, int horizon) {
    if (present < 0 || present >= scene.duration) {
        throw InvariantError("ground_truth_future: present " + std::to_string(present) + " outside scene '" +
                             scene.scene_id + "'");
    }
    if (horizon < 1 || present + horizon > scene.duration) {
        throw InvariantError("ground_truth_future: present + horizon exceeds duration of scene '" + scene.scene_id + "'");
    }
    GroundTruthFuture out;
    out.present = present;
    out.horizon = horizon;
    out.sdv_pose = scene.sdv_trajectory[static_cast<std::size_t>(present)];
    for (auto const & [id, track] : scene.agents) {
        if (track.at(present) == nullptr) {
            continue;
        }
        FutureTrajectory f;
        f.agent = id;
        f.centers.resize(static_cast<std::size_t>(horizon));
        f.headings.resize(static_cast<std::size_t>(horizon), 0.0);
        f.valid.resize(static_cast<std::size_t>(horizon), 0);
        for (int k = 1; k <= horizon; ++k) {
            Detection const * d = track.at(present + k);
            if (d == nullptr) {
                continue;
            }
            auto const i = static_cast<std::size_t>(k - 1);
            f.centers[i] = to_local(out.sdv_pose, d->center.position());
            f.headings[i] = normalize_angle(d->center.heading - out.sdv_pose.heading);
            f.valid[i] = 1;
        }
        out.agents.emplace(id, std::move(f));
    }
    return out;
}

} // namespace trackbench::sim
