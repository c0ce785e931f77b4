#include "support.hpp"

#include "trackbench/core/error.hpp"
#include "trackbench/simgen/simgen.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>

using namespace trackbench;
using sim::AgentMotion;
using sim::Maneuver;

namespace {

/// Unicycle model integrated with many midpoint substeps: x' = v cos h, y' = v sin h, h' = w, v' = a.
Pose2 integrate(Pose2 start, double v, double a, double w, double t, int substeps = 1000) {
    double const dt = t / substeps;
    double x = start.x, y = start.y, h = start.heading;
    for (int i = 0; i < substeps; ++i) {
        double const hm = h + 0.5 * w * dt;
        double const vm = v + 0.5 * a * dt;
        x += vm * std::cos(hm) * dt;
        y += vm * std::sin(hm) * dt;
        h += w * dt;
        v += a * dt;
    }
    return {x, y, normalize_angle(h)};
}

double nearest(Scene const & s, AgentId id, int t) {
    Vec2 const p = s.agents.at(id).at(t)->center.position();
    double best = std::numeric_limits<double>::infinity();
    for (auto const & [other, track] : s.agents) {
        if (other == id || track.at(t) == nullptr) continue;
        best = std::min(best, (track.at(t)->center.position() - p).norm());
    }
    return best;
}

} // namespace

TEST_CASE("constant turn matches a numerically integrated unicycle") {
    for (double w : {0.3, -0.2, 0.05}) {
        AgentMotion m;
        m.kind = Maneuver::ConstantTurn;
        m.anchor = {3.0, -2.0, 0.7};
        m.speed = 6.0;
        m.yaw_rate = w;
        for (double t : {-1.5, 0.5, 1.0, 2.0}) {
            Pose2 const want = integrate(m.anchor, m.speed, 0.0, w, t);
            Pose2 const got = m.pose_at(t);
            CHECK(got.x == doctest::Approx(want.x).epsilon(1e-6));
            CHECK(got.y == doctest::Approx(want.y).epsilon(1e-6));
            CHECK(got.heading == doctest::Approx(want.heading).epsilon(1e-9));
        }
    }
}

TEST_CASE("constant acceleration matches a numerically integrated unicycle") {
    AgentMotion m;
    m.kind = Maneuver::ConstantAcceleration;
    m.anchor = {0.0, 1.0, -2.0};
    m.speed = 4.0;
    m.acceleration = 1.2;
    for (double t : {-1.0, 0.7, 1.4}) {
        Pose2 const want = integrate(m.anchor, m.speed, m.acceleration, 0.0, t);
        Pose2 const got = m.pose_at(t);
        CHECK(got.x == doctest::Approx(want.x).epsilon(1e-9));
        CHECK(got.y == doctest::Approx(want.y).epsilon(1e-9));
        CHECK(m.speed_at(t) == doctest::Approx(4.0 + 1.2 * t));
    }
}

TEST_CASE("stop and go halts then resumes") {
    AgentMotion m;
    m.kind = Maneuver::StopAndGo;
    m.anchor = {0.0, 0.0, 0.0};
    m.speed = 4.0;
    m.brake_start = 0.0;
    m.deceleration = 2.0; // stops at t = 2
    m.go_time = 3.0;
    m.acceleration = 1.0;
    CHECK(m.speed_at(1.0) == doctest::Approx(2.0));
    CHECK(m.speed_at(2.5) == 0.0);
    CHECK(m.pose_at(2.5).x == doctest::Approx(4.0)); // v^2 / (2 d)
    CHECK(m.pose_at(2.9).x == doctest::Approx(4.0));
    CHECK(m.pose_at(4.0).x == doctest::Approx(4.5));
    CHECK(m.pose_at(-1.0).x == doctest::Approx(-4.0));
}

TEST_CASE("generation is deterministic and order independent") {
    auto const c = testing::small_config(21, 8);
    auto const a = sim::generate(c);
    auto const b = sim::generate(c);
    CHECK(a == b);
    CHECK(sim::generate_scene(c, 5) == a[5]);
    auto c2 = c;
    c2.seed = 22;
    CHECK_FALSE(sim::generate(c2)[0] == a[0]);
}

TEST_CASE("generated scenes satisfy kinematic and layout invariants") {
    for (auto map : {sim::MapTemplate::StraightRoad, sim::MapTemplate::Intersection, sim::MapTemplate::CurvedRoad}) {
        auto c = testing::small_config(23, 12);
        c.map_template = map;
        c.maneuver_mix = {1, 1, 1, 1, 1};
        for (Scene const & s : sim::generate(c)) {
            CHECK_NOTHROW(validate(s));
            REQUIRE(static_cast<int>(s.sdv_trajectory.size()) == c.duration_steps);
            int const n = static_cast<int>(s.agents.size());
            CHECK(n >= c.agent_count_range.first);
            CHECK(n <= c.agent_count_range.second);
            Pose2 const sdv = s.sdv_trajectory[static_cast<std::size_t>(c.present_step)];
            for (auto const & [id, track] : s.agents) {
                REQUIRE(static_cast<int>(track.detections.size()) == c.duration_steps);
                Vec2 const local = to_local(sdv, track.at(c.present_step)->center.position());
                CHECK(std::abs(local.x) <= c.spawn_half_extent + 1e-9);
                CHECK(std::abs(local.y) <= c.spawn_half_extent + 1e-9);
                for (auto const & d : track.detections) {
                    CHECK(d.speed >= 0.0);
                    CHECK(is_normalized_angle(d.center.heading));
                }
            }
            // No two footprints overlap at any frame.
            for (int t = 0; t < c.duration_steps; t += 3) {
                for (auto const & [i, ti] : s.agents) {
                    for (auto const & [j, tj] : s.agents) {
                        if (j <= i) continue;
                        Detection const & a = *ti.at(t);
                        Detection const & b = *tj.at(t);
                        CHECK_FALSE(rectangles_overlap(a.center, a.extent.length, a.extent.width, b.center,
                                                       b.extent.length, b.extent.width));
                    }
                }
            }
        }
    }
}

TEST_CASE("density modes hold at the present frame") {
    for (auto map : {sim::MapTemplate::StraightRoad, sim::MapTemplate::Intersection}) {
        auto dense = testing::small_config(24, 30, sim::DensityMode::Dense);
        dense.map_template = map;
        for (Scene const & s : sim::generate(dense)) {
            for (auto const & [id, track] : s.agents) CHECK(nearest(s, id, dense.present_step) < sim::kDenseRadius);
        }
        auto sparse = testing::small_config(25, 30, sim::DensityMode::Sparse);
        sparse.map_template = map;
        sparse.agent_count_range = {1, 3};
        for (Scene const & s : sim::generate(sparse)) {
            for (auto const & [id, track] : s.agents) CHECK(nearest(s, id, sparse.present_step) > sim::kSparseRadius);
        }
    }
}

TEST_CASE("ground truth future is expressed in the present SDV frame") {
    Scene const s = sim::generate(testing::small_config(26, 1))[0];
    auto const gt = sim::ground_truth_future(s, 15, 5);
    Pose2 const sdv = s.sdv_trajectory[15];
    CHECK(gt.sdv_pose == sdv);
    for (auto const & [id, f] : gt.agents) {
        REQUIRE(f.centers.size() == 5);
        for (int k = 1; k <= 5; ++k) {
            Pose2 const w = s.agents.at(id).at(15 + k)->center;
            double const dx = w.x - sdv.x, dy = w.y - sdv.y;
            double const c = std::cos(sdv.heading), sn = std::sin(sdv.heading);
            CHECK(f.centers[static_cast<std::size_t>(k - 1)].x == doctest::Approx(c * dx + sn * dy));
            CHECK(f.centers[static_cast<std::size_t>(k - 1)].y == doctest::Approx(-sn * dx + c * dy));
            CHECK(f.valid[static_cast<std::size_t>(k - 1)] == 1);
        }
    }
    CHECK_THROWS_AS(sim::ground_truth_future(s, 28, 5), InvariantError);
}

TEST_CASE("sim config validation and json round trip") {
    auto c = testing::small_config(27, 3);
    c.maneuver_mix = {0.5, 0, 0.25, 0.25, 0};
    auto const back = sim::sim_config_from_json(sim::to_json(c));
    CHECK(sim::to_json(back) == sim::to_json(c));
    auto bad = c;
    bad.agent_count_range = {5, 2};
    CHECK_THROWS_AS(sim::validate(bad), InvariantError);
    bad = c;
    bad.maneuver_mix = {0, 0, 0, 0, 0};
    CHECK_THROWS_AS(sim::validate(bad), InvariantError);
    bad = c;
    bad.present_step = 40;
    CHECK_THROWS_AS(sim::validate(bad), InvariantError);
}

TEST_CASE("infeasible layouts fail loudly") {
    auto c = testing::small_config(28, 1, sim::DensityMode::Sparse);
    c.agent_count_range = {30, 30};
    c.max_retries = 50;
    CHECK_THROWS_AS(sim::generate(c), Error);
}
